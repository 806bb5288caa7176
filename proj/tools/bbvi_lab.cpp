#include <bbvi/cli.hpp>

#include <iostream>

int main(int argc, char** argv) {
  return bbvi::cli::run_cli(argc, argv, std::cout, std::cerr);
}
