#ifndef BBVI_RANDOM_HPP
#define BBVI_RANDOM_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace bbvi {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/**
 * Seed of the index-th independent stream under `base`. Replication r of an
 * experiment uses derive_seed(base, r) = base xor r; deeper levels chain
 * calls. Streams hash their seed before use, so nearby seeds do not give
 * correlated draws.
 */
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return base ^ index;
}

/**
 * Random stream owned by the caller. Copying clones the stream, which is how
 * common-random-number comparisons (e.g. CFE vs STL at equal draws) are made.
 */
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  Eigen::VectorXd normal_vector(Eigen::Index d) {
    Eigen::VectorXd u(d);
    for (Eigen::Index i = 0; i < d; ++i) u[i] = normal();
    return u;
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd g(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = normal();
    return g;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace bbvi

#endif
