#ifndef BBVI_CLI_HPP
#define BBVI_CLI_HPP

#include <bbvi/harness.hpp>
#include <bbvi/theory.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace bbvi::cli {

enum ExitCode : int { kSuccess = 0, kVerificationFailure = 1, kConfigError = 2 };

inline nlohmann::ordered_json to_json(const theory::VerificationReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.check_name;
  j["status"] = theory::to_string(r.status);
  j["statistic"] = r.statistic;
  j["tolerance"] = r.tolerance;
  j["seed"] = r.seed;
  j["detail"] = r.detail;
  return j;
}

inline void write_report_jsonl(std::ostream& os,
                               const std::vector<theory::VerificationReport>& reports) {
  for (const auto& r : reports) os << to_json(r).dump() << "\n";
}

inline void write_report_table(std::ostream& os,
                               const std::vector<theory::VerificationReport>& reports) {
  os << std::left << std::setw(34) << "check" << std::setw(21) << "status"
     << std::setw(16) << "statistic" << "tolerance\n";
  int failed = 0;
  for (const auto& r : reports) {
    std::ostringstream stat, tol;
    stat << std::setprecision(6) << r.statistic;
    tol << std::setprecision(6) << r.tolerance;
    os << std::left << std::setw(34) << r.check_name << std::setw(21)
       << theory::to_string(r.status) << std::setw(16) << stat.str() << tol.str()
       << "\n";
    if (r.failed()) ++failed;
  }
  os << reports.size() - failed << "/" << reports.size() << " checks passed\n";
}

namespace detail {

// Flag wins, then BBVI_LAB_SEED, then the config's run.base_seed.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                                  std::uint64_t config_seed) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BBVI_LAB_SEED"); env && *env) {
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(env, &pos);
      if (env[pos] == '\0') return v;
    } catch (const std::exception&) {
    }
    throw harness::config_error("BBVI_LAB_SEED is not an unsigned integer");
  }
  return config_seed;
}

// Writes `body` to `path`, or to `fallback` when path is empty.
template <class Body>
void emit(const std::string& path, std::ostream& fallback, Body&& body) {
  if (path.empty()) {
    body(fallback);
    return;
  }
  std::ofstream f(path);
  if (!f) throw harness::config_error("cannot open output '" + path + "'");
  body(f);
}

}  // namespace detail

/**
 * Entry point of the `bbvi_lab` tool. Exit status is kSuccess unless a
 * verification check fails (kVerificationFailure) or the configuration or
 * command line is unusable (kConfigError).
 */
inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"Black-box variational inference lab"};
  app.name("bbvi_lab");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  app.add_option("--config", config_path, "Key-value configuration file");
  app.add_option("--seed", seed, "Base seed (overrides BBVI_LAB_SEED)");
  app.add_option("--out", out_path, "Output path");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Run the numerical verification suite");
  auto* sweep = app.add_subcommand("sweep", "Stepsize x initialization sweep (CSV)");
  auto* run = app.add_subcommand("run", "Single-trajectory runs (CSV)");
  auto* constants = app.add_subcommand("constants", "Print the softplus constants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kConfigError;
  }

  try {
    harness::ExperimentConfig config;
    if (!config_path.empty()) config = harness::load_config(config_path);

    if (constants->parsed()) {
      const theory::SoftplusConstants c = theory::softplus_constants();
      out << std::setprecision(10) << "L_h = " << c.L_h << "\n"
          << "L_s_factor = " << c.L_s_factor << "\n";
      return kSuccess;
    }

    const std::uint64_t base = detail::resolve_seed(seed, config.base_seed);
    config.base_seed = base;
    if (out_path.empty()) out_path = config.output_path;

    if (verify->parsed()) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto reports = theory::run_verification_suite(base, threads);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_report_table(out, reports);
      if (!out_path.empty())
        detail::emit(out_path, out, [&](std::ostream& os) {
          write_report_jsonl(os, reports);
        });
      err << "verification suite finished in " << std::setprecision(3) << secs
          << " s\n";
      for (const auto& r : reports)
        if (r.failed()) return kVerificationFailure;
      return kSuccess;
    }

    if (sweep->parsed()) {
      const auto rows = harness::run_sweep(config, config.stepsizes,
                                           config.init_scales, threads);
      detail::emit(out_path, out,
                   [&](std::ostream& os) { harness::write_sweep_csv(os, rows); });
      std::ostream& summary = out_path.empty() ? err : out;
      summary << "best-over-grid iterations to KL <= " << config.eps_kl << ":\n";
      for (const auto& s : harness::summarize_sweep(rows))
        summary << "  " << to_string(s.variant.optimizer) << ":"
                << to_string(s.variant.conditioner) << " init " << s.init_scale
                << " -> " << s.best_mean_iters << " (stepsize " << s.best_stepsize
                << (s.all_reached ? ")" : ", censored)") << "\n";
      return kSuccess;
    }

    if (run->parsed()) {
      std::vector<std::string> failures;
      const auto rows = harness::run_trajectories(config, threads, &failures);
      for (const auto& f : failures) err << "warning: run stopped early, " << f << "\n";
      detail::emit(out_path, out,
                   [&](std::ostream& os) { harness::write_trajectory_csv(os, rows); });
      return kSuccess;
    }
  } catch (const harness::config_error& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  }
  return kSuccess;
}

}  // namespace bbvi::cli

#endif
