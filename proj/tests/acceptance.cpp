// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <bbvi/bbvi.hpp>
#include <bbvi/cli.hpp>

#include <chrono>
#include <iomanip>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

using namespace bbvi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void criterion(int id, const std::string& title, double budget_s,
               const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    o.detail += " [over runtime budget " + std::to_string(budget_s) + " s]";
  }
  if (!o.pass) ++g_failures;
  std::ostringstream line;
  line << (o.pass ? "PASS" : "FAIL") << "  #" << id << " " << title << " ("
       << std::setprecision(3) << secs << " s): " << o.detail;
  std::cout << line.str() << std::endl;
}

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

FamilyConfig family(FamilyKind kind, ConditionerKind cond, int d) {
  return FamilyConfig{kind, Conditioner(cond), {}, d};
}

VariationalParams random_params(const FamilyConfig& f, Stream& rng) {
  VariationalParams p{rng.normal_vector(f.dim), rng.normal_vector(f.dim),
                      0.5 * rng.normal_vector(f.num_offdiag())};
  if (f.conditioner.is_linear())
    for (Eigen::Index i = 0; i < p.s.size(); ++i) p.s[i] = rng.uniform(0.2, 2.0);
  return p;
}

int invoke_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bbvi_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome softplus_constants_cli() {
  std::ostringstream out, err;
  const char* argv[] = {"bbvi_lab", "constants"};
  const int code = cli::run_cli(2, argv, out, err);
  double L_h = 0, L_s = 0;
  std::istringstream in(out.str());
  std::string line;
  while (std::getline(in, line)) {
    std::sscanf(line.c_str(), "L_h = %lf", &L_h);
    std::sscanf(line.c_str(), "L_s_factor = %lf", &L_s);
  }
  const bool ok = code == 0 && std::abs(L_h - 0.167096) <= 1e-3 &&
                  std::abs(L_s - 0.26034) <= 1e-3;
  return {ok, "L_h = " + num(L_h) + ", L_s_factor = " + num(L_s)};
}

Outcome jacobian_identity() {
  double worst = 0;
  bool ok = true;
  for (auto kind : {FamilyKind::cholesky, FamilyKind::meanfield}) {
    const auto r = theory::check_jacobian_identity(kind, 100, 2024);
    ok = ok && r.status == theory::Status::pass;
    worst = std::max(worst, r.statistic);
  }
  return {ok, "max deviation " + num(worst) + " over d = 1..8, 100 draws each"};
}

Outcome convexity_counterexample() {
  Stream rng(derive_seed(2024, 3));
  const FamilyConfig f = family(FamilyKind::cholesky, ConditionerKind::identity, 2);
  const CoordinateStat st = assumption_convexity_stat(
      theory::counterexample_params(), f, theory::counterexample_target(), 1000000, rng);
  const bool ok = st.mean[0] >= -1.01 && st.mean[0] <= -0.99;
  return {ok, "E g1 u1 = " + num(st.mean[0]) + " (se " + num(st.se[0]) + ")"};
}

Outcome prox_root_property() {
  Stream rng(derive_seed(2024, 4));
  double worst = 0;
  bool positive = true;
  for (int k = 0; k < 100000; ++k) {
    const double s = rng.uniform(-50, 50);
    double gamma = rng.uniform(0, 10);
    if (gamma == 0) gamma = 1e-300;
    const double x = prox_entropy_scale(s, gamma);
    positive = positive && x > 0;
    worst = std::max(worst, std::abs(x * x - s * x - gamma) /
                                std::max({1.0, s * s, gamma}));
  }
  return {positive && worst <= 1e-9, "max scaled residual " + num(worst)};
}

Outcome gradient_correctness() {
  Stream rng(derive_seed(2024, 5));
  const QuadraticTarget quad = make_conditioned_gaussian(4, 10, 5, rng);
  const Eigen::MatrixXd X = rng.normal_matrix(30, 4);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) y[i] = rng.uniform(0, 1) < 0.5 ? -1.0 : 1.0;
  const LogisticTarget logistic(X, y, 1.0);

  double worst_fd = 0;
  for (auto kind : {FamilyKind::cholesky, FamilyKind::meanfield})
    for (auto cond : {ConditionerKind::identity, ConditionerKind::softplus,
                      ConditionerKind::exp}) {
      const FamilyConfig f = family(kind, cond, 4);
      for (int k = 0; k < 100; ++k) {
        const VariationalParams p = random_params(f, rng);
        const Eigen::VectorXd u = rng.normal_vector(4);
        auto check = [&](const auto& target) {
          const Eigen::VectorXd fd = finite_difference(
              [&](const Eigen::VectorXd& x) {
                return target.value(reparameterize(unflatten(x, f), f, u));
              },
              flatten(p), 1e-6);
          const Eigen::VectorXd g = energy_grad_single(p, f, target, u);
          worst_fd = std::max(worst_fd, (g - fd).norm() /
                                            std::max(1.0, std::max(g.norm(), fd.norm())));
        };
        check(quad);
        check(logistic);
      }
    }

  double worst_z = 0;
  for (auto cond : {ConditionerKind::identity, ConditionerKind::softplus,
                    ConditionerKind::exp}) {
    const FamilyConfig f = family(FamilyKind::cholesky, cond, 4);
    const VariationalParams p = random_params(f, rng);
    const Eigen::VectorXd exact = elbo_closed_form_grad(p, f, quad);
    for (EstimatorKind est : {EstimatorKind::cfe, EstimatorKind::stl}) {
      const GradientEstimate g = total_grad(est, p, f, quad, 100000, rng);
      const Eigen::VectorXd se = g.standard_error();
      for (Eigen::Index i = 0; i < exact.size(); ++i)
        worst_z = std::max(worst_z, std::abs(g.mean[i] - exact[i]) / std::max(se[i], 1e-300));
    }
  }
  return {worst_fd <= 1e-6 && worst_z <= 4.0,
          "max FD rel. err " + num(worst_fd) + "; max |mean - closed form| / SE " + num(worst_z)};
}

Outcome stl_zero_at_optimum() {
  Stream rng(derive_seed(2024, 6));
  const QuadraticTarget t = make_conditioned_gaussian(5, 10, 10, rng);
  const auto r = theory::check_stl_zero_at_optimum(t, 10000, derive_seed(2024, 60));
  return {r.status == theory::Status::pass, "max per-sample norm " + num(r.statistic)};
}

Outcome optimum_variance() {
  Stream rng(derive_seed(2024, 7));
  bool ok = true;
  std::string detail;
  for (int d : {1, 5, 10})
    for (auto kind : {FamilyKind::cholesky, FamilyKind::meanfield}) {
      const QuadraticTarget t =
          kind == FamilyKind::cholesky
              ? make_conditioned_gaussian(d, d > 1 ? 10.0 : 1.0, 10, rng)
              : QuadraticTarget(Eigen::VectorXd::LinSpaced(d, 1, 10).asDiagonal().toDenseMatrix(),
                                rng.normal_vector(d));
      Stream s(derive_seed(2024, 70 + d));
      const theory::OptimumVariance v =
          theory::optimum_variance(t, family(kind, ConditionerKind::identity, d), 100000, s);
      ok = ok && v.sigma2 <= v.bound + 4 * v.se;
      detail += to_string(kind) + " d" + std::to_string(d) + ": " + num(v.sigma2) + " <= " +
                num(v.bound) + "; ";
    }
  return {ok, detail + "(M = 1 scale)"};
}

Outcome strongly_convex_rate() {
  Stream rng(derive_seed(2024, 8));
  const QuadraticTarget t = make_conditioned_gaussian(5, 10, 10, rng);
  const FamilyConfig f = family(FamilyKind::cholesky, ConditionerKind::identity, 5);
  const int M = 10;
  const double gamma = M / (2 * t.smoothness() * t.condition_number() * variance_constant(f));
  const theory::RateBoundResult r =
      theory::rate_bound(t, f, gamma, M, 20, {100, 1000, 10000}, derive_seed(2024, 80), 1);
  bool ok = r.in_precondition;
  std::string detail = "gamma " + num(gamma) + "; ";
  for (size_t i = 0; i < r.horizons.size(); ++i) {
    ok = ok && r.mean_dist_sq[i] <= 2 * r.bound[i];
    detail += "T=" + std::to_string(r.horizons[i]) + ": " + num(r.mean_dist_sq[i]) +
              " <= 2 x " + num(r.bound[i]) + "; ";
  }
  return {ok, detail};
}

Outcome quadratic_sweep() {
  harness::ExperimentConfig c;  // d = 10, kappa = 10, L = 100, 10 reps, eps = 1, M = 10
  const int threads = std::max(1u, std::thread::hardware_concurrency());
  const auto rows = harness::run_sweep(c, c.stepsizes, c.init_scales, threads);
  const auto summary = harness::summarize_sweep(rows);
  auto best = [&](OptimizerKind o, ConditionerKind k, double init) {
    for (const auto& s : summary)
      if (s.variant.optimizer == o && s.variant.conditioner == k && s.init_scale == init)
        return s.best_mean_iters;
    throw std::runtime_error("missing sweep cell");
  };
  auto spread = [&](OptimizerKind o, ConditionerKind k) {
    double lo = INFINITY, hi = 0;
    for (double init : c.init_scales) {
      const double b = best(o, k, init);
      lo = std::min(lo, b);
      hi = std::max(hi, b);
    }
    return hi / std::max(lo, 1.0);
  };
  const double prox_small = best(OptimizerKind::prox_sgd, ConditionerKind::identity, 1e-5);
  const double soft_small = best(OptimizerKind::sgd, ConditionerKind::softplus, 1e-5);
  const double prox_spread = spread(OptimizerKind::prox_sgd, ConditionerKind::identity);
  const double soft_spread = spread(OptimizerKind::sgd, ConditionerKind::softplus);
  const bool a = prox_small <= soft_small;
  const bool b = prox_spread <= 10.0 && soft_spread > prox_spread;
  return {a && b, "(a) C0 = 1e-5 I: prox " + num(prox_small) + " vs softplus " +
                      num(soft_small) + "; (b) spread prox " + num(prox_spread) +
                      "x, softplus " + num(soft_spread) + "x"};
}

Outcome proxgen_adam_sanity() {
  harness::ExperimentConfig c;
  c.optimizer = OptimizerKind::proxgen_adam;
  c.stepsize = 1e-3;
  c.T = 50000;
  int count = 0;
  for (int r = 0; r < c.replications; ++r) {
    const VariationalParams init =
        isotropic_params(c.family_config(), 1.0, Eigen::VectorXd::Zero(c.dim));
    const auto any = harness::make_target(c, c.base_seed, r);
    const QuadraticTarget& target = std::get<QuadraticTarget>(any);
    RunOptions ro;
    ro.optimizer = OptimizerKind::proxgen_adam;
    ro.M = c.M;
    ro.T = c.T;
    ro.checkpoint_every = c.T;
    ro.eps_kl = 1.0;
    Stream rng(harness::run_seed(c.base_seed, r));
    const RunResult res = run(target, c.family_config(), StepSchedule::fixed(1e-3), init, ro, rng);
    if (res.iterations_to_eps && *res.iterations_to_eps <= c.T) ++count;
  }
  return {count >= 8, std::to_string(count) + "/10 replications reach KL <= 1 within 5e4 iterations"};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "bbvi_acceptance";
  fs::create_directories(dir);
  const std::string cfg = (dir / "sweep.cfg").string();
  {
    std::ofstream f(cfg);
    f << "run.replications = 3\nrun.T = 2000\nsweep.stepsizes = 1e-4, 1e-3, 3e-3, 1e-2, 1e-1\n";
  }
  auto path = [&](const std::string& name) { return (dir / name).string(); };
  bool ok = true;
  ok &= invoke_cli({"verify", "--seed", "7", "--threads", "1", "--out", path("v1.jsonl")}) == 0;
  ok &= invoke_cli({"verify", "--seed", "7", "--threads", "1", "--out", path("v2.jsonl")}) == 0;
  ok &= invoke_cli({"verify", "--seed", "7", "--threads", "8", "--out", path("v8.jsonl")}) == 0;
  ok &= invoke_cli({"sweep", "--config", cfg, "--seed", "7", "--threads", "1", "--out", path("s1.csv")}) == 0;
  ok &= invoke_cli({"sweep", "--config", cfg, "--seed", "7", "--threads", "1", "--out", path("s2.csv")}) == 0;
  ok &= invoke_cli({"sweep", "--config", cfg, "--seed", "7", "--threads", "8", "--out", path("s8.csv")}) == 0;
  const std::string v1 = slurp(path("v1.jsonl")), s1 = slurp(path("s1.csv"));
  const bool same_v = !v1.empty() && v1 == slurp(path("v2.jsonl")) && v1 == slurp(path("v8.jsonl"));
  const bool same_s = !s1.empty() && s1 == slurp(path("s2.csv")) && s1 == slurp(path("s8.csv"));
  fs::remove_all(dir);
  return {ok && same_v && same_s,
          std::string("verify ") + (same_v ? "identical" : "DIFFERENT") + ", sweep " +
              (same_s ? "identical" : "DIFFERENT") + " across repeat and threads 1/8"};
}

}  // namespace

int main() {
  criterion(1, "softplus constants", 1.0, softplus_constants_cli);
  criterion(2, "Jacobian identity", 1.0, jacobian_identity);
  criterion(3, "convexity counter-example", 5.0, convexity_counterexample);
  criterion(4, "prox root property", 1.0, prox_root_property);
  criterion(5, "gradient correctness", 0, gradient_correctness);
  criterion(6, "STL zero variance at the optimum", 0, stl_zero_at_optimum);
  criterion(7, "optimum-variance bound", 0, optimum_variance);
  criterion(8, "strongly-convex rate", 120.0, strongly_convex_rate);
  criterion(9, "quadratic sweep ordering", 900.0, quadratic_sweep);
  criterion(10, "ProxGen-Adam sanity", 0, proxgen_adam_sanity);
  criterion(11, "determinism", 0, determinism);
  std::cout << (g_failures == 0 ? "all acceptance criteria passed"
                                : std::to_string(g_failures) + " acceptance criteria failed")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
