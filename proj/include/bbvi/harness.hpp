#ifndef BBVI_HARNESS_HPP
#define BBVI_HARNESS_HPP

#include <bbvi/errors.hpp>
#include <bbvi/estimators.hpp>
#include <bbvi/family.hpp>
#include <bbvi/optimizers.hpp>
#include <bbvi/parallel.hpp>
#include <bbvi/params.hpp>
#include <bbvi/random.hpp>
#include <bbvi/synthetic.hpp>
#include <bbvi/targets.hpp>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace bbvi::harness {

// Thrown for malformed or inconsistent configuration (CLI exit code 2).
class config_error : public std::invalid_argument {
 public:
  explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

// One (optimizer, conditioner) combination of a sweep.
struct Variant {
  OptimizerKind optimizer = OptimizerKind::prox_sgd;
  ConditionerKind conditioner = ConditionerKind::identity;

  bool operator==(const Variant&) const = default;
};

/// 13 log-spaced stepsizes 1e-6 ... 1e0.
inline std::vector<double> default_stepsize_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 12; ++k) grid.push_back(std::pow(10.0, -6.0 + 0.5 * k));
  return grid;
}

struct ExperimentConfig {
  // target
  std::string target_kind = "conditioned_gaussian";  // | quadratic | logistic
  int dim = 10;
  double kappa = 10.0;
  double smoothness = 100.0;
  Eigen::MatrixXd matrix;   // target.kind = quadratic
  Eigen::VectorXd mean;     // target.kind = quadratic
  double offset = 0.0;
  int logistic_n = 100;
  double logistic_alpha = 1.0;
  // family
  FamilyKind family = FamilyKind::cholesky;
  ConditionerKind conditioner = ConditionerKind::identity;
  // optimizer (single runs)
  OptimizerKind optimizer = OptimizerKind::prox_sgd;
  EstimatorKind estimator = EstimatorKind::cfe;
  std::string schedule = "fixed";  // | inv_sqrt | two_stage
  double stepsize = 1e-3;
  double init_scale = 1.0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  // run
  int M = 10;
  long T = 20000;
  double eps_kl = 1.0;
  int replications = 10;
  std::uint64_t base_seed = 1;
  long checkpoint_every = 100;
  std::string output_path;
  // sweep
  std::vector<Variant> variants{{OptimizerKind::prox_sgd, ConditionerKind::identity},
                                {OptimizerKind::sgd, ConditionerKind::identity},
                                {OptimizerKind::sgd, ConditionerKind::softplus}};
  std::vector<double> stepsizes = default_stepsize_grid();
  std::vector<double> init_scales{1.0, 1e-3, 1e-5};

  FamilyConfig family_config(ConditionerKind c) const {
    return {family, Conditioner(c), {}, dim};
  }
  FamilyConfig family_config() const { return family_config(conditioner); }

  void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (trim(v.substr(pos)).empty()) return x;
  } catch (const std::exception&) {
  }
  throw config_error("config: '" + key + "' expects a number, got '" + v + "'");
}

inline long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (trim(v.substr(pos)).empty()) return x;
  } catch (const std::exception&) {
  }
  throw config_error("config: '" + key + "' expects an integer, got '" + v + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(parse_double(key, item));
  return out;
}

inline std::string join(const std::vector<double>& xs, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += format_double(xs[i]);
  }
  return out;
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw config_error("config: " + msg);
  };
  need(dim >= 1, "target.dim must be >= 1");
  need(M >= 1, "run.M must be >= 1");
  need(T >= 1, "run.T must be >= 1");
  need(replications >= 1, "run.replications must be >= 1");
  need(checkpoint_every >= 1, "run.checkpoint_every must be >= 1");
  need(eps_kl > 0, "run.eps_kl must be > 0");
  need(stepsize > 0, "optimizer.stepsize must be > 0");
  need(init_scale > 0, "optimizer.init_scale must be > 0");
  need(!variants.empty(), "sweep.variants must be non-empty");
  need(!stepsizes.empty(), "sweep.stepsizes must be non-empty");
  need(!init_scales.empty(), "sweep.init_scales must be non-empty");
  for (double g : stepsizes) need(g > 0, "sweep.stepsizes must be > 0");
  for (double s : init_scales) need(s > 0, "sweep.init_scales must be > 0");
  need(schedule == "fixed" || schedule == "inv_sqrt" || schedule == "two_stage",
       "optimizer.schedule must be fixed, inv_sqrt or two_stage");
  if (target_kind == "conditioned_gaussian") {
    need(kappa >= 1 && smoothness > 0, "target.kappa >= 1 and target.smoothness > 0");
    need(dim >= 2 || kappa == 1, "target.kappa > 1 needs target.dim >= 2");
  } else if (target_kind == "quadratic") {
    need(matrix.rows() == dim && matrix.cols() == dim,
         "target.matrix must be dim x dim");
    need(mean.size() == dim, "target.mean must have dim entries");
  } else if (target_kind == "logistic") {
    need(logistic_n >= 1 && logistic_alpha > 0,
         "target.n >= 1 and target.alpha > 0");
  } else {
    need(false, "unknown target.kind '" + target_kind + "'");
  }
  if (optimizer != OptimizerKind::sgd)
    need(conditioner == ConditionerKind::identity,
         to_string(optimizer) + " requires family.conditioner = identity");
  for (const Variant& v : variants)
    if (v.optimizer != OptimizerKind::sgd)
      need(v.conditioner == ConditionerKind::identity,
           "sweep variant " + to_string(v.optimizer) + ":" +
               to_string(v.conditioner) + " needs the identity conditioner");
}

/**
 * Flat `key = value` text with dotted section prefixes; '#' starts a
 * comment. Unknown keys are errors.
 */
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) +
                         ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string v = detail::trim(line.substr(eq + 1));
    try {
      if (key == "target.kind") c.target_kind = v;
      else if (key == "target.dim") c.dim = static_cast<int>(detail::parse_long(key, v));
      else if (key == "target.kappa") c.kappa = detail::parse_double(key, v);
      else if (key == "target.smoothness") c.smoothness = detail::parse_double(key, v);
      else if (key == "target.offset") c.offset = detail::parse_double(key, v);
      else if (key == "target.n") c.logistic_n = static_cast<int>(detail::parse_long(key, v));
      else if (key == "target.alpha") c.logistic_alpha = detail::parse_double(key, v);
      else if (key == "target.mean") {
        const auto xs = detail::parse_list(key, v);
        c.mean = Eigen::Map<const Eigen::VectorXd>(xs.data(), xs.size());
      } else if (key == "target.matrix") {
        const auto rows = detail::split(v, ';');
        std::vector<std::vector<double>> vals;
        for (const auto& r : rows) vals.push_back(detail::parse_list(key, r));
        const std::size_t n = vals.size();
        c.matrix.resize(n, n);
        for (std::size_t i = 0; i < n; ++i) {
          if (vals[i].size() != n)
            throw config_error("config: target.matrix must be square");
          for (std::size_t j = 0; j < n; ++j) c.matrix(i, j) = vals[i][j];
        }
      }
      else if (key == "family.kind") c.family = parse_family(v);
      else if (key == "family.conditioner") c.conditioner = parse_conditioner(v);
      else if (key == "optimizer.kind") c.optimizer = parse_optimizer(v);
      else if (key == "optimizer.estimator") c.estimator = parse_estimator(v);
      else if (key == "optimizer.schedule") c.schedule = v;
      else if (key == "optimizer.stepsize") c.stepsize = detail::parse_double(key, v);
      else if (key == "optimizer.init_scale") c.init_scale = detail::parse_double(key, v);
      else if (key == "optimizer.adam_beta1") c.adam_beta1 = detail::parse_double(key, v);
      else if (key == "optimizer.adam_beta2") c.adam_beta2 = detail::parse_double(key, v);
      else if (key == "optimizer.adam_eps") c.adam_eps = detail::parse_double(key, v);
      else if (key == "run.M") c.M = static_cast<int>(detail::parse_long(key, v));
      else if (key == "run.T") c.T = detail::parse_long(key, v);
      else if (key == "run.eps_kl") c.eps_kl = detail::parse_double(key, v);
      else if (key == "run.replications") c.replications = static_cast<int>(detail::parse_long(key, v));
      else if (key == "run.base_seed") c.base_seed = std::stoull(v);
      else if (key == "run.checkpoint_every") c.checkpoint_every = detail::parse_long(key, v);
      else if (key == "output.path") c.output_path = v;
      else if (key == "sweep.stepsizes") c.stepsizes = detail::parse_list(key, v);
      else if (key == "sweep.init_scales") c.init_scales = detail::parse_list(key, v);
      else if (key == "sweep.variants") {
        c.variants.clear();
        for (const auto& item : detail::split(v, ',')) {
          const auto colon = item.find(':');
          if (colon == std::string::npos)
            throw config_error("config: sweep.variants entries are optimizer:conditioner");
          c.variants.push_back({parse_optimizer(detail::trim(item.substr(0, colon))),
                                parse_conditioner(detail::trim(item.substr(colon + 1)))});
        }
      } else {
        throw config_error("config line " + std::to_string(lineno) +
                           ": unknown key '" + key + "'");
      }
    } catch (const contract_violation& e) {
      throw config_error(std::string("config: ") + e.what());
    } catch (const std::out_of_range&) {
      throw config_error("config: value out of range for '" + key + "'");
    } catch (const std::invalid_argument& e) {
      if (dynamic_cast<const config_error*>(&e)) throw;
      throw config_error("config: bad value for '" + key + "'");
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  return parse_config(in);
}

// Writes every key; parse_config(write_config(c)) reproduces c exactly.
inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  using detail::format_double;
  os << "target.kind = " << c.target_kind << "\n"
     << "target.dim = " << c.dim << "\n"
     << "target.kappa = " << format_double(c.kappa) << "\n"
     << "target.smoothness = " << format_double(c.smoothness) << "\n"
     << "target.offset = " << format_double(c.offset) << "\n"
     << "target.n = " << c.logistic_n << "\n"
     << "target.alpha = " << format_double(c.logistic_alpha) << "\n";
  if (c.mean.size() > 0)
    os << "target.mean = "
       << detail::join(std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size()))
       << "\n";
  if (c.matrix.size() > 0) {
    os << "target.matrix = ";
    for (Eigen::Index i = 0; i < c.matrix.rows(); ++i) {
      if (i) os << "; ";
      std::vector<double> row(c.matrix.cols());
      for (Eigen::Index j = 0; j < c.matrix.cols(); ++j) row[j] = c.matrix(i, j);
      os << detail::join(row);
    }
    os << "\n";
  }
  os << "family.kind = " << to_string(c.family) << "\n"
     << "family.conditioner = " << to_string(c.conditioner) << "\n"
     << "optimizer.kind = " << to_string(c.optimizer) << "\n"
     << "optimizer.estimator = " << to_string(c.estimator) << "\n"
     << "optimizer.schedule = " << c.schedule << "\n"
     << "optimizer.stepsize = " << format_double(c.stepsize) << "\n"
     << "optimizer.init_scale = " << format_double(c.init_scale) << "\n"
     << "optimizer.adam_beta1 = " << format_double(c.adam_beta1) << "\n"
     << "optimizer.adam_beta2 = " << format_double(c.adam_beta2) << "\n"
     << "optimizer.adam_eps = " << format_double(c.adam_eps) << "\n"
     << "run.M = " << c.M << "\n"
     << "run.T = " << c.T << "\n"
     << "run.eps_kl = " << format_double(c.eps_kl) << "\n"
     << "run.replications = " << c.replications << "\n"
     << "run.base_seed = " << c.base_seed << "\n"
     << "run.checkpoint_every = " << c.checkpoint_every << "\n";
  if (!c.output_path.empty()) os << "output.path = " << c.output_path << "\n";
  os << "sweep.variants = ";
  for (std::size_t i = 0; i < c.variants.size(); ++i)
    os << (i ? "," : "") << to_string(c.variants[i].optimizer) << ":"
       << to_string(c.variants[i].conditioner);
  os << "\n"
     << "sweep.stepsizes = " << detail::join(c.stepsizes) << "\n"
     << "sweep.init_scales = " << detail::join(c.init_scales) << "\n";
}

using AnyTarget = std::variant<QuadraticTarget, LogisticTarget>;

/// Target of replication `rep`, drawn from the stream derive_seed(seed, rep).
inline AnyTarget make_target(const ExperimentConfig& c, std::uint64_t seed, int rep) {
  Stream rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
  if (c.target_kind == "conditioned_gaussian")
    return make_conditioned_gaussian(c.dim, c.kappa, c.smoothness, rng);
  if (c.target_kind == "quadratic")
    return QuadraticTarget(c.matrix, c.mean, c.offset);
  // Synthetic logistic data: X ~ N(0, 1), labels from a random linear model.
  const Eigen::MatrixXd X = rng.normal_matrix(c.logistic_n, c.dim);
  const Eigen::VectorXd w = rng.normal_vector(c.dim);
  Eigen::VectorXd y(c.logistic_n);
  for (int i = 0; i < c.logistic_n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-X.row(i).dot(w)));
    y[i] = rng.uniform(0.0, 1.0) < p ? 1.0 : -1.0;
  }
  return LogisticTarget(X, y, c.logistic_alpha);
}

// Stream driving the optimizer noise of replication `rep`.
inline std::uint64_t run_seed(std::uint64_t seed, int rep) {
  return splitmix64(derive_seed(seed, static_cast<std::uint64_t>(rep)));
}

/**
 * lambda* expressed in the given conditioner's coordinates, when the
 * quadratic target's exact posterior lies in the family.
 */
inline std::optional<VariationalParams> known_optimum(const QuadraticTarget& target,
                                                      const FamilyConfig& family) {
  FamilyConfig lin = family;
  lin.conditioner = Conditioner{};
  try {
    VariationalParams opt = optimal_params(target, lin);
    for (Eigen::Index i = 0; i < opt.s.size(); ++i)
      opt.s[i] = family.conditioner.inverse(opt.s[i]);
    return opt;
  } catch (const unsupported_configuration&) {
    return std::nullopt;
  }
}

inline StepSchedule make_schedule(const ExperimentConfig& c, double gamma,
                                  const FamilyConfig& family, double smoothness,
                                  double strong_convexity) {
  if (c.schedule == "inv_sqrt") return StepSchedule::inv_sqrt(gamma);
  if (c.schedule == "two_stage")
    return StepSchedule::two_stage_for(smoothness, strong_convexity,
                                       variance_constant(family), c.M);
  return StepSchedule::fixed(gamma);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class Censoring { reached = 0, censored = 1, failed = 2 };

struct SweepRow {
  int trial = 0;
  Variant variant;
  double stepsize = 0;
  double init_scale = 0;
  long iters_to_eps = 0;
  Censoring censored = Censoring::reached;
  double final_kl = 0;
};

inline constexpr const char* kSweepHeader =
    "trial,optimizer,conditioner,stepsize,init_scale,iters_to_eps,censored,final_kl";

/**
 * Runs every (variant, init scale, stepsize, replication) cell from
 * m0 = 0, C0 = init_scale * I until KL <= eps_kl or T iterations. Rows come
 * back in that nesting order regardless of `threads`. Numeric failures are
 * recorded as failed rows and never abort the sweep.
 */
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& c,
                                       const std::vector<double>& stepsize_grid,
                                       const std::vector<double>& init_scales,
                                       int threads = 1) {
  if (stepsize_grid.empty() || init_scales.empty() || c.variants.empty())
    throw config_error("run_sweep: grids must be non-empty");
  if (c.target_kind == "logistic")
    throw config_error("run_sweep: needs a Gaussian target (KL in closed form)");
  ExperimentConfig checked = c;
  checked.stepsizes = stepsize_grid;
  checked.init_scales = init_scales;
  checked.validate();

  std::vector<QuadraticTarget> targets;
  for (int r = 0; r < c.replications; ++r)
    targets.push_back(std::get<QuadraticTarget>(make_target(c, c.base_seed, r)));

  const std::size_t nv = c.variants.size(), ni = init_scales.size(),
                    ng = stepsize_grid.size(), nr = c.replications;
  std::vector<SweepRow> rows(nv * ni * ng * nr);
  parallel_for(rows.size(), threads, [&](std::size_t idx) {
    const std::size_t r = idx % nr, g = (idx / nr) % ng, i = (idx / nr / ng) % ni,
                      v = idx / nr / ng / ni;
    const Variant var = c.variants[v];
    const QuadraticTarget& target = targets[r];
    const FamilyConfig family = c.family_config(var.conditioner);
    SweepRow& row = rows[idx];
    row.trial = static_cast<int>(r);
    row.variant = var;
    row.stepsize = stepsize_grid[g];
    row.init_scale = init_scales[i];

    RunOptions ro;
    ro.optimizer = var.optimizer;
    ro.estimator = c.estimator;
    ro.M = c.M;
    ro.T = c.T;
    ro.checkpoint_every = c.T;
    ro.eps_kl = c.eps_kl;
    ro.stop_at_eps = true;
    ro.adam_beta1 = c.adam_beta1;
    ro.adam_beta2 = c.adam_beta2;
    ro.adam_eps = c.adam_eps;
    Stream rng(run_seed(c.base_seed, static_cast<int>(r)));
    const VariationalParams init =
        isotropic_params(family, row.init_scale, Eigen::VectorXd::Zero(c.dim));
    const StepSchedule sched =
        make_schedule(c, row.stepsize, family, target.smoothness(),
                      target.strong_convexity());
    const RunResult res = run(target, family, sched, init, ro, rng);
    if (res.failed) {
      row.censored = Censoring::failed;
      row.iters_to_eps = c.T;
      row.final_kl = std::numeric_limits<double>::quiet_NaN();
    } else if (res.iterations_to_eps) {
      row.iters_to_eps = *res.iterations_to_eps;
      row.final_kl = *res.records.back().kl;
    } else {
      row.censored = Censoring::censored;
      row.iters_to_eps = c.T;
      row.final_kl = *res.records.back().kl;
    }
  });
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  using detail::format_double;
  os << kSweepHeader << "\n";
  for (const SweepRow& r : rows)
    os << r.trial << "," << to_string(r.variant.optimizer) << ","
       << to_string(r.variant.conditioner) << "," << format_double(r.stepsize) << ","
       << format_double(r.init_scale) << "," << r.iters_to_eps << ","
       << static_cast<int>(r.censored) << "," << format_double(r.final_kl) << "\n";
}

/**
 * Best-over-grid summary of a sweep: for each (variant, init scale) the
 * stepsize minimizing the mean iterations-to-eps across replications
 * (censored and failed cells count as T). Stepsizes where every replication
 * reached eps are preferred.
 */
struct SweepSummary {
  Variant variant;
  double init_scale = 0;
  double best_stepsize = 0;
  double best_mean_iters = 0;
  bool all_reached = false;
};

inline std::vector<SweepSummary> summarize_sweep(const std::vector<SweepRow>& rows) {
  struct Cell {
    double sum = 0;
    int n = 0;
    bool all = true;
  };
  std::vector<std::pair<std::tuple<Variant, double, double>, Cell>> cells;
  for (const SweepRow& r : rows) {
    auto key = std::make_tuple(r.variant, r.init_scale, r.stepsize);
    auto it = std::find_if(cells.begin(), cells.end(),
                           [&](const auto& c) { return c.first == key; });
    if (it == cells.end()) {
      cells.push_back({key, {}});
      it = cells.end() - 1;
    }
    it->second.sum += static_cast<double>(r.iters_to_eps);
    ++it->second.n;
    it->second.all = it->second.all && r.censored == Censoring::reached;
  }
  std::vector<SweepSummary> out;
  for (const auto& [key, cell] : cells) {
    const auto& [var, init, step] = key;
    const double mean = cell.sum / cell.n;
    auto it = std::find_if(out.begin(), out.end(), [&](const SweepSummary& s) {
      return s.variant == var && s.init_scale == init;
    });
    if (it == out.end()) {
      out.push_back({var, init, step, mean, cell.all});
      continue;
    }
    const bool better = (cell.all && !it->all_reached) ||
                        (cell.all == it->all_reached && mean < it->best_mean_iters);
    if (better) *it = {var, init, step, mean, cell.all};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single trajectories
// ---------------------------------------------------------------------------

struct TrajectoryRow {
  int trial = 0;
  OptimizerKind optimizer{};
  ConditionerKind conditioner{};
  std::string estimator;
  double stepsize = 0;
  double init_scale = 0;
  TrajectoryRecord record;
};

inline constexpr const char* kTrajectoryHeader =
    "trial,optimizer,conditioner,estimator,stepsize,init_scale,iteration,kl,"
    "param_dist_sq,elbo,clamps";

/**
 * `replications` trajectories of the configured optimizer, each on its own
 * target draw. Rows are ordered by trial then iteration. Runs that end in a
 * numeric failure keep their rows up to the failure; when `failures` is
 * given it receives one message per failed trial, in trial order.
 */
inline std::vector<TrajectoryRow> run_trajectories(
    const ExperimentConfig& c, int threads = 1,
    std::vector<std::string>* failures = nullptr) {
  c.validate();
  std::vector<std::vector<TrajectoryRow>> per(c.replications);
  std::vector<std::string> failure(c.replications);
  parallel_for(c.replications, threads, [&](std::size_t r) {
    const AnyTarget any = make_target(c, c.base_seed, static_cast<int>(r));
    const FamilyConfig family = c.family_config();
    RunOptions ro;
    ro.optimizer = c.optimizer;
    ro.estimator = c.estimator;
    ro.M = c.M;
    ro.T = c.T;
    ro.checkpoint_every = c.checkpoint_every;
    ro.adam_beta1 = c.adam_beta1;
    ro.adam_beta2 = c.adam_beta2;
    ro.adam_eps = c.adam_eps;
    const VariationalParams init =
        isotropic_params(family, c.init_scale, Eigen::VectorXd::Zero(c.dim));
    Stream rng(run_seed(c.base_seed, static_cast<int>(r)));
    const RunResult res = std::visit(
        [&](const auto& target) {
          std::optional<VariationalParams> opt;
          if constexpr (std::same_as<std::decay_t<decltype(target)>, QuadraticTarget>) {
            ro.eps_kl = c.eps_kl;
            opt = known_optimum(target, family);
          }
          const StepSchedule sched = make_schedule(c, c.stepsize, family,
                                                   target.smoothness(),
                                                   target.strong_convexity());
          return run(target, family, sched, init, ro, rng, opt);
        },
        any);
    const std::string est =
        c.optimizer == OptimizerKind::sgd ? to_string(c.estimator) : "energy";
    if (res.failed) failure[r] = "trial " + std::to_string(r) + ": " + res.failure;
    for (const TrajectoryRecord& rec : res.records)
      per[r].push_back({static_cast<int>(r), c.optimizer, c.conditioner, est,
                        c.stepsize, c.init_scale, rec});
  });
  std::vector<TrajectoryRow> rows;
  for (auto& v : per) rows.insert(rows.end(), v.begin(), v.end());
  if (failures)
    for (auto& f : failure)
      if (!f.empty()) failures->push_back(std::move(f));
  return rows;
}

inline void write_trajectory_csv(std::ostream& os,
                                 const std::vector<TrajectoryRow>& rows) {
  using detail::format_double;
  auto opt = [](const std::optional<double>& x) {
    return x ? format_double(*x) : std::string();
  };
  os << kTrajectoryHeader << "\n";
  for (const TrajectoryRow& r : rows)
    os << r.trial << "," << to_string(r.optimizer) << "," << to_string(r.conditioner)
       << "," << r.estimator << "," << format_double(r.stepsize) << ","
       << format_double(r.init_scale) << "," << r.record.iteration << ","
       << opt(r.record.kl) << "," << opt(r.record.param_dist_sq) << ","
       << format_double(r.record.elbo) << "," << r.record.domain_clamps << "\n";
}

}  // namespace bbvi::harness

#endif
