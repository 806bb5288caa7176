#ifndef BBVI_OPTIMIZERS_HPP
#define BBVI_OPTIMIZERS_HPP

#include <bbvi/errors.hpp>
#include <bbvi/estimators.hpp>
#include <bbvi/family.hpp>
#include <bbvi/params.hpp>
#include <bbvi/random.hpp>
#include <bbvi/targets.hpp>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bbvi {

enum class OptimizerKind { sgd, prox_sgd, proxgen_adam };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::prox_sgd: return "prox_sgd";
    case OptimizerKind::proxgen_adam: return "proxgen_adam";
  }
  return "?";
}

inline OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "prox_sgd" || name == "proxsgd") return OptimizerKind::prox_sgd;
  if (name == "proxgen_adam" || name == "proxgen-adam")
    return OptimizerKind::proxgen_adam;
  throw contract_violation("unknown optimizer '" + std::string(name) + "'");
}

// Lower bound that vanilla SGD enforces on s under the identity conditioner.
inline constexpr double kDomainFloor = 1e-10;

/**
 * Stepsize rules. Besides a constant gamma and gamma0 / sqrt(t + 1) there is
 * the two-stage rule, which holds gamma_flat for t <= t_switch and then
 * decays as (2t + 1) / ((t + 1)^2 mu).
 */
struct StepSchedule {
  enum class Kind { fixed, inv_sqrt, two_stage };
  Kind kind = Kind::fixed;
  double gamma = 1e-3;
  double mu = 1.0;
  long t_switch = 0;

  static StepSchedule fixed(double gamma) {
    detail::require(gamma > 0, "StepSchedule: gamma must be > 0");
    return {Kind::fixed, gamma, 1.0, 0};
  }
  static StepSchedule inv_sqrt(double gamma0) {
    detail::require(gamma0 > 0, "StepSchedule: gamma0 must be > 0");
    return {Kind::inv_sqrt, gamma0, 1.0, 0};
  }
  static StepSchedule two_stage(double gamma_flat, double mu, long t_switch) {
    detail::require(gamma_flat > 0 && mu > 0 && t_switch >= 0,
                    "StepSchedule: invalid two-stage parameters");
    return {Kind::two_stage, gamma_flat, mu, t_switch};
  }

  /**
   * The two-stage rule with its theoretical constants:
   * gamma_flat = M / (2 L kappa C(d, phi)) and
   * t_switch = 4 ceil(kappa^2 C(d, phi) / M).
   */
  static StepSchedule two_stage_for(double smoothness, double strong_convexity,
                                    double variance_const, int M) {
    const double kappa = smoothness / strong_convexity;
    const double flat = M / (2.0 * smoothness * kappa * variance_const);
    const long t_kappa =
        static_cast<long>(std::ceil(kappa * kappa * variance_const / M));
    return two_stage(flat, strong_convexity, 4 * t_kappa);
  }

  double operator()(long t) const {
    switch (kind) {
      case Kind::fixed: return gamma;
      case Kind::inv_sqrt: return gamma / std::sqrt(static_cast<double>(t) + 1.0);
      case Kind::two_stage: {
        if (t <= t_switch) return gamma;
        const double tt = static_cast<double>(t);
        return (2.0 * tt + 1.0) / ((tt + 1.0) * (tt + 1.0) * mu);
      }
    }
    return gamma;
  }
};

/**
 * Proximal operator of -log(.) with stepsize gamma, the positive root of
 * x^2 - s x - gamma = 0, i.e. s + (sqrt(s^2 + 4 gamma) - s) / 2. For s < 0
 * the algebraically equal 2 gamma / (sqrt(s^2 + 4 gamma) - s) avoids
 * cancellation.
 */
inline double prox_entropy_scale(double s, double gamma) {
  if (!(gamma >= 0)) throw contract_violation("prox_entropy_scale: gamma < 0");
  if (gamma == 0) {
    if (!(s > 0))
      throw contract_violation("prox_entropy_scale: gamma = 0 needs s > 0");
    return s;
  }
  const double root = std::sqrt(s * s + 4.0 * gamma);
  return s >= 0 ? 0.5 * (s + root) : 2.0 * gamma / (root - s);
}

struct StepOutcome {
  VariationalParams params;
  int clamps = 0;
};

namespace detail {

inline void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw numeric_failure(std::string(what) + ": non-finite value");
}

inline void require_linear(const FamilyConfig& config, const char* what) {
  if (!config.conditioner.is_linear())
    throw unsupported_configuration(
        std::string(what) +
        ": the closed-form entropy prox requires the identity conditioner");
}

}  // namespace detail

/**
 * lambda' = lambda - gamma * grad, grad being a total (energy + entropy)
 * gradient. Under the identity conditioner any s_i that lands at or below
 * kDomainFloor is clamped there and counted.
 */
inline StepOutcome sgd_step(const VariationalParams& p,
                            const Eigen::VectorXd& grad_total, double gamma,
                            const FamilyConfig& config) {
  detail::require_dim(grad_total.size(), config.num_params(), "sgd_step.grad");
  detail::require_finite(grad_total, "sgd_step gradient");
  Eigen::VectorXd lambda = flatten(p) - gamma * grad_total;
  detail::require_finite(lambda, "sgd_step iterate");
  StepOutcome out{unflatten(lambda, config), 0};
  if (config.conditioner.is_linear())
    for (Eigen::Index i = 0; i < out.params.s.size(); ++i)
      if (out.params.s[i] <= kDomainFloor) {
        out.params.s[i] = kDomainFloor;
        ++out.clamps;
      }
  return out;
}

/**
 * prox_{gamma h}(lambda - gamma grad f): plain gradient step on m and L, the
 * entropy prox on each s_i. The iterate stays in the domain without clamping.
 */
inline VariationalParams prox_sgd_step(const VariationalParams& p,
                                       const Eigen::VectorXd& grad_energy,
                                       double gamma, const FamilyConfig& config) {
  detail::require_linear(config, "prox_sgd_step");
  detail::require_dim(grad_energy.size(), config.num_params(),
                      "prox_sgd_step.grad");
  detail::require(gamma >= 0, "prox_sgd_step: gamma must be >= 0");
  detail::require_finite(grad_energy, "prox_sgd_step gradient");
  VariationalParams out = unflatten(flatten(p) - gamma * grad_energy, config);
  for (Eigen::Index i = 0; i < out.s.size(); ++i)
    out.s[i] = prox_entropy_scale(out.s[i], gamma);
  detail::require_finite(flatten(out), "prox_sgd_step iterate");
  return out;
}

/**
 * Momentum and second-moment buffers of ProxGen-Adam. No bias correction is
 * applied to either moment and beta1 is held constant.
 */
struct ProxGenAdamState {
  Eigen::VectorXd momentum;
  Eigen::VectorXd second_moment;
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static ProxGenAdamState zeros(int num_params, double alpha,
                                double beta1 = 0.9, double beta2 = 0.999,
                                double eps = 1e-8) {
    detail::require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
                    "ProxGenAdamState: betas must lie in [0, 1)");
    detail::require(eps > 0 && alpha > 0, "ProxGenAdamState: alpha, eps > 0");
    return {Eigen::VectorXd::Zero(num_params),
            Eigen::VectorXd::Zero(num_params), alpha, beta1, beta2, eps};
  }
};

struct AdamOutcome {
  VariationalParams params;
  ProxGenAdamState state;
};

/**
 * One ProxGen-Adam step on the energy gradient g:
 *   mbar' = beta1 mbar + (1 - beta1) g
 *   v'    = beta2 v + (1 - beta2) g^2
 *   Gamma = alpha / (sqrt(v') + eps)
 *   lambda' = lambda - Gamma * mbar'
 * then each s_i goes through the entropy prox with its own Gamma_i.
 */
inline AdamOutcome proxgen_adam_step(const VariationalParams& p,
                                     const ProxGenAdamState& state,
                                     const Eigen::VectorXd& grad,
                                     const FamilyConfig& config) {
  detail::require_linear(config, "proxgen_adam_step");
  const int P = config.num_params();
  detail::require_dim(grad.size(), P, "proxgen_adam_step.grad");
  detail::require_dim(state.momentum.size(), P, "proxgen_adam_step.momentum");
  detail::require_dim(state.second_moment.size(), P,
                      "proxgen_adam_step.second_moment");
  detail::require_finite(grad, "proxgen_adam_step gradient");

  AdamOutcome out{p, state};
  ProxGenAdamState& st = out.state;
  st.momentum = state.beta1 * state.momentum + (1.0 - state.beta1) * grad;
  st.second_moment = state.beta2 * state.second_moment +
                     (1.0 - state.beta2) * grad.cwiseAbs2();
  const Eigen::VectorXd step_sizes =
      (state.alpha / (st.second_moment.array().sqrt() + state.eps)).matrix();
  Eigen::VectorXd lambda =
      flatten(p) - step_sizes.cwiseProduct(st.momentum);
  for (int i = 0; i < config.dim; ++i) {
    const int k = config.s_offset() + i;
    lambda[k] = prox_entropy_scale(lambda[k], step_sizes[k]);
  }
  detail::require_finite(lambda, "proxgen_adam_step iterate");
  out.params = unflatten(lambda, config);
  return out;
}

/**
 * Metrics at one checkpoint. kl and param_dist_sq are absent when the target
 * has no closed-form posterior or lambda* is unknown.
 */
struct TrajectoryRecord {
  long iteration = 0;
  std::optional<double> kl;
  std::optional<double> param_dist_sq;
  double elbo = 0;
  long domain_clamps = 0;
};

struct RunOptions {
  OptimizerKind optimizer = OptimizerKind::prox_sgd;
  EstimatorKind estimator = EstimatorKind::cfe;
  int M = 10;
  long T = 1000;
  long checkpoint_every = 100;
  // KL threshold; when set, iterations_to_eps is tracked.
  std::optional<double> eps_kl;
  bool stop_at_eps = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Non-quadratic targets: ELBO estimated with this seed and sample count.
  std::uint64_t eval_seed = 0x5eed;
  int eval_samples = 1000;
};

struct RunResult {
  std::vector<TrajectoryRecord> records;
  std::optional<long> iterations_to_eps;
  long iterations_done = 0;
  long clamps = 0;
  bool failed = false;
  std::string failure;
  VariationalParams final_params;
};

/// Rejects optimizer/family combinations before any iteration runs.
inline void validate_run(const FamilyConfig& family, const RunOptions& opt) {
  detail::require(opt.M >= 1, "run: M must be >= 1");
  detail::require(opt.T >= 0, "run: T must be >= 0");
  detail::require(opt.checkpoint_every >= 1, "run: checkpoint_every must be >= 1");
  if (opt.eps_kl) detail::require(*opt.eps_kl > 0, "run: eps_kl must be > 0");
  if (opt.optimizer != OptimizerKind::sgd)
    detail::require_linear(family, to_string(opt.optimizer).c_str());
}

namespace detail {

template <Target T>
double negative_elbo(const VariationalParams& p, const FamilyConfig& family,
                     const T& target, const RunOptions& opt) {
  if constexpr (std::same_as<T, QuadraticTarget>) {
    return elbo_closed_form(p, family, target);
  } else {
    Stream eval(opt.eval_seed);
    const Eigen::MatrixXd Z = sample(p, family, eval, opt.eval_samples);
    double energy = 0;
    for (Eigen::Index k = 0; k < Z.cols(); ++k) energy += target.value(Z.col(k));
    return energy / Z.cols() + neg_entropy(p, family);
  }
}

template <Target T>
std::optional<double> kl_if_available(const VariationalParams& p,
                                      const FamilyConfig& family,
                                      const T& target) {
  if constexpr (std::same_as<T, QuadraticTarget>)
    return kl_to_gaussian(p, family, target);
  else
    return std::nullopt;
}

}  // namespace detail

/**
 * Runs one optimizer from `init` for up to opt.T iterations. Metrics are
 * recorded at t = 0 and every checkpoint_every iterations, plus the last one.
 * Vanilla SGD uses the chosen total-gradient estimator; the proximal methods
 * use the energy gradient and handle the entropy through the prox.
 *
 * A numeric failure ends the run with failed = true instead of throwing.
 */
template <Target T>
RunResult run(const T& target, const FamilyConfig& family,
              const StepSchedule& schedule, const VariationalParams& init,
              const RunOptions& opt, Stream& rng,
              const std::optional<VariationalParams>& optimum = std::nullopt) {
  validate_run(family, opt);
  check_consistent(init, family);
  detail::require_dim(target.dim(), family.dim, "run.target");

  RunResult result;
  VariationalParams params = init;
  std::optional<ProxGenAdamState> adam;
  if (opt.optimizer == OptimizerKind::proxgen_adam)
    adam = ProxGenAdamState::zeros(family.num_params(), schedule(0),
                                   opt.adam_beta1, opt.adam_beta2, opt.adam_eps);

  std::optional<Eigen::VectorXd> optimum_flat;
  if (optimum) optimum_flat = flatten(*optimum);

  auto record = [&](long t, std::optional<double> kl) {
    TrajectoryRecord rec;
    rec.iteration = t;
    rec.kl = kl ? kl : detail::kl_if_available(params, family, target);
    if (optimum_flat) rec.param_dist_sq = (flatten(params) - *optimum_flat).squaredNorm();
    rec.elbo = detail::negative_elbo(params, family, target, opt);
    rec.domain_clamps = result.clamps;
    result.records.push_back(rec);
  };

  const bool track_eps = opt.eps_kl.has_value() && std::same_as<T, QuadraticTarget>;
  long t = 0;
  try {
    std::optional<double> kl;
    if (track_eps) {
      kl = detail::kl_if_available(params, family, target);
      if (*kl <= *opt.eps_kl) result.iterations_to_eps = 0;
    }
    record(0, kl);
    if (result.iterations_to_eps && opt.stop_at_eps) {
      result.final_params = params;
      return result;
    }
    for (t = 1; t <= opt.T; ++t) {
      const double gamma = schedule(t - 1);
      switch (opt.optimizer) {
        case OptimizerKind::sgd: {
          const GradientEstimate g =
              total_grad(opt.estimator, params, family, target, opt.M, rng);
          StepOutcome step = sgd_step(params, g.mean, gamma, family);
          params = std::move(step.params);
          result.clamps += step.clamps;
          break;
        }
        case OptimizerKind::prox_sgd: {
          const GradientEstimate g = energy_grad(params, family, target, opt.M, rng);
          params = prox_sgd_step(params, g.mean, gamma, family);
          break;
        }
        case OptimizerKind::proxgen_adam: {
          const GradientEstimate g = energy_grad(params, family, target, opt.M, rng);
          adam->alpha = gamma;
          AdamOutcome step = proxgen_adam_step(params, *adam, g.mean, family);
          params = std::move(step.params);
          adam = std::move(step.state);
          break;
        }
      }
      result.iterations_done = t;
      kl.reset();
      if (track_eps) {
        kl = detail::kl_if_available(params, family, target);
        if (!result.iterations_to_eps && *kl <= *opt.eps_kl) {
          result.iterations_to_eps = t;
          if (opt.stop_at_eps) {
            record(t, kl);
            break;
          }
        }
      }
      if (t % opt.checkpoint_every == 0 || t == opt.T) record(t, kl);
    }
  } catch (const numeric_failure& e) {
    result.failed = true;
    result.failure = "iteration " + std::to_string(t) + ": " + e.what();
  } catch (const domain_violation& e) {
    result.failed = true;
    result.failure = "iteration " + std::to_string(t) + ": " + e.what();
  }
  result.final_params = params;
  return result;
}

}  // namespace bbvi

#endif
