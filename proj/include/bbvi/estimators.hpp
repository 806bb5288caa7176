#ifndef BBVI_ESTIMATORS_HPP
#define BBVI_ESTIMATORS_HPP

#include <bbvi/errors.hpp>
#include <bbvi/family.hpp>
#include <bbvi/params.hpp>
#include <bbvi/random.hpp>
#include <bbvi/targets.hpp>
#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <string_view>

namespace bbvi {

enum class EstimatorKind { cfe, stl };

inline std::string to_string(EstimatorKind k) {
  return k == EstimatorKind::cfe ? "cfe" : "stl";
}

inline EstimatorKind parse_estimator(std::string_view name) {
  if (name == "cfe") return EstimatorKind::cfe;
  if (name == "stl") return EstimatorKind::stl;
  throw contract_violation("unknown estimator '" + std::string(name) + "'");
}

/**
 * Monte-Carlo gradient over the flattened parameters. Variances are the
 * unbiased per-sample variances; the standard error of mean[i] is
 * sqrt(coordinate_variance[i] / samples_used).
 */
struct GradientEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd coordinate_variance;
  double per_sample_trace_variance = 0;
  int samples_used = 0;

  Eigen::VectorXd standard_error() const {
    return (coordinate_variance / samples_used).cwiseSqrt();
  }
};

// Per-coordinate Monte-Carlo mean and standard error.
struct CoordinateStat {
  Eigen::VectorXd mean;
  Eigen::VectorXd se;
};

namespace detail {

/**
 * Chain rule for lambda -> l(T_lambda(u)) given the path gradient g at z:
 * d/dm_i = g_i, d/ds_i = phi'(s_i) u_i g_i, d/dL_ij = g_i u_j (j < i).
 */
inline void chain_rule(const VariationalParams& p, const FamilyConfig& config,
                       const Eigen::VectorXd& u, const Eigen::VectorXd& g,
                       Eigen::Ref<Eigen::VectorXd> out) {
  const int d = config.dim;
  out.head(d) = g;
  for (int i = 0; i < d; ++i)
    out[config.s_offset() + i] = config.conditioner.d1(p.s[i]) * u[i] * g[i];
  if (config.kind == FamilyKind::cholesky)
    for (int i = 1; i < d; ++i)
      for (int j = 0; j < i; ++j)
        out[config.l_offset() + tril_index(i, j)] = g[i] * u[j];
}

// Welford accumulator over flattened per-sample gradients.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(int p)
      : mean_(Eigen::VectorXd::Zero(p)), m2_(Eigen::VectorXd::Zero(p)) {}

  void add(const Eigen::VectorXd& x) {
    ++n_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / n_;
    m2_ += delta.cwiseProduct(x - mean_);
  }

  GradientEstimate finish() const {
    GradientEstimate out;
    out.mean = mean_;
    out.samples_used = n_;
    out.coordinate_variance =
        n_ > 1 ? Eigen::VectorXd(m2_ / (n_ - 1))
               : Eigen::VectorXd(Eigen::VectorXd::Zero(mean_.size()));
    out.per_sample_trace_variance = out.coordinate_variance.sum();
    return out;
  }

 private:
  Eigen::VectorXd mean_, m2_;
  int n_ = 0;
};

template <Target T>
void check_target(const FamilyConfig& config, const T& target) {
  detail::require_dim(target.dim(), config.dim, "target");
}

}  // namespace detail

/// Single-sample energy gradient, grad_lambda l(T_lambda(u)) at fixed u.
template <Target T>
Eigen::VectorXd energy_grad_single(const VariationalParams& p,
                                   const FamilyConfig& config, const T& target,
                                   const Eigen::VectorXd& u) {
  detail::check_target(config, target);
  const Eigen::MatrixXd C = scale_matrix(p, config);
  const Eigen::VectorXd z = C.triangularView<Eigen::Lower>() * u + p.m;
  Eigen::VectorXd out(config.num_params());
  detail::chain_rule(p, config, u, target.gradient(z), out);
  return out;
}

/**
 * Single-sample sticking-the-landing gradient
 * grad_lambda [l(T_lambda(u)) + log q_nu(T_lambda(u))] at nu = lambda.
 * Since grad_z log q_nu(z) = -(C C^T)^{-1} (z - m) = -C^{-T} u, this is the
 * chain rule applied to grad l(z) - C^{-T} u.
 */
template <Target T>
Eigen::VectorXd stl_grad_single(const VariationalParams& p,
                                const FamilyConfig& config, const T& target,
                                const Eigen::VectorXd& u) {
  detail::check_target(config, target);
  const Eigen::MatrixXd C = scale_matrix(p, config);
  const Eigen::VectorXd z = C.triangularView<Eigen::Lower>() * u + p.m;
  const Eigen::VectorXd score =
      C.triangularView<Eigen::Lower>().transpose().solve(u);
  Eigen::VectorXd out(config.num_params());
  detail::chain_rule(p, config, u, target.gradient(z) - score, out);
  return out;
}

/**
 * M-sample reparameterization estimate of the energy gradient
 * (1/M) sum_m grad_lambda l(T_lambda(u_m)).
 */
template <Target T>
GradientEstimate energy_grad(const VariationalParams& p,
                             const FamilyConfig& config, const T& target, int M,
                             Stream& rng) {
  detail::require(M >= 1, "energy_grad: M must be >= 1");
  detail::check_target(config, target);
  const Eigen::MatrixXd C = scale_matrix(p, config);
  const auto Cl = C.triangularView<Eigen::Lower>();
  detail::MomentAccumulator acc(config.num_params());
  Eigen::VectorXd g(config.num_params());
  for (int k = 0; k < M; ++k) {
    const Eigen::VectorXd u = rng.normal_vector(config.dim);
    const Eigen::VectorXd z = Cl * u + p.m;
    detail::chain_rule(p, config, u, target.gradient(z), g);
    acc.add(g);
  }
  return acc.finish();
}

// Closed-form entropy estimator: energy_grad + grad h.
template <Target T>
GradientEstimate total_grad_cfe(const VariationalParams& p,
                                const FamilyConfig& config, const T& target,
                                int M, Stream& rng) {
  GradientEstimate est = energy_grad(p, config, target, M, rng);
  est.mean += neg_entropy_grad(p, config);
  return est;
}

template <Target T>
GradientEstimate total_grad_stl(const VariationalParams& p,
                                const FamilyConfig& config, const T& target,
                                int M, Stream& rng) {
  detail::require(M >= 1, "total_grad_stl: M must be >= 1");
  detail::check_target(config, target);
  const Eigen::MatrixXd C = scale_matrix(p, config);
  const auto Cl = C.triangularView<Eigen::Lower>();
  detail::MomentAccumulator acc(config.num_params());
  Eigen::VectorXd g(config.num_params());
  for (int k = 0; k < M; ++k) {
    const Eigen::VectorXd u = rng.normal_vector(config.dim);
    const Eigen::VectorXd z = Cl * u + p.m;
    const Eigen::VectorXd score = Cl.transpose().solve(u);
    detail::chain_rule(p, config, u, target.gradient(z) - score, g);
    acc.add(g);
  }
  return acc.finish();
}

template <Target T>
GradientEstimate total_grad(EstimatorKind kind, const VariationalParams& p,
                            const FamilyConfig& config, const T& target, int M,
                            Stream& rng) {
  return kind == EstimatorKind::cfe ? total_grad_cfe(p, config, target, M, rng)
                                    : total_grad_stl(p, config, target, M, rng);
}

namespace detail {

template <Target T, class Weight>
CoordinateStat coordinate_stat(const VariationalParams& p,
                               const FamilyConfig& config, const T& target,
                               int M, Stream& rng, Weight weight) {
  require(M >= 1, "assumption statistic: M must be >= 1");
  check_target(config, target);
  const Eigen::MatrixXd C = scale_matrix(p, config);
  const auto Cl = C.triangularView<Eigen::Lower>();
  MomentAccumulator acc(config.dim);
  Eigen::VectorXd x(config.dim);
  for (int k = 0; k < M; ++k) {
    const Eigen::VectorXd u = rng.normal_vector(config.dim);
    const Eigen::VectorXd g = target.gradient(Cl * u + p.m);
    for (int i = 0; i < config.dim; ++i) x[i] = g[i] * u[i] * weight(i);
    acc.add(x);
  }
  const GradientEstimate est = acc.finish();
  return {est.mean, est.standard_error()};
}

}  // namespace detail

/// Estimates E g_i(lambda; u) u_i per coordinate, g = grad l(T_lambda(u)).
template <Target T>
CoordinateStat assumption_convexity_stat(const VariationalParams& p,
                                         const FamilyConfig& config,
                                         const T& target, int M, Stream& rng) {
  return detail::coordinate_stat(p, config, target, M, rng,
                                 [](int) { return 1.0; });
}

/// Estimates E g_i(lambda; u) u_i phi''(s_i) per coordinate.
template <Target T>
CoordinateStat assumption_smoothness_stat(const VariationalParams& p,
                                          const FamilyConfig& config,
                                          const T& target, int M, Stream& rng) {
  return detail::coordinate_stat(
      p, config, target, M, rng,
      [&](int i) { return config.conditioner.d2(p.s[i]); });
}

/**
 * Central finite differences of a scalar objective over a flat vector,
 * (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
 */
inline Eigen::VectorXd finite_difference(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& x, double step) {
  detail::require(step > 0, "finite_difference: step must be > 0");
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double hi = objective(probe);
    probe[i] = x[i] - step;
    const double lo = objective(probe);
    probe[i] = x[i];
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

}  // namespace bbvi

#endif
