#ifndef BBVI_FAMILY_HPP
#define BBVI_FAMILY_HPP

#include <bbvi/errors.hpp>
#include <bbvi/params.hpp>
#include <bbvi/random.hpp>
#include <bbvi/targets.hpp>
#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace bbvi {

namespace detail {

inline void check_domain(const VariationalParams& p, const FamilyConfig& config) {
  if (config.conditioner.positive_codomain()) return;
  for (Eigen::Index i = 0; i < p.s.size(); ++i)
    if (!(p.s[i] > 0))
      throw domain_violation("identity conditioner requires s_" +
                             std::to_string(i) + " > 0 (got " +
                             std::to_string(p.s[i]) + ")");
}

}  // namespace detail

/**
 * Lower-triangular scale C = D_phi(s) + L (Cholesky) or D_phi(s)
 * (mean-field).
 */
inline Eigen::MatrixXd scale_matrix(const VariationalParams& p,
                                    const FamilyConfig& config) {
  check_consistent(p, config);
  detail::check_domain(p, config);
  const int d = config.dim;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) C(i, i) = config.conditioner.value(p.s[i]);
  if (config.kind == FamilyKind::cholesky)
    for (int i = 1; i < d; ++i)
      for (int j = 0; j < i; ++j) C(i, j) = p.L[tril_index(i, j)];
  return C;
}

// T_lambda(u) = C u + m
inline Eigen::VectorXd reparameterize(const VariationalParams& p,
                                      const FamilyConfig& config,
                                      const Eigen::VectorXd& u) {
  detail::require_dim(u.size(), config.dim, "reparameterize.u");
  const Eigen::MatrixXd C = scale_matrix(p, config);
  return C.triangularView<Eigen::Lower>() * u + p.m;
}

// M i.i.d. draws from q_lambda, one per column.
inline Eigen::MatrixXd sample(const VariationalParams& p,
                              const FamilyConfig& config, Stream& rng, int M) {
  detail::require(M >= 1, "sample: M must be >= 1");
  const Eigen::MatrixXd C = scale_matrix(p, config);
  Eigen::MatrixXd Z = rng.normal_matrix(config.dim, M);
  Z = (C.triangularView<Eigen::Lower>() * Z).eval();
  Z.colwise() += p.m;
  return Z;
}

/**
 * Negative entropy h(lambda) = -H(base) - sum_i log phi(s_i). Only the
 * diagonal pre-parameters enter.
 */
inline double neg_entropy(const VariationalParams& p,
                          const FamilyConfig& config) {
  check_consistent(p, config);
  detail::check_domain(p, config);
  double out = -config.base.entropy(config.dim);
  for (Eigen::Index i = 0; i < p.s.size(); ++i)
    out -= config.conditioner.log_value(p.s[i]);
  return out;
}

inline Eigen::VectorXd neg_entropy_grad(const VariationalParams& p,
                                        const FamilyConfig& config) {
  check_consistent(p, config);
  detail::check_domain(p, config);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(config.num_params());
  for (int i = 0; i < config.dim; ++i)
    g[config.s_offset() + i] = -config.conditioner.dlog(p.s[i]);
  return g;
}

namespace detail {

inline double log_det_cov(const Eigen::MatrixXd& C) {
  const Eigen::VectorXd diag = C.diagonal();
  if (!(diag.array() > 0).all())
    throw numeric_failure("scale matrix has a non-positive diagonal");
  return 2.0 * diag.array().log().sum();
}

// tr(A C C^T) = ||L_A^T C||_F^2 with A = L_A L_A^T
inline double trace_A_cov(const QuadraticTarget& target,
                          const Eigen::MatrixXd& C) {
  return (target.A() * C).cwiseProduct(C).sum();
}

}  // namespace detail

/**
 * KL(q_lambda || N(mu, A^{-1})) in closed form:
 * 1/2 [tr(A C C^T) + (m - mu)^T A (m - mu) - d - log det A - log det C C^T].
 */
inline double kl_to_gaussian(const VariationalParams& p,
                             const FamilyConfig& config,
                             const QuadraticTarget& target) {
  detail::require_dim(config.dim, target.dim(), "kl_to_gaussian");
  const Eigen::MatrixXd C = scale_matrix(p, config);
  const Eigen::VectorXd r = p.m - target.mu();
  const double kl = 0.5 * (detail::trace_A_cov(target, C) + r.dot(target.A() * r) -
                           config.dim - target.log_det_A() - detail::log_det_cov(C));
  if (!std::isfinite(kl)) throw numeric_failure("kl_to_gaussian: non-finite");
  return kl;
}

// Energy f(lambda) = E l(T_lambda(u)), exact for a quadratic target.
inline double energy_closed_form(const VariationalParams& p,
                                 const FamilyConfig& config,
                                 const QuadraticTarget& target) {
  detail::require_dim(config.dim, target.dim(), "energy_closed_form");
  const Eigen::MatrixXd C = scale_matrix(p, config);
  const Eigen::VectorXd r = p.m - target.mu();
  return 0.5 * detail::trace_A_cov(target, C) + 0.5 * r.dot(target.A() * r) +
         target.offset();
}

/**
 * Analytic gradient of the exact energy: d/dm = A (m - mu),
 * d/dL_ij = (A C)_ij, d/ds_i = (A C)_ii phi'(s_i).
 */
inline Eigen::VectorXd energy_closed_form_grad(const VariationalParams& p,
                                               const FamilyConfig& config,
                                               const QuadraticTarget& target) {
  detail::require_dim(config.dim, target.dim(), "energy_closed_form_grad");
  const int d = config.dim;
  const Eigen::MatrixXd C = scale_matrix(p, config);
  const Eigen::MatrixXd AC = target.A() * C;
  Eigen::VectorXd g(config.num_params());
  g.head(d) = target.A() * (p.m - target.mu());
  for (int i = 0; i < d; ++i)
    g[config.s_offset() + i] = AC(i, i) * config.conditioner.d1(p.s[i]);
  if (config.kind == FamilyKind::cholesky)
    for (int i = 1; i < d; ++i)
      for (int j = 0; j < i; ++j) g[config.l_offset() + tril_index(i, j)] = AC(i, j);
  return g;
}

// Negative ELBO F = f + h, exact for a quadratic target.
inline double elbo_closed_form(const VariationalParams& p,
                               const FamilyConfig& config,
                               const QuadraticTarget& target) {
  return energy_closed_form(p, config, target) + neg_entropy(p, config);
}

inline Eigen::VectorXd elbo_closed_form_grad(const VariationalParams& p,
                                             const FamilyConfig& config,
                                             const QuadraticTarget& target) {
  return energy_closed_form_grad(p, config, target) + neg_entropy_grad(p, config);
}

}  // namespace bbvi

#endif
