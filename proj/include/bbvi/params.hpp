#ifndef BBVI_PARAMS_HPP
#define BBVI_PARAMS_HPP

#include <bbvi/conditioner.hpp>
#include <bbvi/errors.hpp>
#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <string_view>

namespace bbvi {

enum class FamilyKind { cholesky, meanfield };

inline std::string to_string(FamilyKind k) {
  return k == FamilyKind::cholesky ? "cholesky" : "meanfield";
}

inline FamilyKind parse_family(std::string_view name) {
  if (name == "cholesky" || name == "fullrank") return FamilyKind::cholesky;
  if (name == "meanfield" || name == "mean-field") return FamilyKind::meanfield;
  throw contract_violation("unknown family '" + std::string(name) + "'");
}

/**
 * Base distribution of the reparameterization. Components are i.i.d. with
 * zero mean, unit variance, zero third moment and kurtosis E u_i^4 = k_phi.
 * Only the standard normal ships.
 */
struct BaseDistribution {
  enum class Kind { standard_normal };
  Kind kind = Kind::standard_normal;
  double kurtosis = 3.0;

  // Differential entropy of the d-dimensional base.
  double entropy(int d) const {
    return 0.5 * d * std::log(2.0 * M_PI * M_E);
  }
};

struct FamilyConfig {
  FamilyKind kind = FamilyKind::cholesky;
  Conditioner conditioner{};
  BaseDistribution base{};
  int dim = 1;

  int num_offdiag() const {
    return kind == FamilyKind::cholesky ? dim * (dim - 1) / 2 : 0;
  }
  int num_params() const { return 2 * dim + num_offdiag(); }

  // Offsets into the flattened vector [m; s; row-major strict lower L].
  int s_offset() const { return dim; }
  int l_offset() const { return 2 * dim; }
};

// Position of L(i, j), j < i, inside the strict-lower-triangle block.
inline int tril_index(int i, int j) { return i * (i - 1) / 2 + j; }

/**
 * Dimension-dependent variance constant: d + k_phi for the Cholesky family,
 * 2 k_phi sqrt(d) + 1 for mean-field.
 */
inline double variance_constant(const FamilyConfig& config) {
  const double k = config.base.kurtosis;
  const double d = config.dim;
  return config.kind == FamilyKind::cholesky ? d + k
                                             : 2.0 * k * std::sqrt(d) + 1.0;
}

/**
 * Location m, diagonal pre-parameters s and (Cholesky only) the strict lower
 * triangle of the scale, stored row-major.
 */
struct VariationalParams {
  Eigen::VectorXd m;
  Eigen::VectorXd s;
  Eigen::VectorXd L;

  int dim() const { return static_cast<int>(m.size()); }

  bool operator==(const VariationalParams& o) const {
    return m == o.m && s == o.s && L == o.L;
  }
};

inline void check_consistent(const VariationalParams& p,
                             const FamilyConfig& config) {
  detail::require_dim(p.m.size(), config.dim, "params.m");
  detail::require_dim(p.s.size(), config.dim, "params.s");
  detail::require_dim(p.L.size(), config.num_offdiag(), "params.L");
}

inline Eigen::VectorXd flatten(const VariationalParams& p) {
  Eigen::VectorXd out(p.m.size() + p.s.size() + p.L.size());
  out << p.m, p.s, p.L;
  return out;
}

inline VariationalParams unflatten(const Eigen::VectorXd& lambda,
                                   const FamilyConfig& config) {
  detail::require_dim(lambda.size(), config.num_params(), "unflatten");
  const int d = config.dim;
  return {lambda.head(d), lambda.segment(d, d),
          lambda.tail(config.num_offdiag())};
}

/**
 * Parameters with location m0 and scale C0 = scale * I; s is set to
 * phi^{-1}(scale) so the conditioned diagonal equals `scale`.
 */
inline VariationalParams isotropic_params(const FamilyConfig& config,
                                          double scale,
                                          const Eigen::VectorXd& m0) {
  detail::require_dim(m0.size(), config.dim, "isotropic_params.m0");
  return {m0,
          Eigen::VectorXd::Constant(config.dim,
                                    config.conditioner.inverse(scale)),
          Eigen::VectorXd::Zero(config.num_offdiag())};
}

}  // namespace bbvi

#endif
