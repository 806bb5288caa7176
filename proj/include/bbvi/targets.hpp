#ifndef BBVI_TARGETS_HPP
#define BBVI_TARGETS_HPP

#include <bbvi/errors.hpp>
#include <bbvi/params.hpp>
#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <concepts>

namespace bbvi {

/**
 * A negative log joint l(z) = -log p(z, x) exposed through its value and
 * gradient only, plus the strong-convexity and smoothness constants used by
 * stepsize rules.
 */
template <class T>
concept Target = requires(const T& t, const Eigen::VectorXd& z) {
  { t.dim() } -> std::convertible_to<int>;
  { t.value(z) } -> std::convertible_to<double>;
  { t.gradient(z) } -> std::convertible_to<Eigen::VectorXd>;
  { t.strong_convexity() } -> std::convertible_to<double>;
  { t.smoothness() } -> std::convertible_to<double>;
};

/**
 * l(z) = 1/2 (z - mu)^T A (z - mu) + offset with A symmetric positive
 * definite. The posterior is N(mu, A^{-1}).
 */
class QuadraticTarget {
 public:
  QuadraticTarget(Eigen::MatrixXd A, Eigen::VectorXd mu, double offset = 0.0)
      : A_(std::move(A)), mu_(std::move(mu)), offset_(offset) {
    detail::require(A_.rows() == A_.cols(), "QuadraticTarget: A must be square");
    detail::require(A_.rows() >= 1, "QuadraticTarget: empty A");
    detail::require_dim(mu_.size(), A_.rows(), "QuadraticTarget.mu");
    const double scale = std::max(1.0, A_.cwiseAbs().maxCoeff());
    detail::require((A_ - A_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
                    "QuadraticTarget: A is not symmetric");
    A_ = 0.5 * (A_ + A_.transpose()).eval();
    llt_.compute(A_);
    if (llt_.info() != Eigen::Success)
      throw contract_violation("QuadraticTarget: A is not positive definite");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A_, Eigen::EigenvaluesOnly);
    eig_min_ = eig.eigenvalues().minCoeff();
    eig_max_ = eig.eigenvalues().maxCoeff();
    if (!(eig_min_ > 0))
      throw contract_violation("QuadraticTarget: A is not positive definite");
    log_det_A_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  int dim() const { return static_cast<int>(mu_.size()); }
  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  double offset() const { return offset_; }
  double log_det_A() const { return log_det_A_; }
  const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }

  double strong_convexity() const { return eig_min_; }
  double smoothness() const { return eig_max_; }
  double condition_number() const { return eig_max_ / eig_min_; }

  double value(const Eigen::VectorXd& z) const {
    detail::require_dim(z.size(), dim(), "neg_log_joint");
    const Eigen::VectorXd r = z - mu_;
    return 0.5 * r.dot(A_ * r) + offset_;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& z) const {
    detail::require_dim(z.size(), dim(), "grad_neg_log_joint");
    return A_ * (z - mu_);
  }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd mu_;
  double offset_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double eig_min_ = 0, eig_max_ = 0, log_det_A_ = 0;
};

/**
 * Bayesian logistic regression with a N(0, alpha^{-1} I) prior:
 * l(z) = sum_i log(1 + exp(-y_i x_i^T z)) + alpha/2 ||z||^2.
 *
 * strong_convexity() is alpha; smoothness() is the upper bound
 * alpha + lambda_max(X^T X) / 4.
 */
class LogisticTarget {
 public:
  LogisticTarget(Eigen::MatrixXd X, Eigen::VectorXd y, double alpha)
      : X_(std::move(X)), y_(std::move(y)), alpha_(alpha) {
    detail::require(alpha_ > 0, "LogisticTarget: alpha must be > 0");
    detail::require_dim(y_.size(), X_.rows(), "LogisticTarget.y");
    for (Eigen::Index i = 0; i < y_.size(); ++i)
      detail::require(y_[i] == 1.0 || y_[i] == -1.0,
                      "LogisticTarget: labels must be -1 or +1");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        X_.transpose() * X_, Eigen::EigenvaluesOnly);
    smooth_ = alpha_ + 0.25 * std::max(0.0, eig.eigenvalues().maxCoeff());
  }

  int dim() const { return static_cast<int>(X_.cols()); }
  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::VectorXd& y() const { return y_; }
  double alpha() const { return alpha_; }

  double strong_convexity() const { return alpha_; }
  double smoothness() const { return smooth_; }

  double value(const Eigen::VectorXd& z) const {
    detail::require_dim(z.size(), dim(), "neg_log_joint");
    const Eigen::VectorXd margin = y_.cwiseProduct(X_ * z);
    double out = 0.5 * alpha_ * z.squaredNorm();
    for (Eigen::Index i = 0; i < margin.size(); ++i) out += softplus(-margin[i]);
    return out;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& z) const {
    detail::require_dim(z.size(), dim(), "grad_neg_log_joint");
    const Eigen::VectorXd margin = y_.cwiseProduct(X_ * z);
    Eigen::VectorXd w(margin.size());
    for (Eigen::Index i = 0; i < margin.size(); ++i)
      w[i] = -y_[i] * sigmoid(-margin[i]);
    return X_.transpose() * w + alpha_ * z;
  }

 private:
  static double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  static double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  double alpha_;
  double smooth_ = 0;
};

static_assert(Target<QuadraticTarget>);
static_assert(Target<LogisticTarget>);

template <Target T>
double neg_log_joint(const T& target, const Eigen::VectorXd& z) {
  return target.value(z);
}

template <Target T>
Eigen::VectorXd grad_neg_log_joint(const T& target, const Eigen::VectorXd& z) {
  return target.gradient(z);
}

/**
 * Exact minimizer of the negative ELBO for a quadratic target under the
 * linear parameterization: m* = mu, C* = lower Cholesky factor of A^{-1}.
 * Mean-field is only supported for diagonal A, where it is exact.
 */
inline VariationalParams optimal_params(const QuadraticTarget& target,
                                        const FamilyConfig& family) {
  detail::require_dim(family.dim, target.dim(), "optimal_params");
  if (!family.conditioner.is_linear())
    throw unsupported_configuration(
        "optimal_params: requires the identity conditioner");
  const int d = target.dim();
  const Eigen::MatrixXd& A = target.A();
  VariationalParams out{target.mu(), Eigen::VectorXd(d),
                        Eigen::VectorXd::Zero(family.num_offdiag())};
  if (family.kind == FamilyKind::meanfield) {
    const Eigen::MatrixXd off = A - Eigen::MatrixXd(A.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() != 0.0)
      throw unsupported_configuration(
          "optimal_params: mean-field optimum is not the posterior for "
          "non-diagonal A");
    out.s = A.diagonal().cwiseSqrt().cwiseInverse();
    return out;
  }
  const Eigen::MatrixXd cov =
      target.llt().solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::LLT<Eigen::MatrixXd> chol(0.5 * (cov + cov.transpose()));
  if (chol.info() != Eigen::Success)
    throw numeric_failure("optimal_params: covariance factorization failed");
  const Eigen::MatrixXd C = chol.matrixL();
  out.s = C.diagonal();
  for (int i = 1; i < d; ++i)
    for (int j = 0; j < i; ++j) out.L[tril_index(i, j)] = C(i, j);
  return out;
}

}  // namespace bbvi

#endif
