#ifndef BBVI_SYNTHETIC_HPP
#define BBVI_SYNTHETIC_HPP

#include <bbvi/errors.hpp>
#include <bbvi/random.hpp>
#include <bbvi/targets.hpp>
#include <Eigen/Dense>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <vector>

namespace bbvi {

// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
inline Eigen::MatrixXd random_orthogonal(int d, Stream& rng) {
  const Eigen::MatrixXd G = rng.normal_matrix(d, d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

/**
 * Gaussian target with precision A = Q diag(eig) Q^T where the largest
 * eigenvalue is `smoothness`, the smallest smoothness / kappa, and the rest
 * are log-uniform in between. The mean is drawn from N(0, I).
 */
inline QuadraticTarget make_conditioned_gaussian(int d, double kappa,
                                                 double smoothness, Stream& rng) {
  detail::require(d >= 1, "make_conditioned_gaussian: d must be >= 1");
  detail::require(kappa >= 1, "make_conditioned_gaussian: kappa must be >= 1");
  detail::require(smoothness > 0, "make_conditioned_gaussian: L must be > 0");
  detail::require(d >= 2 || kappa == 1,
                  "make_conditioned_gaussian: kappa > 1 needs d >= 2");

  const double lo = smoothness / kappa;
  Eigen::MatrixXd A;
  if (kappa == 1) {
    A = smoothness * Eigen::MatrixXd::Identity(d, d);
  } else {
    std::vector<double> eig(d);
    eig[0] = smoothness;
    eig[d - 1] = lo;
    for (int i = 1; i + 1 < d; ++i)
      eig[i] = std::exp(rng.uniform(std::log(lo), std::log(smoothness)));
    std::sort(eig.begin(), eig.end(), std::greater<>());
    const Eigen::MatrixXd Q = random_orthogonal(d, rng);
    const Eigen::Map<const Eigen::VectorXd> ev(eig.data(), d);
    A = Q * ev.asDiagonal() * Q.transpose();
    A = (0.5 * (A + A.transpose())).eval();
  }
  Eigen::VectorXd mu = rng.normal_vector(d);
  return QuadraticTarget(std::move(A), std::move(mu));
}

}  // namespace bbvi

#endif
