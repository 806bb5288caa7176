#include <bbvi/estimators.hpp>
#include <bbvi/random.hpp>
#include <bbvi/synthetic.hpp>
#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace bbvi;

namespace {

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

QuadraticTarget unit_quadratic() {
  return QuadraticTarget(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
}

QuadraticTarget counterexample_quadratic() {
  Eigen::MatrixXd A(2, 2);
  A << 1, -2, -2, 5;
  return QuadraticTarget(A, Eigen::VectorXd::Zero(2));
}

void expect_within_4se(const GradientEstimate& est, const Eigen::VectorXd& exact) {
  const Eigen::VectorXd se = est.standard_error();
  for (Eigen::Index i = 0; i < exact.size(); ++i)
    EXPECT_LE(std::abs(est.mean[i] - exact[i]), 4 * se[i] + 1e-12)
        << "coordinate " << i;
}

}  // namespace

TEST(EnergyGrad, HandChainRule) {
  const FamilyConfig f = family(FamilyKind::meanfield, ConditionerKind::identity, 1);
  const VariationalParams p{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), Eigen::VectorXd(0)};
  const Eigen::VectorXd g =
      energy_grad_single(p, f, unit_quadratic(), Eigen::VectorXd::Constant(1, 2.0));
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
}

TEST(StlGrad, HandComputation) {
  // m = 0, s = 2, A = 1, u = 2: z = 4, grad l = 4, C^{-T} u = 1,
  // so the path term is 3 and d/ds = u * 3 = 6.
  const FamilyConfig f = family(FamilyKind::meanfield, ConditionerKind::identity, 1);
  const VariationalParams p{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.0),
                            Eigen::VectorXd(0)};
  const Eigen::VectorXd g =
      stl_grad_single(p, f, unit_quadratic(), Eigen::VectorXd::Constant(1, 2.0));
  EXPECT_DOUBLE_EQ(g[0], 3.0);
  EXPECT_DOUBLE_EQ(g[1], 6.0);
}

TEST(EnergyGrad, SingleSampleMatchesFiniteDifferences) {
  Stream rng(31);
  const QuadraticTarget quad = make_conditioned_gaussian(3, 10, 4, rng);
  const Eigen::MatrixXd X = rng.normal_matrix(25, 3);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) y[i] = i % 3 ? 1.0 : -1.0;
  const LogisticTarget logistic(X, y, 1.0);
  for (auto kind : {FamilyKind::cholesky, FamilyKind::meanfield})
    for (auto cond : {ConditionerKind::identity, ConditionerKind::softplus,
                      ConditionerKind::exp}) {
      const FamilyConfig f = family(kind, cond, 3);
      for (int k = 0; k < 100; ++k) {
        const VariationalParams p = random_params(f, rng);
        const Eigen::VectorXd u = rng.normal_vector(3);
        auto check = [&](const auto& target) {
          const Eigen::VectorXd fd = finite_difference(
              [&](const Eigen::VectorXd& x) {
                return target.value(reparameterize(unflatten(x, f), f, u));
              },
              flatten(p), 1e-6);
          EXPECT_LE(oracle::rel_err(energy_grad_single(p, f, target, u), fd), 1e-6);
        };
        check(quad);
        check(logistic);
      }
    }
}

TEST(Estimators, UnbiasedAgainstClosedForm) {
  Stream rng(32);
  for (int k = 0; k < 5; ++k) {
    const QuadraticTarget t = make_conditioned_gaussian(3, 5, 2, rng);
    for (auto cond : {ConditionerKind::identity, ConditionerKind::softplus}) {
      const FamilyConfig f = family(FamilyKind::cholesky, cond, 3);
      const VariationalParams p = random_params(f, rng);
      const Eigen::VectorXd exact_total = elbo_closed_form_grad(p, f, t);
      expect_within_4se(energy_grad(p, f, t, 100000, rng),
                        energy_closed_form_grad(p, f, t));
      expect_within_4se(total_grad_cfe(p, f, t, 100000, rng), exact_total);
      expect_within_4se(total_grad_stl(p, f, t, 100000, rng), exact_total);
    }
  }
}

TEST(Estimators, SampleCountChangesMeanNotExpectation) {
  Stream rng(33);
  const QuadraticTarget t = make_conditioned_gaussian(2, 3, 2, rng);
  const FamilyConfig f = family(FamilyKind::cholesky, ConditionerKind::identity, 2);
  const VariationalParams p = random_params(f, rng);
  Stream a(1), b(1);
  const GradientEstimate one = total_grad_cfe(p, f, t, 1, a);
  const GradientEstimate ten = total_grad_cfe(p, f, t, 10, b);
  EXPECT_NE(one.mean, ten.mean);
  EXPECT_EQ(one.samples_used, 1);
  EXPECT_EQ(ten.samples_used, 10);
  // Averaging many M = 10 estimates recovers the closed form.
  detail::MomentAccumulator acc(f.num_params());
  for (int k = 0; k < 20000; ++k) acc.add(total_grad_cfe(p, f, t, 10, rng).mean);
  expect_within_4se(acc.finish(), elbo_closed_form_grad(p, f, t));
}

TEST(Estimators, EntropyComponentIsExact) {
  Stream rng(34);
  const QuadraticTarget t = make_conditioned_gaussian(3, 4, 2, rng);
  const FamilyConfig f = family(FamilyKind::cholesky, ConditionerKind::softplus, 3);
  const VariationalParams p = random_params(f, rng);
  Stream a(5), b(5);
  const GradientEstimate energy = energy_grad(p, f, t, 7, a);
  const GradientEstimate total = total_grad_cfe(p, f, t, 7, b);
  EXPECT_LE((total.mean - energy.mean - neg_entropy_grad(p, f)).norm(), 1e-14);
}

TEST(Estimators, BehaviourAtOptimum) {
  Stream rng(35);
  const QuadraticTarget t = make_conditioned_gaussian(4, 10, 5, rng);
  const FamilyConfig f = family(FamilyKind::cholesky, ConditionerKind::identity, 4);
  const VariationalParams star = optimal_params(t, f);
  for (int k = 0; k < 100; ++k)
    EXPECT_LE(stl_grad_single(star, f, t, 3.0 * rng.normal_vector(4)).norm(), 1e-9);
  const GradientEstimate stl = total_grad_stl(star, f, t, 1000, rng);
  EXPECT_LE(stl.per_sample_trace_variance, 1e-18);
  const GradientEstimate cfe = total_grad_cfe(star, f, t, 100000, rng);
  EXPECT_GT(cfe.per_sample_trace_variance, 0.1);
  expect_within_4se(cfe, Eigen::VectorXd::Zero(f.num_params()));
}

TEST(Estimators, Errors) {
  const FamilyConfig f = family(FamilyKind::meanfield, ConditionerKind::identity, 1);
  const VariationalParams p{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), Eigen::VectorXd(0)};
  Stream rng(1);
  EXPECT_THROW(energy_grad(p, f, unit_quadratic(), 0, rng), contract_violation);
  EXPECT_THROW(total_grad_stl(p, f, counterexample_quadratic(), 3, rng), contract_violation);
  const VariationalParams bad{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, -1.0),
                              Eigen::VectorXd(0)};
  EXPECT_THROW(total_grad_cfe(bad, f, unit_quadratic(), 3, rng), domain_violation);
  EXPECT_EQ(parse_estimator("stl"), EstimatorKind::stl);
  EXPECT_THROW(parse_estimator("reinforce"), contract_violation);
}

TEST(AssumptionStats, CounterExample) {
  const FamilyConfig f = family(FamilyKind::cholesky, ConditionerKind::identity, 2);
  const VariationalParams p{Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones(),
                            Eigen::VectorXd::Ones(1)};
  Stream rng(36);
  const CoordinateStat stat =
      assumption_convexity_stat(p, f, counterexample_quadratic(), 1000000, rng);
  EXPECT_NEAR(stat.mean[0], -1.0, 0.01);
  // z = (u1, u1 + u2) so g_2 = 3 u1 + 5 u2 and E g_2 u_2 = 5.
  EXPECT_NEAR(stat.mean[1], 5.0, 4 * stat.se[1]);
}

TEST(AssumptionStats, MeanFieldConvexTargetIsNonNegative) {
  Stream rng(37);
  const QuadraticTarget t = make_conditioned_gaussian(4, 10, 5, rng);
  const FamilyConfig f = family(FamilyKind::meanfield, ConditionerKind::identity, 4);
  const CoordinateStat stat =
      assumption_convexity_stat(random_params(f, rng), f, t, 100000, rng);
  for (int i = 0; i < 4; ++i) EXPECT_GE(stat.mean[i], -4 * stat.se[i]);

  const QuadraticTarget id(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3));
  const FamilyConfig g = family(FamilyKind::cholesky, ConditionerKind::identity, 3);
  const CoordinateStat ones = assumption_convexity_stat(
      isotropic_params(g, 1.0, Eigen::VectorXd::Zero(3)), g, id, 100000, rng);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(ones.mean[i], 1.0, 4 * ones.se[i]);
}

TEST(AssumptionStats, Smoothness) {
  Stream rng(38);
  const FamilyConfig lin = family(FamilyKind::cholesky, ConditionerKind::identity, 2);
  const CoordinateStat zero = assumption_smoothness_stat(
      random_params(lin, rng), lin, counterexample_quadratic(), 1000, rng);
  EXPECT_EQ(zero.mean, Eigen::Vector2d::Zero());

  // d = 1, A = 1, softplus at s = 0: E[ln2 u^2 / 4] = ln2 / 4.
  const FamilyConfig soft1 = family(FamilyKind::meanfield, ConditionerKind::softplus, 1);
  const VariationalParams p0{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), Eigen::VectorXd(0)};
  const CoordinateStat s0 = assumption_smoothness_stat(p0, soft1, unit_quadratic(), 1000000, rng);
  EXPECT_NEAR(s0.mean[0], 0.1732868, 4 * s0.se[0]);

  const QuadraticTarget diag(Eigen::Vector3d(1, 4, 9).asDiagonal().toDenseMatrix(),
                             Eigen::Vector3d(1, -1, 2));
  const FamilyConfig soft3 = family(FamilyKind::meanfield, ConditionerKind::softplus, 3);
  for (int k = 0; k < 10; ++k) {
    const CoordinateStat s =
        assumption_smoothness_stat(random_params(soft3, rng), soft3, diag, 20000, rng);
    for (int i = 0; i < 3; ++i) EXPECT_LE(s.mean[i], 0.26034 * 9 + 4 * s.se[i]);
  }
}

TEST(FiniteDifference, Examples) {
  const Eigen::Vector3d x(1.5, -2, 0.25);
  const Eigen::VectorXd g = finite_difference(
      [](const Eigen::VectorXd& v) { return 0.5 * v.squaredNorm(); }, x, 1e-5);
  EXPECT_LE((g - x).norm() / x.norm(), 1e-8);
  EXPECT_EQ(finite_difference([](const Eigen::VectorXd&) { return 3.0; }, x, 1e-5),
            Eigen::Vector3d::Zero());
  EXPECT_THROW(finite_difference([](const Eigen::VectorXd&) { return 0.0; }, x, 0.0),
               contract_violation);
}
