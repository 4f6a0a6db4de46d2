#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "stabcp/data.hpp"
#include "stabcp/models.hpp"

using namespace stabcp;

namespace {

TabularDataset fig2_like(Index n, std::uint64_t seed) {
  return gen_linear_gaussian({GeneratorKind::LinearGaussian, n, 100, 1.0, seed})
      .dataset;
}

}  // namespace

// --- prediction -------------------------------------------------------------

TEST(LinearModel, ZeroCoefficientsPredictZero) {
  const LinearModel m(Vector::Zero(3));
  EXPECT_EQ(m.predict(Vector{{1.0, -4.0, 9.0}}), 0.0);
}

TEST(LinearModel, UnitCoefficientPicksTheFirstCoordinate) {
  const LinearModel m(Vector{{1.0, 0.0, 0.0}});
  EXPECT_EQ(m.predict(Vector{{2.5, -4.0, 9.0}}), 2.5);
}

TEST(LinearModel, DimensionMismatchIsRejected) {
  const LinearModel m(Vector::Zero(3));
  EXPECT_THROW(m.predict(Vector::Zero(2)), Error);
}

// --- ridge ------------------------------------------------------------------

TEST(Ridge, UnpenalizedTwoIdenticalRowsGiveTheMean) {
  const RidgeModel m = fit_ridge(Matrix::Ones(2, 1), Vector{{2.0, 4.0}}, 0.0);
  EXPECT_NEAR(m.coefficients()(0), 3.0, 1e-12);
}

TEST(Ridge, SingularUnpenalizedSystemIsANumericalError) {
  Matrix x = Matrix::Zero(3, 2);
  x.col(0).setOnes();
  try {
    fit_ridge(x, Vector::Ones(3), 0.0);
    FAIL() << "expected a numerical error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numerical);
  }
}

TEST(Ridge, MatchesQrOracle) {
  const auto d = oracle::random_dataset(20, 5, 9);
  for (double lambda : {0.01, 0.3, 4.0}) {
    const RidgeModel m = fit_ridge(d, 1.7, lambda);
    const Vector expected =
        oracle::ridge(oracle::augmented_x(d), oracle::augmented_y(d, 1.7), lambda);
    EXPECT_LT((m.coefficients() - expected).norm(), 1e-10 * (1 + expected.norm()));
  }
}

TEST(Ridge, CoefficientNormShrinksMonotonicallyInLambda) {
  const auto d = oracle::random_dataset(15, 4, 2);
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda = 1e-3; lambda < 1e4; lambda *= 3.0) {
    const double norm = fit_ridge(d, 0.5, lambda).coefficients().norm();
    EXPECT_LT(norm, previous);
    previous = norm;
  }
  EXPECT_LT(previous, 1e-3);
}

TEST(Ridge, SlopeEqualsTheDifferenceOfTwoRefits) {
  const auto d = oracle::random_dataset(10, 3, 44);
  const RidgeModel m = fit_ridge(d, 0.3, 0.25);
  const double b = m.linear_response(d.test_point()).b;
  const double at1 = oracle::ridge_predictions(d, 1.0, 0.25)(10);
  const double at0 = oracle::ridge_predictions(d, 0.0, 0.25)(10);
  EXPECT_NEAR(b, at1 - at0, 1e-12);
}

TEST(Ridge, PredictionDecomposesIntoTheLinearResponse) {
  const auto d = oracle::random_dataset(12, 3, 45);
  const double z = -2.2;
  const RidgeModel m = fit_ridge(d, z, 0.5);
  const auto r = m.linear_response(d.test_point());
  EXPECT_NEAR(m.predict(d.test_point()), r.a + r.b * z, 1e-12);
}

TEST(Ridge, AffineInTheCandidate) {
  const auto d = oracle::random_dataset(25, 4, 46);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const RidgeModel base = fit_ridge(d, 0.0, 0.1);
  const Matrix x = d.augmented_features();
  for (int pair = 0; pair < 100; ++pair) {
    const double z = u(rng), z2 = u(rng);
    const RidgeModel a = fit_ridge(d, z, 0.1);
    const RidgeModel b = fit_ridge(d, z2, 0.1);
    for (Index i = 0; i < x.rows(); ++i) {
      const Vector xi = x.row(i).transpose();
      const double diff = a.predict(xi) - b.predict(xi);
      const double expected = base.linear_response(xi).b * (z - z2);
      EXPECT_NEAR(diff, expected, 1e-8 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST(Ridge, PlainFitHasNoLinearResponse) {
  const RidgeModel m = fit_ridge(Matrix::Identity(3, 3), Vector::Ones(3), 0.1);
  EXPECT_FALSE(m.has_linear_response());
  EXPECT_THROW(m.linear_response(Vector::Ones(3)), Error);
}

TEST(Ridge, PermutingRowsLeavesPredictionsUnchanged) {
  const auto d = oracle::random_dataset(9, 3, 7);
  std::vector<Index> order{8, 0, 7, 1, 6, 2, 5, 3, 4};
  const auto permuted = permute_rows(d, order);
  const RidgeRegressor ridge(0.2);
  const auto a = ridge.fit_augmented(d, 0.4);
  const auto b = ridge.fit_augmented(permuted, 0.4);
  EXPECT_NEAR(a->predict(d.test_point()), b->predict(d.test_point()), 1e-12);
}

TEST(Ridge, RegularityConstants) {
  const auto d = oracle::random_dataset(20, 3, 5);
  const RidgeRegressor ridge(0.7);
  const auto c = ridge.regularity(d, d.target_range());
  EXPECT_FALSE(c.rho.has_value());
  EXPECT_DOUBLE_EQ(c.lambda_sc, 1.4);
  const Matrix x = d.augmented_features();
  const double top =
      Eigen::SelfAdjointEigenSolver<Matrix>(x.transpose() * x).eigenvalues().maxCoeff();
  EXPECT_NEAR(c.nu, 2.0 * top / 21.0, 1e-10);
  EXPECT_GT(c.loss_bound_C, 0.0);
}

// --- LAD-ridge --------------------------------------------------------------

TEST(LadRidge, OneDimensionalShrinkageIsSignConsistent) {
  // Objective |c - beta| + lambda beta^2 per row; minimizer min(c, 1/(2 lambda)).
  for (double c : {3.0, -3.0, 0.4}) {
    LadRidgeOptions o;
    o.lambda_reg = 0.5;
    const auto m = fit_lad_ridge(Matrix::Ones(4, 1), Vector::Constant(4, c), o);
    const double beta = m.coefficients()(0);
    EXPECT_GT(beta * c, 0.0);
    EXPECT_LE(std::abs(beta), std::abs(c) + 1e-9);
    const double expected = std::copysign(std::min(std::abs(c), 1.0), c);
    EXPECT_NEAR(beta, expected, 1e-4);
  }
}

TEST(LadRidge, NeverWorseThanZero) {
  const auto d = fig2_like(30, 1);
  const Matrix x = d.augmented_features();
  const Vector y = augmented_targets(d.targets(), 0.0);
  const auto m = fit_lad_ridge(x, y, {});
  EXPECT_LE(lad_ridge_objective(x, y, m.coefficients(), 0.5),
            lad_ridge_objective(x, y, Vector::Zero(x.cols()), 0.5));
}

TEST(LadRidge, MatchesAHundredTimesLongerReferenceRun) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto d = fig2_like(30, seed);
    const Matrix x = d.augmented_features();
    const Vector y = augmented_targets(d.targets(), 0.0);
    LadRidgeOptions o;
    const auto m = fit_lad_ridge(x, y, o);
    ASSERT_TRUE(m.report().converged);
    LadRidgeOptions longer;
    longer.solver_tol = 1e-14;
    longer.max_iter = 100 * std::max(m.report().iterations, 100);
    const auto ref = fit_lad_ridge(x, y, longer);
    EXPECT_NEAR(lad_ridge_objective(x, y, m.coefficients(), 0.5),
                lad_ridge_objective(x, y, ref.coefficients(), 0.5), 1e-6);
  }
}

TEST(LadRidge, ReportedObjectiveIsMonotoneAndConsistent) {
  const auto d = fig2_like(60, 4);
  const Matrix x = d.augmented_features();
  const Vector y = augmented_targets(d.targets(), 1.5);
  const auto m = fit_lad_ridge(x, y, {});
  const auto& trace = m.report().objective_trace;
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LT(trace[k], trace[k - 1]);
  EXPECT_NEAR(m.report().objective, lad_ridge_objective(x, y, m.coefficients(), 0.5),
              1e-12);
  EXPECT_LE(m.report().duality_gap, 1e-9);
}

TEST(LadRidge, IterationCapIsAWarningNotAFailure) {
  const auto d = fig2_like(30, 5);
  LadRidgeOptions o;
  o.max_iter = 3;
  const auto m = fit_lad_ridge(d, 0.0, o);
  EXPECT_FALSE(m.report().converged);
  EXPECT_EQ(m.report().iterations, 3);
  EXPECT_GT(m.report().duality_gap, o.solver_tol);
}

TEST(LadRidge, ZeroDesignReturnsZero) {
  const auto m = fit_lad_ridge(Matrix::Zero(4, 2), Vector::Ones(4), {});
  EXPECT_TRUE(m.report().converged);
  EXPECT_EQ(m.coefficients(), Vector::Zero(2));
}

TEST(LadRidge, InvalidOptionsAreRejected) {
  LadRidgeOptions o;
  o.lambda_reg = 0.0;
  EXPECT_THROW(fit_lad_ridge(Matrix::Ones(3, 1), Vector::Ones(3), o), Error);
  o = {};
  o.solver_tol = 0.0;
  EXPECT_THROW(fit_lad_ridge(Matrix::Ones(3, 1), Vector::Ones(3), o), Error);
}

TEST(LadRidge, PermutingRowsLeavesPredictionsUnchangedUpToTolerance) {
  const auto d = fig2_like(30, 6);
  std::vector<Index> order(30);
  for (Index k = 0; k < 30; ++k) order[static_cast<std::size_t>(k)] = (7 * k) % 30;
  const auto permuted = permute_rows(d, order);
  const LadRidgeRegressor lad({});
  const double a = lad.fit_augmented(d, 0.0)->predict(d.test_point());
  const double b = lad.fit_augmented(permuted, 0.0)->predict(d.test_point());
  // ||beta - beta*|| <= sqrt(2 tol / (2 lambda)) for both fits.
  const double bound = 2.0 * std::sqrt(1e-9) * d.test_point().norm();
  EXPECT_NEAR(a, b, bound);
}

// --- interpolated model ----------------------------------------------------

TEST(Interpolated, KnotsReproduceTheirFitsExactly) {
  const auto d = oracle::random_dataset(10, 2, 12);
  const LadRidgeRegressor lad({});
  const auto model = build_interpolated_model(d, {-1.0, 0.5, 2.0}, -3.0, 4.0, lad);
  EXPECT_EQ(model.fit_count(), 5u);
  const Matrix x = d.augmented_features();
  for (std::size_t k = 0; k < model.knots().size(); ++k)
    for (Index i = 0; i < x.rows(); ++i)
      EXPECT_EQ(model.predict(x.row(i).transpose(), model.knots()[k]),
                model.knot_models()[k]->predict(x.row(i).transpose()));
}

TEST(Interpolated, MidpointAveragesTheBracketingKnots) {
  const auto d = oracle::random_dataset(10, 2, 13);
  const LadRidgeRegressor lad({});
  const auto model = build_interpolated_model(d, {0.0, 1.0}, -2.0, 3.0, lad);
  const Vector x = d.test_point();
  const double mid = model.predict(x, 0.5);
  const double avg = 0.5 * (model.knot_models()[1]->predict(x) +
                            model.knot_models()[2]->predict(x));
  EXPECT_NEAR(mid, avg, 1e-14);
}

TEST(Interpolated, RidgeInterpolationIsExactEverywhere) {
  const auto d = oracle::random_dataset(15, 3, 14);
  const RidgeRegressor ridge(0.3);
  const auto model = build_interpolated_model(d, {-1.0, 0.2, 1.1}, -4.0, 4.0, ridge);
  const Matrix x = d.augmented_features();
  for (double z : oracle::grid(-6.0, 6.0, 97)) {
    const Vector direct = oracle::ridge_predictions(d, z, 0.3);
    for (Index i = 0; i < x.rows(); ++i)
      EXPECT_NEAR(model.predict(x.row(i).transpose(), z), direct(i), 1e-8);
  }
}

TEST(Interpolated, ContinuousAcrossKnots) {
  const auto d = fig2_like(30, 15);
  const LadRidgeRegressor lad({});
  const std::vector<double> anchors{-1.0, 0.0, 1.5};
  const auto model = build_interpolated_model(d, anchors, -3.0, 3.0, lad);
  const Vector x = d.test_point();
  for (double knot : model.knots()) {
    const double h = 1e-12;
    EXPECT_NEAR(model.predict(x, knot - h), model.predict(x, knot + h), 1e-9);
  }
}

TEST(Interpolated, SegmentsInsideAndAffineExtensionOutside) {
  const auto d = oracle::random_dataset(8, 2, 16);
  const LadRidgeRegressor lad({});
  const auto model = build_interpolated_model(d, {0.0, 1.0}, -1.0, 2.0, lad);
  for (double z : oracle::grid(-1.0, 2.0, 31)) {
    const auto [t, w] = model.segment(z);
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 1.0);
    EXPECT_LE(model.knots()[t], z + 1e-15);
    EXPECT_GE(model.knots()[t + 1], z - 1e-15);
  }
  // Below z_min and above z_max the first and last segments extend linearly.
  const Vector x = d.test_point();
  const double m0 = model.knot_models()[0]->predict(x);
  const double m1 = model.knot_models()[1]->predict(x);
  EXPECT_NEAR(model.predict(x, -3.0), m0 - 2.0 * (m1 - m0), 1e-12);
  const double m2 = model.knot_models()[2]->predict(x);
  const double m3 = model.knot_models()[3]->predict(x);
  EXPECT_NEAR(model.predict(x, 5.0), m3 + 3.0 * (m3 - m2), 1e-12);
}

TEST(Interpolated, UnsortedOrOutOfRangeAnchorsAreRejected) {
  const auto d = oracle::random_dataset(8, 2, 17);
  const RidgeRegressor ridge(0.1);
  EXPECT_THROW(build_interpolated_model(d, {1.0, 0.0}, -2.0, 2.0, ridge), Error);
  EXPECT_THROW(build_interpolated_model(d, {-3.0}, -2.0, 2.0, ridge), Error);
  EXPECT_THROW(build_interpolated_model(d, {}, -2.0, 2.0, ridge), Error);
}

TEST(DefaultAnchor, IsThePlainFitPredictionAtTheTestPoint) {
  const auto d = oracle::random_dataset(12, 3, 18);
  const RidgeRegressor ridge(0.4);
  const Vector beta = oracle::ridge(d.features(), d.targets(), 0.4);
  EXPECT_NEAR(default_anchor(d, ridge), d.test_point().dot(beta), 1e-10);
}
