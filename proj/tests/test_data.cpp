#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "oracles.hpp"
#include "stabcp/conformal.hpp"
#include "stabcp/data.hpp"

using namespace stabcp;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::State;
}

double correlation(const Vector& a, const Vector& b) {
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

}  // namespace

// --- generators -------------------------------------------------------------

TEST(LinearGaussian, NoiselessSingleFeatureIsExactlyLinear) {
  const auto g = gen_linear_gaussian({GeneratorKind::LinearGaussian, 40, 1, 0.0, 3});
  ASSERT_EQ(g.metadata.informative.size(), 1u);
  const double c = g.metadata.coefficients[0];
  const auto& d = g.dataset;
  for (Index i = 0; i < d.size(); ++i)
    EXPECT_DOUBLE_EQ(d.targets()(i), c * d.features()(i, 0));
  EXPECT_DOUBLE_EQ(*d.test_target(), c * d.test_point()(0));
}

TEST(LinearGaussian, SameSeedIsBitIdentical) {
  const GeneratorSpec spec{GeneratorKind::LinearGaussian, 30, 100, 1.0, 7};
  const auto a = gen_linear_gaussian(spec).dataset;
  const auto b = gen_linear_gaussian(spec).dataset;
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.targets(), b.targets());
  EXPECT_EQ(a.test_point(), b.test_point());
  EXPECT_EQ(*a.test_target(), *b.test_target());
  const auto c = gen_linear_gaussian({GeneratorKind::LinearGaussian, 30, 100, 1.0, 8});
  EXPECT_NE(a.targets(), c.dataset.targets());
}

TEST(LinearGaussian, TenPercentInformative) {
  const auto g = gen_linear_gaussian({GeneratorKind::LinearGaussian, 10, 100, 1.0, 1});
  EXPECT_EQ(g.metadata.informative.size(), 10u);
  const std::set<Index> unique(g.metadata.informative.begin(),
                               g.metadata.informative.end());
  EXPECT_EQ(unique.size(), 10u);
  for (Index j : unique) EXPECT_LT(j, 100);
}

TEST(LinearGaussian, StrongestSignalCorrelatesWithTheTargets) {
  const auto g = gen_linear_gaussian({GeneratorKind::LinearGaussian, 300, 20, 1.0, 5});
  const auto& m = g.metadata;
  std::size_t k = 0;
  for (std::size_t j = 1; j < m.coefficients.size(); ++j)
    if (std::abs(m.coefficients[j]) > std::abs(m.coefficients[k])) k = j;
  const double r = correlation(g.dataset.features().col(m.informative[k]),
                               g.dataset.targets());
  EXPECT_GT(std::copysign(1.0, m.coefficients[k]) * r, 0.0);
  // Fisher z-test at three standard errors.
  EXPECT_GT(std::abs(std::atanh(r)) * std::sqrt(300.0 - 3.0), 3.0);
}

TEST(LinearGaussian, RejectsBadSpecs) {
  EXPECT_THROW(gen_linear_gaussian({GeneratorKind::LinearGaussian, 1, 3, 1.0, 0}), Error);
  EXPECT_THROW(gen_linear_gaussian({GeneratorKind::LinearGaussian, 10, 0, 1.0, 0}), Error);
  EXPECT_THROW(gen_linear_gaussian({GeneratorKind::LinearGaussian, 10, 3, -1.0, 0}), Error);
}

TEST(Friedman1, NoiselessTargetsFollowTheFormula) {
  const auto d = gen_friedman1({GeneratorKind::Friedman1, 200, 8, 0.0, 2}).dataset;
  auto f = [](const Vector& x) {
    return 10.0 * std::sin(std::numbers::pi * x(0) * x(1)) +
           20.0 * (x(2) - 0.5) * (x(2) - 0.5) + 10.0 * x(3) + 5.0 * x(4);
  };
  for (Index i = 0; i < d.size(); ++i) {
    const Vector x = d.features().row(i).transpose();
    EXPECT_NEAR(d.targets()(i), f(x), 1e-12);
    EXPECT_GE(x.minCoeff(), 0.0);
    EXPECT_LE(x.maxCoeff(), 1.0);
  }
  EXPECT_NEAR(*d.test_target(), f(d.test_point()), 1e-12);
}

TEST(Friedman1, TrailingFeaturesDoNotMatter) {
  const auto d = gen_friedman1({GeneratorKind::Friedman1, 50, 9, 0.0, 4}).dataset;
  // Shuffle columns 6..9 across rows; targets recomputed from the first five
  // columns must not change.
  Matrix x = d.features();
  std::mt19937 rng(1);
  for (Index j = 5; j < 9; ++j) {
    std::vector<double> col(x.col(j).begin(), x.col(j).end());
    std::shuffle(col.begin(), col.end(), rng);
    for (Index i = 0; i < x.rows(); ++i) x(i, j) = col[static_cast<std::size_t>(i)];
  }
  for (Index i = 0; i < d.size(); ++i) {
    const double expected = 10.0 * std::sin(std::numbers::pi * x(i, 0) * x(i, 1)) +
                            20.0 * (x(i, 2) - 0.5) * (x(i, 2) - 0.5) +
                            10.0 * x(i, 3) + 5.0 * x(i, 4);
    EXPECT_NEAR(d.targets()(i), expected, 1e-12);
  }
}

TEST(Friedman1, ResponseRangeOverManyDraws) {
  const auto d = gen_friedman1({GeneratorKind::Friedman1, 10000, 5, 0.0, 6}).dataset;
  EXPECT_GE(d.targets().minCoeff(), 0.0);
  EXPECT_LE(d.targets().maxCoeff(), 30.0);
  EXPECT_LT(d.targets().minCoeff(), 4.0);
  EXPECT_GT(d.targets().maxCoeff(), 25.0);
  // E[y] = 10 E[sin(pi U V)] + 5/3 + 5 + 2.5, with E[sin(pi U V)] = Cin(pi)/pi
  // and Cin(pi) = integral over [0, pi] of (1 - cos t) / t.
  const double cin_pi = 1.6482776387045073;
  EXPECT_NEAR(d.targets().mean(), 10.0 * cin_pi / std::numbers::pi + 5.0 / 3.0 + 7.5,
              0.15);
}

TEST(Friedman1, NeedsFiveFeatures) {
  EXPECT_EQ(kind_of([] { gen_friedman1({GeneratorKind::Friedman1, 10, 4, 1.0, 0}); }),
            ErrorKind::InvalidInput);
}

TEST(Generator, KindNames) {
  EXPECT_EQ(parse_generator_kind("linear"), GeneratorKind::LinearGaussian);
  EXPECT_EQ(parse_generator_kind("linear-gaussian"), GeneratorKind::LinearGaussian);
  EXPECT_EQ(parse_generator_kind("friedman1"), GeneratorKind::Friedman1);
  EXPECT_THROW(parse_generator_kind("sine"), Error);
  EXPECT_EQ(generate({GeneratorKind::Friedman1, 5, 5, 0.0, 1}).dataset.dim(), 5);
}

// --- CSV --------------------------------------------------------------------

TEST(Csv, NamedTargetColumn) {
  const auto t = parse_csv("a,b\n1,2\n3,4\n", "b");
  EXPECT_EQ(t.feature_names, std::vector<std::string>{"a"});
  EXPECT_EQ(t.target_name, "b");
  EXPECT_EQ(t.features, (Matrix{{1.0}, {3.0}}));
  EXPECT_EQ(t.targets, (Vector{{2.0, 4.0}}));
}

TEST(Csv, DefaultTargetIsTheLastColumn) {
  const auto t = parse_csv("b,a,c\r\n1,2,3\r\n4,5,6");
  EXPECT_EQ(t.target_name, "c");
  EXPECT_EQ(t.features, (Matrix{{1.0, 2.0}, {4.0, 5.0}}));
}

TEST(Csv, MissingHeaderIsAParseError) {
  EXPECT_EQ(kind_of([] { parse_csv("1,2\n3,4\n"); }), ErrorKind::Parse);
}

TEST(Csv, MalformedInputIsAParseError) {
  EXPECT_EQ(kind_of([] { parse_csv("a,b\n1,2\n3\n"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_csv("a,b\n1,x\n"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_csv(""); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_csv("a,b\n1,2\n", "zz"); }), ErrorKind::Parse);
}

TEST(Csv, MissingFileIsAnIoError) {
  EXPECT_EQ(kind_of([] { load_csv("/nonexistent/dir/x.csv"); }), ErrorKind::Io);
}

TEST(Csv, SaveThenLoadIsTheIdentity) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1e3);
  LabeledTable t;
  t.feature_names = {"x1", "x2", "x3"};
  t.target_name = "y";
  t.features.resize(17, 3);
  t.targets.resize(17);
  for (Index i = 0; i < 17; ++i) {
    for (Index j = 0; j < 3; ++j) t.features(i, j) = g(rng) * std::pow(10.0, j - 5);
    t.targets(i) = g(rng);
  }
  t.features(0, 0) = 0.1;
  t.targets(1) = -0.0;
  const auto path = std::filesystem::temp_directory_path() / "stabcp_roundtrip.csv";
  save_csv(path, t);
  const auto back = load_csv(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.feature_names, t.feature_names);
  EXPECT_EQ(back.target_name, t.target_name);
  EXPECT_EQ(back.features, t.features);
  EXPECT_EQ(back.targets, t.targets);
}

TEST(Csv, FormatNumberIsShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(2.0), "2");
  EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Csv, TableToDatasetAndBack) {
  const auto t = parse_csv("a,y\n1,10\n2,20\n3,30\n");
  const auto d = to_dataset(t, 1);
  EXPECT_EQ(d.size(), 2);
  EXPECT_EQ(d.test_point()(0), 2.0);
  EXPECT_EQ(*d.test_target(), 20.0);
  EXPECT_EQ(d.targets(), (Vector{{10.0, 30.0}}));
  const auto back = to_table(d);
  EXPECT_EQ(back.targets, (Vector{{10.0, 30.0, 20.0}}));
  EXPECT_THROW(to_dataset(t, 3), Error);
}

// --- standardize ------------------------------------------------------------

TEST(Standardize, MomentsAndTestPointShareTheTrainingStatistics) {
  const auto d = oracle::random_dataset(50, 4, 21);
  const auto [s, t] = standardize(d);
  for (Index j = 0; j < 4; ++j) {
    EXPECT_NEAR(s.features().col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(s.features().col(j).squaredNorm() / 50.0, 1.0, 1e-12);
    EXPECT_NEAR(s.test_point()(j),
                (d.test_point()(j) - t.feature_mean(j)) / t.feature_scale(j), 1e-12);
  }
  EXPECT_NEAR(s.targets().mean(), 0.0, 1e-12);
  EXPECT_NEAR(t.invert_target(*s.test_target()), *d.test_target(), 1e-12);
}

TEST(Standardize, AlreadyStandardizedIsNearIdentity) {
  const auto d = oracle::random_dataset(50, 3, 22);
  const auto once = standardize(d).first;
  const auto [twice, t] = standardize(once);
  EXPECT_LT((t.feature_mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((t.feature_scale.array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_NEAR(t.target_mean, 0.0, 1e-12);
  EXPECT_NEAR(t.target_scale, 1.0, 1e-12);
  EXPECT_TRUE(twice.features().isApprox(once.features(), 1e-12));
}

TEST(Standardize, ConstantColumnNeedsTheFlag) {
  Matrix x = Matrix::Random(10, 2);
  x.col(1).setConstant(3.0);
  const TabularDataset d(x, Vector::LinSpaced(10, 0.0, 1.0), Vector{{0.0, 3.0}});
  EXPECT_THROW(standardize(d), Error);
  StandardizeOptions o;
  o.allow_constant_columns = true;
  const auto [s, t] = standardize(d, o);
  EXPECT_TRUE(t.constant_column[1]);
  EXPECT_FALSE(t.constant_column[0]);
  EXPECT_EQ(s.features().col(1), x.col(1));
}

TEST(Standardize, RidgeIntervalsMapBackWithRescaledLambda) {
  // Centered columns sharing one scale c: standardizing divides X by c, so
  // ridge with lambda / c^2 reproduces the original fit; scaling the targets
  // scales the whole conformal set.
  const double c = 2.5;
  Matrix x = Matrix::Random(40, 3);
  x = x.rowwise() - x.colwise().mean();
  for (Index j = 0; j < 3; ++j)
    x.col(j) *= c / std::sqrt(x.col(j).squaredNorm() / 40.0);
  std::mt19937 rng(4);
  std::normal_distribution<double> g;
  Vector y(40);
  for (double& v : y) v = g(rng) * 3.0 + 1.0;
  const TabularDataset d(x, y, Vector{{0.5, -1.0, 2.0}});

  StandardizeOptions o;
  o.center_targets = false;
  const auto [s, t] = standardize(d, o);
  ASSERT_NEAR(t.feature_scale(0), c, 1e-12);

  const double lambda = 0.8;
  const auto score = ScoreFunction::absolute_residual();
  auto interval = [&](const TabularDataset& data, double lam) {
    const Range r = data.target_range();
    const RidgeRegressor ridge(lam);
    const TauRule rule = [&data, r](const AnchorFit& fit) {
      return tau_linear_exact(dynamic_cast<const RidgeModel&>(*fit.model), data, r);
    };
    return stab_cp_interval(data, default_anchor(data, ridge), ridge, score, rule, 0.1)
        .set.intervals()
        .at(0);
  };
  const Interval direct = interval(d, lambda);
  const Interval mapped = t.invert(interval(s, lambda / (c * c)));
  EXPECT_NEAR(mapped.lo, direct.lo, 1e-9);
  EXPECT_NEAR(mapped.hi, direct.hi, 1e-9);
}

// --- split ------------------------------------------------------------------

TEST(Split, SizesDisjointAndDeterministic) {
  const auto s = split(10, 0.5, 3);
  EXPECT_EQ(s.train.size(), 5u);
  EXPECT_EQ(s.calibration.size(), 5u);
  std::set<Index> all(s.train.begin(), s.train.end());
  all.insert(s.calibration.begin(), s.calibration.end());
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(*all.begin(), 0);
  EXPECT_EQ(*all.rbegin(), 9);
  const auto again = split(10, 0.5, 3);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(split(7, 0.5, 1).train.size(), 3u);
}

TEST(Split, RejectsEmptyParts) {
  EXPECT_THROW(split(10, 0.0, 1), Error);
  EXPECT_THROW(split(10, 0.05, 1), Error);
  EXPECT_THROW(split(1, 0.5, 1), Error);
}

TEST(PermuteRows, ReordersObservationsOnly) {
  const auto d = oracle::random_dataset(4, 2, 23);
  const auto p = permute_rows(d, {3, 1, 0, 2});
  EXPECT_EQ(p.targets()(0), d.targets()(3));
  EXPECT_EQ(p.features().row(3), d.features().row(2));
  EXPECT_EQ(p.test_point(), d.test_point());
  EXPECT_THROW(permute_rows(d, {0, 1, 1, 2}), Error);
  EXPECT_THROW(permute_rows(d, {0, 1, 2}), Error);
}
