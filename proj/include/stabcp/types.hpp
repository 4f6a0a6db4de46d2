#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stabcp/error.hpp"

namespace stabcp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Closed candidate range [lo, hi] for the unknown target.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double z) const { return lo <= z && z <= hi; }
};

/// Conformity score S(q, m) between a target q and a prediction m, together
/// with the Lipschitz constant gamma of m -> S(q, m).
class ScoreFunction {
 public:
  enum class Kind { AbsoluteResidual, Custom };
  using Fn = std::function<double(double, double)>;

  /// S(q, m) = |q - m|, gamma = 1.
  static ScoreFunction absolute_residual();

  /// `minimized_at_prediction` declares that z -> S(z, m) attains its minimum
  /// at z = m; the bisection search uses m as its first probe when set.
  static ScoreFunction custom(Fn fn, double gamma, std::string name,
                              bool minimized_at_prediction = true);

  double operator()(double q, double m) const {
    return kind_ == Kind::AbsoluteResidual ? std::abs(q - m) : fn_(q, m);
  }

  Kind kind() const { return kind_; }
  double gamma() const { return gamma_; }
  const std::string& name() const { return name_; }
  bool minimized_at_prediction() const { return minimized_at_prediction_; }

 private:
  ScoreFunction() = default;

  Kind kind_ = Kind::AbsoluteResidual;
  Fn fn_;
  double gamma_ = 1.0;
  std::string name_ = "absolute-residual";
  bool minimized_at_prediction_ = true;
};

/// Asymmetric Linex score exp(a(q - m)) - a(q - m) - 1. It is not globally
/// Lipschitz in m, so the caller declares the constant valid on its range.
ScoreFunction linex_score(double scale, double gamma_on_range);

/// Observed pairs (x_i, y_i), i = 1..n, plus the test features x_{n+1}.
/// The true test target is only known in harness mode.
class TabularDataset {
 public:
  TabularDataset(Matrix features, Vector targets, Vector test_point,
                 std::optional<double> test_target = std::nullopt);

  Index size() const { return features_.rows(); }
  Index dim() const { return features_.cols(); }

  const Matrix& features() const { return features_; }
  const Vector& targets() const { return targets_; }
  const Vector& test_point() const { return test_point_; }
  const std::optional<double>& test_target() const { return test_target_; }

  /// (n+1) x p matrix whose last row is x_{n+1}.
  Matrix augmented_features() const;

  /// ||x_i|| for i = 1..n+1.
  Vector row_norms() const;

  /// [y_(1), y_(n)].
  Range target_range() const;

 private:
  Matrix features_;
  Vector targets_;
  Vector test_point_;
  std::optional<double> test_target_;
};

/// y(z) = (y_1, ..., y_n, z).
Vector augmented_targets(const Vector& targets, double candidate);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool contains(double z) const { return lo <= z && z <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class SetShape { Interval, UnionOfIntervals, WholeRange, Empty };

std::string to_string(SetShape shape);

/// A conformal prediction set. Whole-range sets carry the active candidate
/// range; they stand for "uninformative" and contain every real value.
class PredictionSet {
 public:
  static PredictionSet from_intervals(std::vector<Interval> intervals,
                                      Range range, std::string method,
                                      double alpha);
  static PredictionSet whole_range(Range range, std::string method,
                                   double alpha);
  static PredictionSet empty(Range range, std::string method, double alpha);

  /// Keeps grid[k] where mask[k] holds and merges runs of consecutive kept
  /// points into closed intervals.
  static PredictionSet from_grid_mask(const std::vector<double>& grid,
                                      const std::vector<bool>& mask,
                                      std::string method, double alpha);

  SetShape shape() const { return shape_; }
  const std::vector<Interval>& intervals() const { return intervals_; }
  Range range() const { return range_; }
  const std::string& method() const { return method_; }
  double alpha() const { return alpha_; }

  bool contains(double z) const;

  /// Total Lebesgue length; whole-range sets report the range width.
  double length() const;

  /// Convex hull of the set (the active range for whole-range sets).
  std::optional<Interval> hull() const;

 private:
  PredictionSet() = default;

  SetShape shape_ = SetShape::Empty;
  std::vector<Interval> intervals_;
  Range range_;
  std::string method_;
  double alpha_ = 0.1;
};

/// Evenly spaced points lo, ..., hi (inclusive), count >= 2.
std::vector<double> linear_grid(Range range, std::size_t count);

}  // namespace stabcp
