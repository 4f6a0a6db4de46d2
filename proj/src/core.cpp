#include "stabcp/core.hpp"

#include <algorithm>
#include <cmath>

namespace stabcp {

// ---------------------------------------------------------------------------
// ScoreFunction

ScoreFunction ScoreFunction::absolute_residual() { return ScoreFunction(); }

ScoreFunction ScoreFunction::custom(Fn fn, double gamma, std::string name,
                                    bool minimized_at_prediction) {
  require(static_cast<bool>(fn), "custom score needs a callable");
  require(gamma >= 0.0, "score Lipschitz constant must be nonnegative");
  ScoreFunction s;
  s.kind_ = Kind::Custom;
  s.fn_ = std::move(fn);
  s.gamma_ = gamma;
  s.name_ = std::move(name);
  s.minimized_at_prediction_ = minimized_at_prediction;
  return s;
}

ScoreFunction linex_score(double scale, double gamma_on_range) {
  require(scale != 0.0, "linex scale must be nonzero");
  return ScoreFunction::custom(
      [scale](double q, double m) {
        const double r = scale * (q - m);
        return std::expm1(r) - r;
      },
      gamma_on_range, "linex");
}

// ---------------------------------------------------------------------------
// TabularDataset

TabularDataset::TabularDataset(Matrix features, Vector targets,
                               Vector test_point,
                               std::optional<double> test_target)
    : features_(std::move(features)),
      targets_(std::move(targets)),
      test_point_(std::move(test_point)),
      test_target_(test_target) {
  require(features_.rows() >= 2, "dataset needs at least two observations");
  require(features_.cols() >= 1, "dataset needs at least one feature");
  require(features_.rows() == targets_.size(),
          "feature rows and target length differ");
  require(test_point_.size() == features_.cols(),
          "test point dimension differs from the features");
  require(features_.allFinite() && targets_.allFinite() &&
              test_point_.allFinite(),
          "dataset entries must be finite");
  require(!test_target_ || std::isfinite(*test_target_),
          "test target must be finite");
}

Matrix TabularDataset::augmented_features() const {
  Matrix x(size() + 1, dim());
  x.topRows(size()) = features_;
  x.row(size()) = test_point_.transpose();
  return x;
}

Vector TabularDataset::row_norms() const {
  Vector norms(size() + 1);
  norms.head(size()) = features_.rowwise().norm();
  norms(size()) = test_point_.norm();
  return norms;
}

Range TabularDataset::target_range() const {
  return {targets_.minCoeff(), targets_.maxCoeff()};
}

Vector augmented_targets(const Vector& targets, double candidate) {
  Vector y(targets.size() + 1);
  y.head(targets.size()) = targets;
  y(targets.size()) = candidate;
  return y;
}

// ---------------------------------------------------------------------------
// PredictionSet

std::string to_string(SetShape shape) {
  switch (shape) {
    case SetShape::Interval: return "interval";
    case SetShape::UnionOfIntervals: return "union-of-intervals";
    case SetShape::WholeRange: return "whole-range";
    case SetShape::Empty: return "empty";
  }
  return "unknown";
}

PredictionSet PredictionSet::from_intervals(std::vector<Interval> intervals,
                                            Range range, std::string method,
                                            double alpha) {
  for (const auto& iv : intervals)
    require(iv.lo <= iv.hi && std::isfinite(iv.lo) && std::isfinite(iv.hi),
            "interval endpoints must be finite with lo <= hi");
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> merged;
  for (const auto& iv : intervals) {
    if (!merged.empty() && iv.lo <= merged.back().hi)
      merged.back().hi = std::max(merged.back().hi, iv.hi);
    else
      merged.push_back(iv);
  }

  PredictionSet set;
  set.range_ = range;
  set.method_ = std::move(method);
  set.alpha_ = alpha;
  set.intervals_ = std::move(merged);
  if (set.intervals_.empty())
    set.shape_ = SetShape::Empty;
  else if (set.intervals_.size() == 1)
    set.shape_ = SetShape::Interval;
  else
    set.shape_ = SetShape::UnionOfIntervals;
  return set;
}

PredictionSet PredictionSet::whole_range(Range range, std::string method,
                                         double alpha) {
  PredictionSet set;
  set.shape_ = SetShape::WholeRange;
  set.range_ = range;
  set.intervals_ = {Interval{range.lo, range.hi}};
  set.method_ = std::move(method);
  set.alpha_ = alpha;
  return set;
}

PredictionSet PredictionSet::empty(Range range, std::string method,
                                   double alpha) {
  return from_intervals({}, range, std::move(method), alpha);
}

PredictionSet PredictionSet::from_grid_mask(const std::vector<double>& grid,
                                            const std::vector<bool>& mask,
                                            std::string method, double alpha) {
  require(!grid.empty(), "grid must be nonempty");
  require(grid.size() == mask.size(), "grid and mask sizes differ");
  std::vector<Interval> runs;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!mask[k]) continue;
    if (k > 0 && mask[k - 1])
      runs.back().hi = grid[k];
    else
      runs.push_back({grid[k], grid[k]});
  }
  return from_intervals(std::move(runs), {grid.front(), grid.back()},
                        std::move(method), alpha);
}

bool PredictionSet::contains(double z) const {
  if (shape_ == SetShape::WholeRange) return true;
  return std::any_of(intervals_.begin(), intervals_.end(),
                     [z](const Interval& iv) { return iv.contains(z); });
}

double PredictionSet::length() const {
  double total = 0.0;
  for (const auto& iv : intervals_) total += iv.length();
  return total;
}

std::optional<Interval> PredictionSet::hull() const {
  if (intervals_.empty()) return std::nullopt;
  return Interval{intervals_.front().lo, intervals_.back().hi};
}

std::vector<double> linear_grid(Range range, std::size_t count) {
  require(count >= 2, "grid needs at least two points");
  require(range.lo <= range.hi, "grid range must satisfy lo <= hi");
  std::vector<double> grid(count);
  const double step = range.width() / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k)
    grid[k] = range.lo + step * static_cast<double>(k);
  grid.back() = range.hi;
  return grid;
}

// ---------------------------------------------------------------------------
// Rank statistics and exact conformity

std::size_t rank(std::span<const double> values, std::size_t index) {
  require(index < values.size(), "rank index out of range");
  for (double v : values) require(std::isfinite(v), "rank of non-finite values");
  const double pivot = values[index];
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(),
                    [pivot](double v) { return v <= pivot; }));
}

std::size_t max_admissible_count(double alpha, std::size_t m) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  // Absorb rounding in (1 - alpha) * m so exact integers stay exact.
  const double level = (1.0 - alpha) * static_cast<double>(m);
  return static_cast<std::size_t>(std::floor(level + 1e-9));
}

Vector conformity_scores(const TabularDataset& data, double candidate,
                         const FittedModel& model, const ScoreFunction& score) {
  const Index n = data.size();
  require(model.dim() == data.dim(), "model dimension differs from the data");
  Vector scores(n + 1);
  const Vector predictions = model.predict_rows(data.features());
  for (Index i = 0; i < n; ++i)
    scores(i) = score(data.targets()(i), predictions(i));
  scores(n) = score(candidate, model.predict(data.test_point()));
  return scores;
}

ExactConformity exact_conformity(const TabularDataset& data, double candidate,
                                 const Regressor& regressor,
                                 const ScoreFunction& score) {
  const auto model = regressor.fit_augmented(data, candidate);
  const Vector scores = conformity_scores(data, candidate, *model, score);
  const auto m = static_cast<std::size_t>(scores.size());
  return {rank(std::span<const double>(scores.data(), m), m - 1), m};
}

double pi_exact(const TabularDataset& data, double candidate,
                const Regressor& regressor, const ScoreFunction& score) {
  return exact_conformity(data, candidate, regressor, score).value();
}

PredictionSet conformal_set_grid(const TabularDataset& data,
                                 const Regressor& regressor,
                                 const ScoreFunction& score, double alpha,
                                 const std::vector<double>& grid) {
  require(!grid.empty(), "grid must be nonempty");
  require(std::is_sorted(grid.begin(), grid.end()), "grid must be sorted");
  const std::size_t limit =
      max_admissible_count(alpha, static_cast<std::size_t>(data.size() + 1));
  std::vector<bool> keep(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k)
    keep[k] = exact_conformity(data, grid[k], regressor, score).rank <= limit;
  return PredictionSet::from_grid_mask(grid, keep, "gridcp", alpha);
}

std::vector<double> default_grid(const TabularDataset& data,
                                 std::size_t count) {
  return linear_grid(data.target_range(), count);
}

}  // namespace stabcp
