#include "stabcp/conformal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace stabcp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

thread_local std::size_t bisection_evaluations = 0;

void check_alpha(double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
}

void check_tau(const StabilityBounds& tau, const TabularDataset& data) {
  require(tau.tau.size() == data.size() + 1, "tau must have n + 1 entries");
  require(tau.tau.allFinite() && (tau.tau.array() >= 0.0).all(),
          "tau entries must be finite and nonnegative");
}

/// k-th smallest (1-based) entry.
double order_statistic(Vector values, std::size_t k) {
  auto* first = values.data();
  std::nth_element(first, first + (k - 1), first + values.size());
  return first[k - 1];
}

/// center +/- (U_(K+1) + tau_test) with K = floor((1 - alpha)(n + 1)).
MethodReport centered_stab_interval(const TabularDataset& data,
                                    const AnchorFit& fit,
                                    const StabilityBounds& tau, double alpha,
                                    Range range, std::string method) {
  const auto n = static_cast<std::size_t>(data.size());
  const std::size_t k = max_admissible_count(alpha, n + 1) + 1;
  MethodReport report{PredictionSet::empty(range, method, alpha)};
  report.tau_provenance = to_string(tau.provenance);
  if (k > n) {
    report.set = PredictionSet::whole_range(range, std::move(method), alpha);
  } else {
    const Vector upper = fit.scores + tau.tau.head(data.size());
    const double half = order_statistic(upper, k) + tau.test_tau();
    report.set = PredictionSet::from_intervals(
        {{fit.test_prediction - half, fit.test_prediction + half}}, range,
        std::move(method), alpha);
  }
  report.length = report.set.length();
  return report;
}

MethodReport closed_form_stab(const TabularDataset& data, double anchor,
                              const Regressor& regressor,
                              const ScoreFunction& score, const TauRule& tau_rule,
                              double alpha, std::optional<Range> range,
                              bool require_positive_test_tau) {
  check_alpha(alpha);
  require(score.kind() == ScoreFunction::Kind::AbsoluteResidual,
          "closed-form stabCP needs the absolute-residual score");
  const auto start = Clock::now();
  const AnchorFit fit = fit_anchor(data, anchor, regressor, score);
  const StabilityBounds tau = tau_rule(fit);
  check_tau(tau, data);
  if (require_positive_test_tau)
    require(tau.test_tau() > 0.0, "closed-form stabCP needs tau_{n+1} > 0");
  MethodReport report = centered_stab_interval(
      data, fit, tau, alpha, range.value_or(data.target_range()), "stabcp");
  report.fit_count = 1;
  report.wall_time = seconds_since(start);
  mark_coverage(report, data);
  return report;
}

std::size_t exact_limit(const TabularDataset& data, double alpha) {
  return max_admissible_count(alpha, static_cast<std::size_t>(data.size() + 1));
}

}  // namespace

AnchorFit fit_anchor(const TabularDataset& data, double anchor,
                     const Regressor& regressor, const ScoreFunction& score) {
  require(std::isfinite(anchor), "anchor must be finite");
  AnchorFit fit;
  fit.anchor = anchor;
  fit.model = regressor.fit_augmented(data, anchor);
  const Vector predictions = fit.model->predict_rows(data.features());
  fit.scores.resize(data.size());
  for (Index i = 0; i < data.size(); ++i)
    fit.scores(i) = score(data.targets()(i), predictions(i));
  fit.test_prediction = fit.model->predict(data.test_point());
  return fit;
}

std::pair<double, double> ConformityBounds::test_bounds(
    double z, const ScoreFunction& score) const {
  const double s = score(z, test_prediction);
  return {s - test_tau, s + test_tau};
}

ConformityBounds conformity_bounds(const AnchorFit& fit,
                                   const StabilityBounds& tau) {
  const Index n = fit.scores.size();
  require(tau.tau.size() == n + 1, "tau must have n + 1 entries");
  ConformityBounds b;
  b.anchor = fit.anchor;
  b.lower = fit.scores - tau.tau.head(n);
  b.upper = fit.scores + tau.tau.head(n);
  b.test_prediction = fit.test_prediction;
  b.test_tau = tau.test_tau();
  return b;
}

PiBounds pi_bounds(double z, const ConformityBounds& bounds,
                   const ScoreFunction& score) {
  const auto [test_lo, test_up] = bounds.test_bounds(z, score);
  const Index n = bounds.lower.size();
  PiBounds out;
  out.m = static_cast<std::size_t>(n + 1);
  out.count_lo = (test_lo <= test_up) ? 1 : 0;
  out.count_up = (test_up <= test_lo) ? 1 : 0;
  for (Index i = 0; i < n; ++i) {
    out.count_lo += bounds.lower(i) <= test_up;
    out.count_up += bounds.upper(i) <= test_lo;
  }
  const auto m = static_cast<double>(out.m);
  out.lo = 1.0 - static_cast<double>(out.count_lo) / m;
  out.up = 1.0 - static_cast<double>(out.count_up) / m;
  return out;
}

PiBounds pi_bounds(double z, const AnchorFit& fit, const StabilityBounds& tau,
                   const ScoreFunction& score) {
  return pi_bounds(z, conformity_bounds(fit, tau), score);
}

std::size_t observed_up_count(double z, const ConformityBounds& bounds,
                              const ScoreFunction& score) {
  const double test_lo = bounds.test_bounds(z, score).first;
  return static_cast<std::size_t>(
      (bounds.upper.array() <= test_lo).count());
}

PiBounds batch_pi_bounds(double z, std::span<const ConformityBounds> anchors,
                         const ScoreFunction& score) {
  require(!anchors.empty(), "batch needs at least one anchor");
  PiBounds best = pi_bounds(z, anchors.front(), score);
  for (const auto& b : anchors.subspan(1)) {
    const PiBounds next = pi_bounds(z, b, score);
    require(next.m == best.m, "anchors disagree on the sample size");
    if (next.count_lo < best.count_lo) {
      best.count_lo = next.count_lo;
      best.lo = next.lo;
    }
    if (next.count_up > best.count_up) {
      best.count_up = next.count_up;
      best.up = next.up;
    }
  }
  return best;
}

TauRule fixed_tau(StabilityBounds tau) {
  return [tau = std::move(tau)](const AnchorFit&) { return tau; };
}

void mark_coverage(MethodReport& report, const TabularDataset& data) {
  if (data.test_target()) report.covered = report.set.contains(*data.test_target());
}

// ---------------------------------------------------------------------------
// stabCP

MethodReport stab_cp_interval(const TabularDataset& data, double anchor,
                              const Regressor& regressor,
                              const ScoreFunction& score, const TauRule& tau,
                              double alpha, std::optional<Range> range) {
  return closed_form_stab(data, anchor, regressor, score, tau, alpha, range, true);
}

MethodReport stab_cp_interval_limit(const TabularDataset& data, double anchor,
                                    const Regressor& regressor,
                                    const ScoreFunction& score,
                                    const TauRule& tau, double alpha,
                                    std::optional<Range> range) {
  return closed_form_stab(data, anchor, regressor, score, tau, alpha, range,
                          false);
}

std::size_t last_bisection_evaluations() { return bisection_evaluations; }

MethodReport stab_cp_bisection(const TabularDataset& data, double anchor,
                               const Regressor& regressor,
                               const ScoreFunction& score, const TauRule& tau_rule,
                               double alpha, const BisectionOptions& options) {
  check_alpha(alpha);
  const Range range = options.range;
  require(range.lo < range.hi, "bisection range must satisfy z_min < z_max");
  require(options.eps_r > 0.0, "eps_r must be positive");
  require(options.probe_count >= 2, "need at least two probes");

  const auto start = Clock::now();
  const AnchorFit fit = fit_anchor(data, anchor, regressor, score);
  const StabilityBounds tau = tau_rule(fit);
  check_tau(tau, data);
  const ConformityBounds bounds = conformity_bounds(fit, tau);
  const std::size_t limit = exact_limit(data, alpha);
  bisection_evaluations = 0;
  auto admissible = [&](double z) {
    return pi_bounds(z, bounds, score).count_up <= limit;
  };

  MethodReport report{PredictionSet::empty(range, "stabcp-bisection", alpha)};
  report.fit_count = 1;
  report.tau_provenance = to_string(tau.provenance);

  std::optional<double> z0;
  if (score.minimized_at_prediction() && range.contains(fit.test_prediction) &&
      admissible(fit.test_prediction))
    z0 = fit.test_prediction;
  if (!z0) {
    for (double z : linear_grid(range, options.probe_count)) {
      if (admissible(z)) {
        z0 = z;
        break;
      }
    }
  }

  if (z0) {
    // Invariant: `outside` is not admissible, `inside` is.
    auto bisect = [&](double outside, double inside) {
      while (std::abs(inside - outside) > options.eps_r) {
        const double mid = 0.5 * (outside + inside);
        ++bisection_evaluations;
        (admissible(mid) ? inside : outside) = mid;
      }
      return outside;
    };
    const bool open_left = !admissible(range.lo);
    const bool open_right = !admissible(range.hi);
    const double left = open_left ? bisect(range.lo, *z0) : range.lo;
    const double right = open_right ? bisect(range.hi, *z0) : range.hi;
    report.truncated = !open_left || !open_right;
    if (!open_left && !open_right)
      report.set = PredictionSet::whole_range(range, "stabcp-bisection", alpha);
    else
      report.set = PredictionSet::from_intervals({{left, right}}, range,
                                                 "stabcp-bisection", alpha);
  }
  report.length = report.set.length();
  report.wall_time = seconds_since(start);
  mark_coverage(report, data);
  return report;
}

// ---------------------------------------------------------------------------
// Interpolated model

namespace {

struct InterpolatedScores {
  Vector observed;  // E~_i(z), i <= n
  double test = 0.0;
};

class InterpolationTable {
 public:
  InterpolationTable(const TabularDataset& data, const InterpolatedModel& model)
      : model_(model), predictions_(model.knots().size(), data.size() + 1) {
    const Matrix x = data.augmented_features();
    for (std::size_t k = 0; k < model.knots().size(); ++k)
      predictions_.row(static_cast<Index>(k)) =
          model.knot_models()[k]->predict_rows(x).transpose();
  }

  InterpolatedScores scores(double z, const TabularDataset& data,
                            const ScoreFunction& score) const {
    const auto [t, w] = model_.segment(z);
    const auto ti = static_cast<Index>(t);
    const Vector pred = (1.0 - w) * predictions_.row(ti).transpose() +
                        w * predictions_.row(ti + 1).transpose();
    const Index n = data.size();
    InterpolatedScores s;
    s.observed.resize(n);
    for (Index i = 0; i < n; ++i) s.observed(i) = score(data.targets()(i), pred(i));
    s.test = score(z, pred(n));
    return s;
  }

 private:
  const InterpolatedModel& model_;
  Matrix predictions_;
};

PiBounds interpolated_bounds_from_table(double z, const TabularDataset& data,
                                        const InterpolationTable& table,
                                        const StabilityBounds& tau_tilde,
                                        const ScoreFunction& score) {
  const InterpolatedScores s = table.scores(z, data, score);
  ConformityBounds b;
  b.lower = s.observed - tau_tilde.tau.head(data.size());
  b.upper = s.observed + tau_tilde.tau.head(data.size());
  // test_bounds() recomputes S(z, m); feed it the interpolated score directly.
  const double t = tau_tilde.test_tau();
  const Index n = data.size();
  PiBounds out;
  out.m = static_cast<std::size_t>(n + 1);
  out.count_lo = 1;
  out.count_up = (t == 0.0) ? 1 : 0;
  for (Index i = 0; i < n; ++i) {
    out.count_lo += b.lower(i) <= s.test + t;
    out.count_up += b.upper(i) <= s.test - t;
  }
  const auto m = static_cast<double>(out.m);
  out.lo = 1.0 - static_cast<double>(out.count_lo) / m;
  out.up = 1.0 - static_cast<double>(out.count_up) / m;
  return out;
}

}  // namespace

PiBounds interpolated_pi_bounds(double z, const TabularDataset& data,
                                const InterpolatedModel& model,
                                const StabilityBounds& tau_tilde,
                                const ScoreFunction& score) {
  check_tau(tau_tilde, data);
  require(model.dim() == data.dim(), "model dimension differs from the data");
  return interpolated_bounds_from_table(z, data, InterpolationTable(data, model),
                                        tau_tilde, score);
}

MethodReport interpolated_cp(const TabularDataset& data,
                             const InterpolatedModel& model,
                             const StabilityBounds& tau_tilde,
                             const ScoreFunction& score, double alpha,
                             const std::vector<double>& grid) {
  check_alpha(alpha);
  check_tau(tau_tilde, data);
  require(!grid.empty(), "grid must be nonempty");
  require(std::is_sorted(grid.begin(), grid.end()), "grid must be sorted");
  const auto start = Clock::now();
  const InterpolationTable table(data, model);
  const std::size_t limit = exact_limit(data, alpha);
  std::vector<bool> keep(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k)
    keep[k] = interpolated_bounds_from_table(grid[k], data, table, tau_tilde,
                                             score)
                  .count_up <= limit;
  MethodReport report{
      PredictionSet::from_grid_mask(grid, keep, "interpcp", alpha)};
  report.truncated = keep.front() || keep.back();
  report.length = report.set.length();
  report.fit_count = model.fit_count();
  report.tau_provenance = to_string(tau_tilde.provenance);
  // The knot fits happen at construction; only the sweep is timed here.
  report.wall_time = seconds_since(start);
  mark_coverage(report, data);
  return report;
}

// ---------------------------------------------------------------------------
// Baselines

MethodReport split_cp(const TabularDataset& data, std::size_t train_size,
                      const Regressor& regressor, const ScoreFunction& score,
                      double alpha, std::optional<Range> range) {
  check_alpha(alpha);
  require(score.kind() == ScoreFunction::Kind::AbsoluteResidual,
          "split interval form needs the absolute-residual score");
  const auto n = static_cast<std::size_t>(data.size());
  require(train_size >= 1, "training part must be nonempty");
  require(train_size < n, "calibration part must be nonempty");
  const auto start = Clock::now();

  const auto tr = static_cast<Index>(train_size);
  const auto cal = static_cast<Index>(n - train_size);
  const auto model =
      regressor.fit(data.features().topRows(tr), data.targets().head(tr));
  const Vector predictions = model->predict_rows(data.features().bottomRows(cal));
  Vector scores(cal);
  for (Index i = 0; i < cal; ++i)
    scores(i) = score(data.targets()(tr + i), predictions(i));
  const double center = model->predict(data.test_point());

  const double level = (1.0 - alpha) * static_cast<double>(cal + 1);
  const auto k = static_cast<std::size_t>(std::ceil(level - 1e-9));
  const Range active = range.value_or(data.target_range());
  MethodReport report{PredictionSet::empty(active, "splitcp", alpha)};
  if (k > static_cast<std::size_t>(cal)) {
    report.set = PredictionSet::whole_range(active, "splitcp", alpha);
  } else {
    const double half = order_statistic(scores, k);
    report.set = PredictionSet::from_intervals(
        {{center - half, center + half}}, active, "splitcp", alpha);
  }
  report.fit_count = 1;
  report.length = report.set.length();
  report.wall_time = seconds_since(start);
  mark_coverage(report, data);
  return report;
}

double pi_split(double z, const Vector& calibration_scores,
                double test_prediction, const ScoreFunction& score) {
  const double e = score(z, test_prediction);
  const auto below = (calibration_scores.array() <= e).count();
  return 1.0 - static_cast<double>(below + 1) /
                   static_cast<double>(calibration_scores.size() + 1);
}

MethodReport oracle_cp(const TabularDataset& data, double true_target,
                       const Regressor& regressor, const ScoreFunction& score,
                       double alpha, std::optional<Range> range) {
  const Vector zero = Vector::Zero(data.size() + 1);
  MethodReport report = stab_cp_interval_limit(
      data, true_target, regressor, score,
      fixed_tau({zero, TauProvenance::UserSupplied, std::nullopt}), alpha, range);
  report.set = PredictionSet::from_intervals(
      report.set.intervals(), report.set.range(), "oraclecp", alpha);
  if (report.length == report.set.range().width() &&
      report.set.intervals().size() == 1 &&
      report.set.intervals().front().lo == report.set.range().lo &&
      report.set.intervals().front().hi == report.set.range().hi)
    report.set = PredictionSet::whole_range(report.set.range(), "oraclecp", alpha);
  report.tau_provenance = "none";
  return report;
}

MethodReport root_cp(const TabularDataset& data, const Regressor& regressor,
                     const ScoreFunction& score, double alpha,
                     const RootOptions& options) {
  check_alpha(alpha);
  const Range range = options.range;
  require(range.lo < range.hi, "root search range must satisfy z_min < z_max");
  require(options.eps_r > 0.0, "eps_r must be positive");
  const auto start = Clock::now();
  const std::size_t limit = exact_limit(data, alpha);
  std::size_t fits = 0;
  auto admissible = [&](double z) {
    ++fits;
    return exact_conformity(data, z, regressor, score).rank <= limit;
  };

  MethodReport report{PredictionSet::empty(range, "rootcp", alpha)};
  std::optional<double> z0;
  ++fits;
  const double guess = default_anchor(data, regressor);
  if (range.contains(guess) && admissible(guess)) z0 = guess;
  if (!z0) {
    const auto probes = linear_grid(range, options.probe_count + 2);
    for (std::size_t k = 1; k + 1 < probes.size() && !z0; ++k)
      if (admissible(probes[k])) z0 = probes[k];
  }

  if (z0) {
    // Fixed budget per side, so the cost does not depend on where z0 falls.
    const int budget =
        static_cast<int>(std::ceil(std::log2(range.width() / options.eps_r)));
    auto bisect = [&](double outside, double inside) {
      for (int it = 0; it < budget; ++it) {
        const double mid = 0.5 * (outside + inside);
        (admissible(mid) ? inside : outside) = mid;
      }
      return outside;
    };
    const bool open_left = !admissible(range.lo);
    const bool open_right = !admissible(range.hi);
    const double left = open_left ? bisect(range.lo, *z0) : range.lo;
    const double right = open_right ? bisect(range.hi, *z0) : range.hi;
    report.truncated = !open_left || !open_right;
    if (!open_left && !open_right)
      report.set = PredictionSet::whole_range(range, "rootcp", alpha);
    else
      report.set =
          PredictionSet::from_intervals({{left, right}}, range, "rootcp", alpha);
  }
  report.fit_count = fits;
  report.length = report.set.length();
  report.wall_time = seconds_since(start);
  mark_coverage(report, data);
  return report;
}

MethodReport grid_cp(const TabularDataset& data, const Regressor& regressor,
                     const ScoreFunction& score, double alpha,
                     const std::vector<double>& grid) {
  const auto start = Clock::now();
  MethodReport report{conformal_set_grid(data, regressor, score, alpha, grid)};
  report.fit_count = grid.size();
  report.length = report.set.length();
  report.truncated = report.set.contains(grid.front()) ||
                     report.set.contains(grid.back());
  report.wall_time = seconds_since(start);
  mark_coverage(report, data);
  return report;
}

std::vector<GapRow> gap_profile(const TabularDataset& data, double anchor,
                                const Regressor& regressor,
                                const ScoreFunction& score, const TauRule& tau_rule,
                                const std::vector<double>& grid) {
  require(!grid.empty(), "grid must be nonempty");
  const AnchorFit fit = fit_anchor(data, anchor, regressor, score);
  const StabilityBounds tau = tau_rule(fit);
  check_tau(tau, data);
  const ConformityBounds bounds = conformity_bounds(fit, tau);
  std::vector<GapRow> rows;
  rows.reserve(grid.size());
  for (double z : grid)
    rows.push_back({z, pi_bounds(z, bounds, score),
                    exact_conformity(data, z, regressor, score)});
  return rows;
}

}  // namespace stabcp
