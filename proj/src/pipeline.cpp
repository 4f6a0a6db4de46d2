#include "stabcp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "stabcp/data.hpp"

namespace stabcp {

namespace {

AnchorFit anchor_fit_from_model(const TabularDataset& data, double anchor,
                                std::shared_ptr<const FittedModel> model,
                                const ScoreFunction& score) {
  AnchorFit fit;
  fit.anchor = anchor;
  const Vector predictions = model->predict_rows(data.features());
  fit.scores.resize(data.size());
  for (Index i = 0; i < data.size(); ++i)
    fit.scores(i) = score(data.targets()(i), predictions(i));
  fit.test_prediction = model->predict(data.test_point());
  fit.model = std::move(model);
  return fit;
}

TauRule linear_exact_rule(const TabularDataset& data, Range range, double gamma) {
  return [&data, range, gamma](const AnchorFit& fit) {
    const auto* ridge = dynamic_cast<const RidgeModel*>(fit.model.get());
    require(ridge != nullptr && ridge->has_linear_response(),
            "linear-exact bounds need a ridge fit on augmented data");
    return tau_linear_exact(*ridge, data, range, gamma);
  };
}

/// Reorders rows so the shuffled training part comes first.
std::pair<TabularDataset, std::size_t> split_order(const TabularDataset& data,
                                                   const PredictRequest& request) {
  const SplitIndices parts =
      split(data.size(), request.train_fraction, request.split_seed);
  std::vector<Index> order = parts.train;
  order.insert(order.end(), parts.calibration.begin(), parts.calibration.end());
  return {permute_rows(data, order), parts.train.size()};
}

std::vector<double> interp_anchors(const PredictRequest& request, Range range) {
  if (!request.interp_anchors.empty()) return request.interp_anchors;
  std::vector<double> grid = linear_grid(range, 5);
  return {grid.begin() + 1, grid.end() - 1};
}

}  // namespace

std::string to_string(TauSource source) {
  switch (source) {
    case TauSource::Auto: return "auto";
    case TauSource::LinearExact: return "linear-exact";
    case TauSource::SgdHeuristic: return "sgd-heuristic";
    case TauSource::File: return "file";
  }
  return "unknown";
}

TauSource parse_tau_source(const std::string& text) {
  if (text == "auto") return TauSource::Auto;
  if (text == "linear-exact") return TauSource::LinearExact;
  if (text == "sgd-heuristic") return TauSource::SgdHeuristic;
  if (text == "file") return TauSource::File;
  throw Error(ErrorKind::InvalidInput, "unknown tau source '" + text + "'");
}

std::unique_ptr<Regressor> make_regressor(const ModelConfig& config) {
  if (config.name == "ridge")
    return std::make_unique<RidgeRegressor>(config.lambda_reg.value_or(1.0));
  if (config.name == "ladridge" || config.name == "lad-ridge") {
    LadRidgeOptions options;
    options.lambda_reg = config.lambda_reg.value_or(0.5);
    options.solver_tol = config.solver_tol;
    options.max_iter = config.max_iter;
    return std::make_unique<LadRidgeRegressor>(options);
  }
  throw Error(ErrorKind::InvalidInput, "unknown model '" + config.name + "'");
}

std::vector<std::string> known_methods() {
  return {"stabcp", "splitcp", "rootcp", "oraclecp", "gridcp", "interpcp"};
}

TauRule make_tau_rule(const TabularDataset& data, const Regressor& regressor,
                      const ScoreFunction& score, const PredictRequest& request,
                      Range range) {
  const bool is_ridge = dynamic_cast<const RidgeRegressor*>(&regressor) != nullptr;
  switch (request.tau_source) {
    case TauSource::Auto:
      if (auto tau = tau_from_regularity(regressor, data, score, range))
        return fixed_tau(std::move(*tau));
      require(is_ridge, "no sound stability bound for model '" +
                            regressor.name() + "'");
      return linear_exact_rule(data, range, score.gamma());
    case TauSource::LinearExact:
      require(is_ridge, "linear-exact bounds are only available for ridge");
      return linear_exact_rule(data, range, score.gamma());
    case TauSource::SgdHeuristic:
      require(request.allow_unsafe_tau,
              "sgd-heuristic bounds carry no coverage guarantee; "
              "pass --allow-unsafe-tau to use them");
      return fixed_tau(
          tau_sgd_heuristic(request.sgd_iterations, data.row_norms(), data.size()));
    case TauSource::File:
      require(request.tau_values.has_value(), "tau source 'file' needs values");
      require(request.tau_values->size() == data.size() + 1,
              "tau file must hold n + 1 = " + std::to_string(data.size() + 1) +
                  " values");
      return fixed_tau(tau_user_supplied(*request.tau_values));
  }
  throw Error(ErrorKind::InvalidInput, "unknown tau source");
}

MethodRun run_method(const TabularDataset& data, const PredictRequest& request) {
  const auto regressor = make_regressor(request.model);
  const ScoreFunction score = ScoreFunction::absolute_residual();
  const Range range = request.range.value_or(data.target_range());
  require(range.lo < range.hi, "candidate range must satisfy lo < hi");

  MethodRun run{MethodReport{PredictionSet::empty(range, request.method,
                                                  request.alpha)},
                request.method};
  const auto& method = request.method;

  if (method == "stabcp" || method == "interpcp") {
    const TauRule rule = make_tau_rule(data, *regressor, score, request, range);
    run.unsafe_tau = request.tau_source == TauSource::SgdHeuristic;
    if (method == "stabcp") {
      double anchor = 0.0;
      if (request.anchor) {
        anchor = *request.anchor;
      } else {
        anchor = default_anchor(data, *regressor);
        run.anchor_fits = 1;
      }
      run.anchor = anchor;
      if (request.bisection)
        run.report = stab_cp_bisection(data, anchor, *regressor, score, rule,
                                       request.alpha,
                                       {range, request.eps_r, 20});
      else
        run.report = stab_cp_interval(data, anchor, *regressor, score, rule,
                                      request.alpha, range);
    } else {
      const auto start = std::chrono::steady_clock::now();
      const InterpolatedModel model = build_interpolated_model(
          data, interp_anchors(request, range), range.lo, range.hi, *regressor);
      const AnchorFit base = anchor_fit_from_model(data, model.knots()[1],
                                                   model.knot_models()[1], score);
      const StabilityBounds tau = tau_interpolated(rule(base), score.gamma());
      run.report = interpolated_cp(data, model, tau, score, request.alpha,
                                   linear_grid(range, request.grid_size));
      run.report.wall_time = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
    }
  } else if (method == "splitcp") {
    const auto [ordered, train] = split_order(data, request);
    run.report = split_cp(ordered, train, *regressor, score, request.alpha, range);
  } else if (method == "rootcp") {
    run.report = root_cp(data, *regressor, score, request.alpha,
                         {range, request.eps_r, 20});
  } else if (method == "oraclecp") {
    const auto target =
        request.true_target ? request.true_target : data.test_target();
    require(target.has_value(), "oraclecp needs the true target");
    run.report =
        oracle_cp(data, *target, *regressor, score, request.alpha, range);
  } else if (method == "gridcp") {
    run.report = grid_cp(data, *regressor, score, request.alpha,
                         linear_grid(range, request.grid_size));
  } else {
    throw Error(ErrorKind::InvalidInput, "unknown method '" + method + "'");
  }
  if (request.true_target) run.report.covered = run.report.set.contains(*request.true_target);
  return run;
}

CurveResult conformity_curve(const TabularDataset& data,
                             const PredictRequest& request) {
  const auto regressor = make_regressor(request.model);
  const ScoreFunction score = ScoreFunction::absolute_residual();
  const Range range = request.range.value_or(data.target_range());
  require(range.lo < range.hi, "candidate range must satisfy lo < hi");

  CurveResult out;
  out.anchor = request.anchor.value_or(default_anchor(data, *regressor));
  const TauRule rule = make_tau_rule(data, *regressor, score, request, range);
  const AnchorFit fit = fit_anchor(data, out.anchor, *regressor, score);
  const StabilityBounds tau = rule(fit);
  out.tau_provenance = to_string(tau.provenance);
  const ConformityBounds bounds = conformity_bounds(fit, tau);

  const auto [ordered, train] = split_order(data, request);
  const auto tr = static_cast<Index>(train);
  const Index cal = ordered.size() - tr;
  const auto split_model =
      regressor->fit(ordered.features().topRows(tr), ordered.targets().head(tr));
  const Vector cal_pred = split_model->predict_rows(ordered.features().bottomRows(cal));
  Vector cal_scores(cal);
  for (Index i = 0; i < cal; ++i)
    cal_scores(i) = score(ordered.targets()(tr + i), cal_pred(i));
  const double split_center = split_model->predict(data.test_point());

  for (double z : linear_grid(range, request.grid_size)) {
    const PiBounds b = pi_bounds(z, bounds, score);
    out.rows.push_back({z, b.lo, b.up,
                        exact_conformity(data, z, *regressor, score).value(),
                        pi_split(z, cal_scores, split_center, score)});
  }

  const std::pair<const char*, double CurveRow::*> curves[] = {
      {"pi_lo", &CurveRow::pi_lo},
      {"pi_up", &CurveRow::pi_up},
      {"pi_exact", &CurveRow::pi_exact},
      {"pi_split", &CurveRow::pi_split}};
  // Curve values are k/m; the slack keeps 1 - 18/20 on the alpha = 0.1 side.
  const double level = request.alpha - 1e-12;
  for (const auto& [name, member] : curves) {
    for (std::size_t k = 1; k < out.rows.size(); ++k) {
      const bool before = out.rows[k - 1].*member >= level;
      const bool after = out.rows[k].*member >= level;
      if (before != after)
        out.crossings.push_back({name, out.rows[k - 1].z, out.rows[k].z, after});
    }
  }
  return out;
}

std::string format_curve_csv(const CurveResult& curve) {
  std::string text = "z,pi_lo,pi_up,pi_exact,pi_split\n";
  for (const auto& r : curve.rows)
    text += format_number(r.z) + "," + format_number(r.pi_lo) + "," +
            format_number(r.pi_up) + "," + format_number(r.pi_exact) + "," +
            format_number(r.pi_split) + "\n";
  return text;
}

}  // namespace stabcp
