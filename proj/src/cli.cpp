#include "stabcp/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "stabcp/benchmark.hpp"
#include "stabcp/data.hpp"
#include "stabcp/pipeline.hpp"

namespace stabcp {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kSchemaVersion = "1";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flags shared by predict, benchmark and curve.
struct RequestFlags {
  std::string method = "stabcp";
  std::string model = "ridge";
  std::optional<double> lambda;
  double solver_tol = 1e-9;
  int max_iter = 20000;
  double alpha = 0.1;
  std::optional<double> z_min;
  std::optional<double> z_max;
  std::optional<double> anchor;
  bool bisection = false;
  std::string tau = "auto";
  std::string tau_file;
  int sgd_iters = 100;
  bool allow_unsafe_tau = false;
  double eps_r = 1e-4;
  std::size_t grid_size = 200;
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
  std::vector<double> interp_anchors;
};

void add_request_flags(CLI::App* app, RequestFlags& f, bool with_method) {
  if (with_method)
    app->add_option("--method", f.method, "stabcp|splitcp|rootcp|oraclecp|gridcp|interpcp")
        ->check(CLI::IsMember(known_methods()));
  app->add_option("--model", f.model, "ridge|ladridge")
      ->check(CLI::IsMember({"ridge", "ladridge"}));
  app->add_option("--lambda", f.lambda, "Regularization strength");
  app->add_option("--solver-tol", f.solver_tol, "LAD-ridge duality-gap target");
  app->add_option("--max-iter", f.max_iter, "LAD-ridge iteration cap");
  app->add_option("--alpha", f.alpha, "Miscoverage level")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--z-min", f.z_min, "Candidate range lower end");
  app->add_option("--z-max", f.z_max, "Candidate range upper end");
  app->add_option("--anchor", f.anchor, "stabCP anchor candidate");
  app->add_flag("--bisection", f.bisection, "stabCP by bisection on pi_up");
  app->add_option("--tau", f.tau, "auto|linear-exact|sgd-heuristic|file")
      ->check(CLI::IsMember({"auto", "linear-exact", "sgd-heuristic", "file"}));
  app->add_option("--tau-file", f.tau_file, "n+1 stability bounds");
  app->add_option("--sgd-iters", f.sgd_iters, "Iterations for the sgd heuristic");
  app->add_flag("--allow-unsafe-tau", f.allow_unsafe_tau,
                "Accept bounds without a coverage guarantee");
  app->add_option("--eps-r", f.eps_r, "Bisection tolerance");
  app->add_option("--grid-size", f.grid_size, "Grid points for gridcp/interpcp/curve");
  app->add_option("--train-fraction", f.train_fraction, "splitCP training share");
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--interp-anchors", f.interp_anchors, "interpcp knots")
      ->delimiter(',');
}

Vector read_tau_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open '" + path + "'", ErrorKind::Io);
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream values(text);
  std::vector<double> tau;
  std::string token;
  while (values >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == token.size(), "tau file: bad value '" + token + "'",
            ErrorKind::Parse);
    tau.push_back(v);
  }
  return Eigen::Map<const Vector>(tau.data(), static_cast<Index>(tau.size()));
}

PredictRequest to_request(const RequestFlags& f) {
  PredictRequest r;
  r.method = f.method;
  r.model.name = f.model;
  r.model.lambda_reg = f.lambda;
  r.model.solver_tol = f.solver_tol;
  r.model.max_iter = f.max_iter;
  r.alpha = f.alpha;
  if (f.z_min.has_value() != f.z_max.has_value())
    throw UsageError("--z-min and --z-max go together");
  if (f.z_min) r.range = Range{*f.z_min, *f.z_max};
  r.anchor = f.anchor;
  r.bisection = f.bisection;
  r.tau_source = parse_tau_source(f.tau);
  if (r.tau_source == TauSource::SgdHeuristic && !f.allow_unsafe_tau)
    throw UsageError(
        "refusing sgd-heuristic tau: it carries no coverage guarantee "
        "(pass --allow-unsafe-tau to override)");
  if (r.tau_source == TauSource::File) {
    if (f.tau_file.empty()) throw UsageError("--tau file needs --tau-file");
    r.tau_values = read_tau_file(f.tau_file);
  }
  r.sgd_iterations = f.sgd_iters;
  r.allow_unsafe_tau = f.allow_unsafe_tau;
  r.eps_r = f.eps_r;
  r.grid_size = f.grid_size;
  r.train_fraction = f.train_fraction;
  r.split_seed = f.seed;
  r.interp_anchors = f.interp_anchors;
  return r;
}

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  return p.replace_extension(".meta.json");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write '" + path.string() + "'",
          ErrorKind::Io);
  out << text;
  require(static_cast<bool>(out), "write to '" + path.string() + "' failed",
          ErrorKind::Io);
}

void emit(const json& doc, const std::string& out_path, std::ostream& out) {
  if (out_path.empty())
    out << doc.dump(2) << "\n";
  else
    write_text(out_path, doc.dump(2) + "\n");
}

struct LoadedData {
  TabularDataset dataset;
  Index test_row;
};

LoadedData load_dataset(const std::string& path, const std::string& target,
                        std::optional<Index> test_row) {
  const LabeledTable table = load_csv(path, target);
  Index row = table.rows() - 1;
  if (test_row) {
    row = *test_row;
  } else if (const fs::path meta = sidecar_path(path); fs::exists(meta)) {
    std::ifstream in(meta);
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_object() && doc.contains("test_row") && doc["test_row"].is_number_integer())
      row = doc["test_row"].get<Index>();
  }
  if (row < 0 || row >= table.rows())
    throw UsageError("--test-row out of range");
  return {to_dataset(table, row), row};
}

json intervals_json(const PredictionSet& set,
                    const std::optional<StandardizeTransform>& transform) {
  json arr = json::array();
  for (Interval iv : set.intervals()) {
    if (transform) iv = transform->invert(iv);
    arr.push_back({iv.lo, iv.hi});
  }
  return arr;
}

json config_json(const PredictRequest& r) {
  json j = {{"model", r.model.name},
            {"alpha", r.alpha},
            {"tau_source", to_string(r.tau_source)},
            {"eps_r", r.eps_r},
            {"grid_size", r.grid_size},
            {"train_fraction", r.train_fraction},
            {"bisection", r.bisection}};
  j["lambda"] = r.model.lambda_reg ? json(*r.model.lambda_reg) : json(nullptr);
  j["range"] = r.range ? json({r.range->lo, r.range->hi}) : json(nullptr);
  j["anchor"] = r.anchor ? json(*r.anchor) : json(nullptr);
  return j;
}

// --------------------------------------------------------------------------

struct GenFlags {
  std::string kind = "linear";
  Index n = 100;
  Index p = 10;
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenFlags& f, std::ostream& out) {
  GeneratorSpec spec{parse_generator_kind(f.kind), f.n, f.p, f.noise, f.seed};
  const GeneratedData gen = generate(spec);
  save_csv(f.out, to_table(gen.dataset));
  json meta = {{"schema", std::string("stabcp.gen/") + kSchemaVersion},
               {"kind", to_string(spec.kind)},
               {"n", spec.n},
               {"p", spec.p},
               {"noise_sd", spec.noise_sd},
               {"seed", spec.seed},
               {"rows", spec.n + 1},
               {"test_row", spec.n},
               {"target_column", "y"},
               {"informative", gen.metadata.informative},
               {"coefficients", gen.metadata.coefficients}};
  const fs::path meta_path = sidecar_path(f.out);
  write_text(meta_path, meta.dump(2) + "\n");
  out << json({{"schema", std::string("stabcp.gen-result/") + kSchemaVersion},
               {"data", f.out},
               {"metadata", meta_path.string()},
               {"rows", spec.n + 1}})
             .dump(2)
      << "\n";
  return kExitOk;
}

struct DataFlags {
  std::string data;
  std::string target;
  std::optional<Index> test_row;
  bool standardize = false;
  std::optional<double> true_target;
  std::string out;
};

void add_data_flags(CLI::App* app, DataFlags& d) {
  app->add_option("--data", d.data, "CSV file with a header row");
  app->add_option("--target", d.target, "Target column (default: last)");
  app->add_option("--test-row", d.test_row,
                  "Row used as x_{n+1} (default: sidecar or last row)");
  app->add_flag("--standardize", d.standardize,
                "Standardize features and targets on the observed rows");
}

int cmd_predict(const DataFlags& d, const RequestFlags& f, std::ostream& out) {
  PredictRequest request = to_request(f);
  if (request.method == "oraclecp" && !d.true_target)
    throw UsageError("oraclecp needs --true-target");
  if (d.data.empty()) throw UsageError("--data is required");
  auto [data, test_row] = load_dataset(d.data, d.target, d.test_row);

  std::optional<StandardizeTransform> transform;
  request.true_target = d.true_target;
  if (d.standardize) {
    auto [scaled, t] = standardize(data);
    data = std::move(scaled);
    auto to_std = [&t](double v) { return (v - t.target_mean) / t.target_scale; };
    if (request.range) request.range = Range{to_std(request.range->lo), to_std(request.range->hi)};
    if (request.anchor) request.anchor = to_std(*request.anchor);
    if (request.true_target) request.true_target = to_std(*request.true_target);
    transform = std::move(t);
  }

  const MethodRun run = run_method(data, request);
  const auto& rep = run.report;
  Range range = rep.set.range();
  if (transform) {
    const Interval r = transform->invert(Interval{range.lo, range.hi});
    range = {r.lo, r.hi};
  }
  const double unit = transform ? transform->target_scale : 1.0;
  json doc = {{"schema", std::string("stabcp.predict/") + kSchemaVersion},
              {"method", rep.set.method()},
              {"alpha", request.alpha},
              {"model", request.model.name},
              {"shape", to_string(rep.set.shape())},
              {"intervals", intervals_json(rep.set, transform)},
              {"range", {range.lo, range.hi}},
              {"length", rep.length * unit},
              {"fit_count", rep.fit_count},
              {"anchor_fits", run.anchor_fits},
              {"tau_provenance", rep.tau_provenance},
              {"unsafe_tau", run.unsafe_tau},
              {"truncated_to_range", rep.truncated},
              {"wall_time", rep.wall_time},
              {"test_row", test_row},
              {"preprocessing", transform ? "standardized" : "none"}};
  doc["anchor"] = run.anchor ? json(transform ? transform->invert_target(*run.anchor)
                                              : *run.anchor)
                             : json(nullptr);
  doc["covered"] = rep.covered ? json(*rep.covered) : json(nullptr);
  emit(doc, d.out, out);
  return kExitOk;
}

struct BenchFlags {
  std::string kind;
  Index n = 100;
  Index p = 10;
  double noise = 1.0;
  std::string methods = "stabcp,splitcp,oraclecp";
  int reps = 100;
  std::optional<unsigned> jobs;
  bool include_unsafe = false;
  std::string records;
};

int cmd_benchmark(const DataFlags& d, const BenchFlags& b, const RequestFlags& f,
                  std::ostream& out) {
  BenchmarkConfig config;
  if (b.kind.empty() == d.data.empty())
    throw UsageError("benchmark needs exactly one of --kind or --data");
  if (!b.kind.empty())
    config.generator = GeneratorSpec{parse_generator_kind(b.kind), b.n, b.p, b.noise, 0};
  else
    config.table = load_csv(d.data, d.target);
  config.methods.clear();
  std::stringstream list(b.methods);
  for (std::string m; std::getline(list, m, ',');)
    if (!m.empty()) config.methods.push_back(m);
  const auto known = known_methods();
  for (const auto& m : config.methods)
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw UsageError("unknown method '" + m + "'");
  if (config.methods.empty()) throw UsageError("--methods is empty");
  if (b.reps < 1) throw UsageError("--reps must be at least 1");
  config.request = to_request(f);
  config.repetitions = b.reps;
  config.seed = f.seed;
  config.standardize = d.standardize;
  config.include_unsafe = b.include_unsafe;
  config.jobs = 1;
  if (b.jobs) {
    config.jobs = *b.jobs;
  } else if (const char* env = std::getenv("STABCP_JOBS")) {
    try {
      config.jobs = static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
      throw UsageError("STABCP_JOBS must be a positive integer");
    }
  }
  if (config.jobs == 0) throw UsageError("--jobs must be positive");

  const BenchmarkReport report = run_benchmark(config);
  json methods = json::array();
  for (const auto& a : report.methods) {
    json m = {{"method", a.method},
              {"runs", a.runs},
              {"failures", a.failures},
              {"length", {{"mean", a.length_mean},
                          {"q1", a.length_q1},
                          {"median", a.length_median},
                          {"q3", a.length_q3}}},
              {"time_mean", a.time_mean},
              {"fit_count_total", a.fit_count_total},
              {"fit_count_mean", a.fit_count_mean},
              {"unsafe_tau", a.unsafe_tau}};
    m["coverage"] = a.coverage ? json(*a.coverage) : json(nullptr);
    m["normalized_time"] = a.normalized_time ? json(*a.normalized_time) : json(nullptr);
    methods.push_back(std::move(m));
  }
  json cfg = config_json(config.request);
  cfg["methods"] = report.config.methods;
  cfg["jobs"] = config.jobs;
  cfg["include_unsafe"] = config.include_unsafe;
  if (config.generator)
    cfg["generator"] = {{"kind", to_string(config.generator->kind)},
                        {"n", config.generator->n},
                        {"p", config.generator->p},
                        {"noise_sd", config.generator->noise_sd}};
  else
    cfg["data"] = d.data;
  json doc = {{"schema", std::string("stabcp.benchmark/") + kSchemaVersion},
              {"repetitions", config.repetitions},
              {"seed", config.seed},
              {"sampling", report.sampling},
              {"preprocessing", report.preprocessing},
              {"config", cfg},
              {"methods", methods}};
  if (!b.records.empty()) write_text(b.records, format_records_csv(report));
  emit(doc, d.out, out);
  return kExitOk;
}

int cmd_curve(const DataFlags& d, const RequestFlags& f, std::ostream& out) {
  if (d.data.empty()) throw UsageError("--data is required");
  if (d.out.empty()) throw UsageError("curve needs --out for the CSV");
  PredictRequest request = to_request(f);
  auto [data, test_row] = load_dataset(d.data, d.target, d.test_row);
  if (d.standardize) data = standardize(data).first;
  const CurveResult curve = conformity_curve(data, request);
  write_text(d.out, format_curve_csv(curve));
  json crossings = json::array();
  for (const auto& c : curve.crossings)
    crossings.push_back({{"curve", c.curve},
                         {"z_before", c.z_before},
                         {"z_after", c.z_after},
                         {"direction", c.rising ? "up" : "down"}});
  json doc = {{"schema", std::string("stabcp.curve/") + kSchemaVersion},
              {"csv", d.out},
              {"rows", curve.rows.size()},
              {"alpha", request.alpha},
              {"anchor", curve.anchor},
              {"tau_provenance", curve.tau_provenance},
              {"test_row", test_row},
              {"preprocessing", d.standardize ? "standardized" : "none"},
              {"crossings", crossings}};
  out << doc.dump(2) << "\n";
  return kExitOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Numerical:
    case ErrorKind::State: return kExitNumerical;
    case ErrorKind::InvalidInput:
    case ErrorKind::Parse:
    case ErrorKind::Io: return kExitData;
  }
  return kExitData;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Stable conformal prediction sets for regression", "stabcp"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic dataset");
  gen_cmd->add_option("--kind", gen.kind, "linear|friedman1")
      ->check(CLI::IsMember({"linear", "linear-gaussian", "friedman1"}));
  gen_cmd->add_option("--n", gen.n, "Observations (a test row is added)");
  gen_cmd->add_option("--p", gen.p, "Features");
  gen_cmd->add_option("--noise", gen.noise, "Noise standard deviation");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output CSV")->required();

  DataFlags predict_data;
  RequestFlags predict_flags;
  auto* predict_cmd = app.add_subcommand("predict", "Prediction set for one test row");
  add_data_flags(predict_cmd, predict_data);
  add_request_flags(predict_cmd, predict_flags, true);
  predict_cmd->add_option("--true-target", predict_data.true_target,
                          "Known y_{n+1} (oraclecp, coverage)");
  predict_cmd->add_option("--out", predict_data.out, "Write JSON here");

  DataFlags bench_data;
  BenchFlags bench;
  RequestFlags bench_flags;
  auto* bench_cmd = app.add_subcommand("benchmark", "Repeated coverage/length/time runs");
  add_data_flags(bench_cmd, bench_data);
  add_request_flags(bench_cmd, bench_flags, false);
  bench_cmd->add_option("--kind", bench.kind, "Generator instead of --data")
      ->check(CLI::IsMember({"linear", "linear-gaussian", "friedman1"}));
  bench_cmd->add_option("--n", bench.n, "Generated observations");
  bench_cmd->add_option("--p", bench.p, "Generated features");
  bench_cmd->add_option("--noise", bench.noise, "Generated noise sd");
  bench_cmd->add_option("--methods", bench.methods, "Comma-separated methods");
  bench_cmd->add_option("--reps", bench.reps, "Repetitions");
  bench_cmd->add_option("--jobs", bench.jobs, "Worker threads (env STABCP_JOBS)");
  bench_cmd->add_flag("--include-unsafe", bench.include_unsafe,
                      "Count heuristic-tau runs in coverage");
  bench_cmd->add_option("--records", bench.records, "Per-repetition CSV");
  bench_cmd->add_option("--out", bench_data.out, "Write JSON here");

  DataFlags curve_data;
  RequestFlags curve_flags;
  auto* curve_cmd = app.add_subcommand("curve", "Conformity curves over a grid");
  add_data_flags(curve_cmd, curve_data);
  add_request_flags(curve_cmd, curve_flags, false);
  curve_cmd->add_option("--out", curve_data.out, "Output CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    // Prints help to `out`, or the parse error to `err`.
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*predict_cmd) return cmd_predict(predict_data, predict_flags, out);
    if (*bench_cmd) return cmd_benchmark(bench_data, bench, bench_flags, out);
    if (*curve_cmd) return cmd_curve(curve_data, curve_flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace stabcp
