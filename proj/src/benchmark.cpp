#include "stabcp/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace stabcp {

namespace {

/// Linear-interpolation quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<RepetitionRecord> run_repetition(const BenchmarkConfig& config,
                                             const std::vector<std::string>& methods,
                                             int rep) {
  TabularDataset data = repetition_dataset(config, rep);
  PredictRequest request = config.request;
  request.split_seed = repetition_seed(config.seed, rep) ^ 0x9e3779b97f4a7c15ULL;
  double unit = 1.0;
  if (config.standardize) {
    auto [scaled, transform] = standardize(data);
    data = std::move(scaled);
    unit = transform.target_scale;
    if (request.range)
      request.range = Range{(request.range->lo - transform.target_mean) / unit,
                            (request.range->hi - transform.target_mean) / unit};
    if (request.anchor)
      request.anchor = (*request.anchor - transform.target_mean) / unit;
  }
  request.true_target.reset();

  std::vector<RepetitionRecord> out;
  for (const auto& method : methods) {
    RepetitionRecord rec;
    rec.repetition = rep;
    rec.method = method;
    request.method = method;
    try {
      const MethodRun run = run_method(data, request);
      rec.ok = true;
      rec.covered = run.report.covered.value_or(false);
      rec.length = run.report.length * unit;
      rec.wall_time = run.report.wall_time;
      rec.fit_count = run.report.fit_count;
      rec.truncated = run.report.truncated;
      rec.shape = to_string(run.report.set.shape());
      rec.unsafe_tau = run.unsafe_tau;
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.unsafe_tau = method == "stabcp" &&
                       request.tau_source == TauSource::SgdHeuristic;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::uint64_t repetition_seed(std::uint64_t seed, int repetition) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(repetition)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

TabularDataset repetition_dataset(const BenchmarkConfig& config, int repetition) {
  const std::uint64_t seed = repetition_seed(config.seed, repetition);
  if (config.generator) {
    GeneratorSpec spec = *config.generator;
    spec.seed = seed;
    return generate(spec).dataset;
  }
  require(config.table.has_value(), "benchmark needs a generator or a table");
  const LabeledTable& table = *config.table;
  std::vector<Index> order(static_cast<std::size_t>(table.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  LabeledTable permuted = table;
  for (std::size_t k = 0; k < order.size(); ++k) {
    permuted.features.row(static_cast<Index>(k)) = table.features.row(order[k]);
    permuted.targets(static_cast<Index>(k)) = table.targets(order[k]);
  }
  return to_dataset(permuted, permuted.rows() - 1);
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config) {
  require(config.repetitions >= 1, "repetitions must be at least 1");
  require(!config.methods.empty(), "method list is empty");
  require(config.generator.has_value() != config.table.has_value(),
          "benchmark needs exactly one of a generator or a table");
  const auto known = known_methods();
  for (const auto& m : config.methods)
    require(std::find(known.begin(), known.end(), m) != known.end(),
            "unknown method '" + m + "'");

  // oracleCP is always timed: it is the normalization reference.
  std::vector<std::string> methods = config.methods;
  if (std::find(methods.begin(), methods.end(), "oraclecp") == methods.end())
    methods.push_back("oraclecp");

  const auto reps = static_cast<std::size_t>(config.repetitions);
  std::vector<std::vector<RepetitionRecord>> per_rep(reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < reps; r = next++)
      per_rep[r] = run_repetition(config, methods, static_cast<int>(r));
  };
  const unsigned jobs =
      std::max(1u, std::min<unsigned>(config.jobs, static_cast<unsigned>(reps)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  BenchmarkReport report;
  report.config = config;
  report.config.methods = methods;
  report.sampling = config.generator ? "fresh-draw" : "permutation";
  report.preprocessing = config.standardize ? "standardized" : "none";
  for (auto& recs : per_rep)
    for (auto& rec : recs) report.records.push_back(std::move(rec));

  for (const auto& method : methods) {
    MethodAggregate agg;
    agg.method = method;
    std::vector<double> lengths;
    double time_sum = 0.0;
    std::size_t covered = 0, counted = 0;
    for (const auto& rec : report.records) {
      if (rec.method != method) continue;
      agg.unsafe_tau = agg.unsafe_tau || rec.unsafe_tau;
      if (!rec.ok) {
        ++agg.failures;
        continue;
      }
      ++agg.runs;
      lengths.push_back(rec.length);
      time_sum += rec.wall_time;
      agg.fit_count_total += rec.fit_count;
      if (!rec.unsafe_tau || config.include_unsafe) {
        ++counted;
        covered += rec.covered;
      }
    }
    if (counted > 0)
      agg.coverage = static_cast<double>(covered) / static_cast<double>(counted);
    if (agg.runs > 0) {
      std::sort(lengths.begin(), lengths.end());
      agg.length_mean =
          std::accumulate(lengths.begin(), lengths.end(), 0.0) /
          static_cast<double>(lengths.size());
      agg.length_q1 = quantile(lengths, 0.25);
      agg.length_median = quantile(lengths, 0.5);
      agg.length_q3 = quantile(lengths, 0.75);
      agg.time_mean = time_sum / static_cast<double>(agg.runs);
      agg.fit_count_mean = static_cast<double>(agg.fit_count_total) /
                           static_cast<double>(agg.runs);
    }
    report.methods.push_back(std::move(agg));
  }

  const auto oracle = std::find_if(
      report.methods.begin(), report.methods.end(),
      [](const MethodAggregate& a) { return a.method == "oraclecp"; });
  if (oracle->runs > 0 && oracle->time_mean > 0.0) {
    const double divisor = oracle->time_mean;
    for (auto& agg : report.methods)
      if (agg.runs > 0) agg.normalized_time = agg.time_mean / divisor;
  }
  return report;
}

std::string format_records_csv(const BenchmarkReport& report) {
  std::string text =
      "repetition,method,ok,covered,length,wall_time,fit_count,truncated,shape,"
      "unsafe_tau,error\n";
  for (const auto& r : report.records) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    text += std::to_string(r.repetition) + "," + r.method + "," +
            (r.ok ? "1" : "0") + "," + (r.covered ? "1" : "0") + "," +
            format_number(r.length) + "," + format_number(r.wall_time) + "," +
            std::to_string(r.fit_count) + "," + (r.truncated ? "1" : "0") + "," +
            r.shape + "," + (r.unsafe_tau ? "1" : "0") + "," + error + "\n";
  }
  return text;
}

}  // namespace stabcp
