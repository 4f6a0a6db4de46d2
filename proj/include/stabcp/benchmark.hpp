#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stabcp/data.hpp"
#include "stabcp/pipeline.hpp"

namespace stabcp {

struct BenchmarkConfig {
  /// Exactly one data source: a generator (fresh draw per repetition) or a
  /// table (random permutation per repetition, last permuted row held out).
  std::optional<GeneratorSpec> generator;
  std::optional<LabeledTable> table;
  std::vector<std::string> methods{"stabcp", "splitcp", "oraclecp"};
  PredictRequest request;
  int repetitions = 100;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  bool standardize = false;
  /// Count heuristic-tau runs in the coverage aggregates.
  bool include_unsafe = false;
};

struct RepetitionRecord {
  int repetition = 0;
  std::string method;
  bool ok = false;
  std::string error;
  bool covered = false;
  /// In original target units.
  double length = 0.0;
  double wall_time = 0.0;
  std::size_t fit_count = 0;
  bool truncated = false;
  std::string shape;
  bool unsafe_tau = false;
};

struct MethodAggregate {
  std::string method;
  std::size_t runs = 0;
  std::size_t failures = 0;
  /// Unset when every run used heuristic tau and those are excluded.
  std::optional<double> coverage;
  double length_mean = 0.0;
  double length_q1 = 0.0;
  double length_median = 0.0;
  double length_q3 = 0.0;
  double time_mean = 0.0;
  /// time_mean / oracleCP's time_mean.
  std::optional<double> normalized_time;
  std::size_t fit_count_total = 0;
  double fit_count_mean = 0.0;
  bool unsafe_tau = false;
};

struct BenchmarkReport {
  BenchmarkConfig config;
  /// "fresh-draw" or "permutation".
  std::string sampling;
  std::string preprocessing;
  std::vector<MethodAggregate> methods;
  /// Sorted by (repetition, method order).
  std::vector<RepetitionRecord> records;
};

/// Per-repetition seed derived from the run seed.
std::uint64_t repetition_seed(std::uint64_t seed, int repetition);

/// The dataset used by one repetition (before standardization).
TabularDataset repetition_dataset(const BenchmarkConfig& config, int repetition);

/// Runs the protocol. Method failures are recorded, not thrown.
BenchmarkReport run_benchmark(const BenchmarkConfig& config);

std::string format_records_csv(const BenchmarkReport& report);

}  // namespace stabcp
