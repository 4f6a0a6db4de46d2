#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stabcp/types.hpp"

namespace stabcp {

enum class GeneratorKind { LinearGaussian, Friedman1 };

std::string to_string(GeneratorKind kind);
GeneratorKind parse_generator_kind(const std::string& text);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::LinearGaussian;
  Index n = 100;
  Index p = 10;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
};

/// What a generator did beyond the spec: the informative coordinates and
/// their coefficients (linear-gaussian only).
struct GeneratorMetadata {
  GeneratorSpec spec;
  std::vector<Index> informative;
  std::vector<double> coefficients;
};

struct GeneratedData {
  TabularDataset dataset;
  GeneratorMetadata metadata;
};

/// Standard-normal features, 10% of the coordinates informative with
/// standard-normal coefficients, additive Gaussian noise. The (n+1)-th row is
/// drawn from the same law and returned as the test point with its target.
GeneratedData gen_linear_gaussian(const GeneratorSpec& spec);

/// Friedman #1: features uniform on [0, 1]^p,
/// y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 + noise.
GeneratedData gen_friedman1(const GeneratorSpec& spec);

GeneratedData generate(const GeneratorSpec& spec);

/// Rows of a CSV file with the target column split off.
struct LabeledTable {
  std::vector<std::string> feature_names;
  std::string target_name;
  Matrix features;
  Vector targets;

  Index rows() const { return features.rows(); }
};

/// Target column by header name; empty selects the last column.
LabeledTable load_csv(const std::filesystem::path& path,
                      const std::string& target_column = "");
LabeledTable parse_csv(const std::string& text,
                       const std::string& target_column = "");

/// Writes features then the target as the last column.
void save_csv(const std::filesystem::path& path, const LabeledTable& table);
std::string format_csv(const LabeledTable& table);

/// Shortest text that parses back to exactly `v`.
std::string format_number(double v);

/// Uses row `test_row` as (x_{n+1}, y_{n+1}) and the others as observations.
TabularDataset to_dataset(const LabeledTable& table, Index test_row);

/// All n observed rows followed by the test row (when its target is known).
LabeledTable to_table(const TabularDataset& data);

/// Affine maps applied by standardize(); invert() turns target-unit
/// intervals back into original units.
struct StandardizeTransform {
  Vector feature_mean;
  Vector feature_scale;
  std::vector<bool> constant_column;
  double target_mean = 0.0;
  double target_scale = 1.0;

  double invert_target(double standardized) const {
    return standardized * target_scale + target_mean;
  }
  Interval invert(Interval interval) const {
    return {invert_target(interval.lo), invert_target(interval.hi)};
  }
};

struct StandardizeOptions {
  /// Leave zero-variance columns untouched instead of failing.
  bool allow_constant_columns = false;
  bool center_targets = true;
  bool scale_targets = true;
};

/// Per-column mean 0 / variance 1 on the n training rows; x_{n+1} (and the
/// known test target) use the same statistics.
std::pair<TabularDataset, StandardizeTransform> standardize(
    const TabularDataset& data, const StandardizeOptions& options = {});

struct SplitIndices {
  std::vector<Index> train;
  std::vector<Index> calibration;
};

/// Seeded shuffle, then the first floor(train_fraction * n) rows train.
SplitIndices split(Index n, double train_fraction, std::uint64_t seed);

/// Reorders the observed rows (the test point is untouched).
TabularDataset permute_rows(const TabularDataset& data,
                            const std::vector<Index>& order);

}  // namespace stabcp
