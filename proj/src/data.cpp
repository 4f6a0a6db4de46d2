#include "stabcp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace stabcp {

namespace {

void check_spec(const GeneratorSpec& spec) {
  require(spec.n >= 2, "generator needs n >= 2");
  require(spec.p >= 1, "generator needs p >= 1");
  require(spec.noise_sd >= 0.0 && std::isfinite(spec.noise_sd),
          "noise standard deviation must be finite and nonnegative");
}

// Splits X (n+1 rows) and y into observations plus the held-out last row.
GeneratedData finish(Matrix x, Vector y, GeneratorMetadata meta) {
  const Index n = x.rows() - 1;
  Vector test = x.row(n).transpose();
  const double test_y = y(n);
  return {TabularDataset(x.topRows(n), y.head(n), std::move(test), test_y),
          std::move(meta)};
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (*first == '+') ++first;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::LinearGaussian: return "linear-gaussian";
    case GeneratorKind::Friedman1: return "friedman1";
  }
  return "unknown";
}

GeneratorKind parse_generator_kind(const std::string& text) {
  if (text == "linear" || text == "linear-gaussian")
    return GeneratorKind::LinearGaussian;
  if (text == "friedman1" || text == "friedman") return GeneratorKind::Friedman1;
  throw Error(ErrorKind::InvalidInput, "unknown generator kind '" + text + "'");
}

GeneratedData gen_linear_gaussian(const GeneratorSpec& spec) {
  check_spec(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  GeneratorMetadata meta{spec, {}, {}};
  const Index informative =
      std::max<Index>(1, static_cast<Index>(std::lround(0.1 * spec.p)));
  std::vector<Index> coords(static_cast<std::size_t>(spec.p));
  std::iota(coords.begin(), coords.end(), Index{0});
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(static_cast<std::size_t>(informative));
  std::sort(coords.begin(), coords.end());
  Vector beta = Vector::Zero(spec.p);
  for (Index j : coords) {
    beta(j) = normal(rng);
    meta.informative.push_back(j);
    meta.coefficients.push_back(beta(j));
  }

  Matrix x(spec.n + 1, spec.p);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < spec.p; ++j) x(i, j) = normal(rng);
  Vector y = x * beta;
  if (spec.noise_sd > 0.0)
    for (Index i = 0; i < y.size(); ++i) y(i) += spec.noise_sd * normal(rng);
  return finish(std::move(x), std::move(y), std::move(meta));
}

GeneratedData gen_friedman1(const GeneratorSpec& spec) {
  check_spec(spec);
  require(spec.p >= 5, "friedman1 needs p >= 5");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix x(spec.n + 1, spec.p);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < spec.p; ++j) x(i, j) = unif(rng);
  Vector y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    y(i) = 10.0 * std::sin(std::numbers::pi * x(i, 0) * x(i, 1)) +
           20.0 * (x(i, 2) - 0.5) * (x(i, 2) - 0.5) + 10.0 * x(i, 3) +
           5.0 * x(i, 4);
  }
  if (spec.noise_sd > 0.0)
    for (Index i = 0; i < y.size(); ++i) y(i) += spec.noise_sd * normal(rng);
  GeneratorMetadata meta{spec, {0, 1, 2, 3, 4}, {}};
  return finish(std::move(x), std::move(y), std::move(meta));
}

GeneratedData generate(const GeneratorSpec& spec) {
  switch (spec.kind) {
    case GeneratorKind::LinearGaussian: return gen_linear_gaussian(spec);
    case GeneratorKind::Friedman1: return gen_friedman1(spec);
  }
  throw Error(ErrorKind::InvalidInput, "unknown generator kind");
}

// ---------------------------------------------------------------------------
// CSV

LabeledTable parse_csv(const std::string& text, const std::string& target_column) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    rows.push_back(split_line(line));
    line_numbers.push_back(line_no);
  }
  require(!rows.empty(), "CSV input is empty", ErrorKind::Parse);

  const auto& header = rows.front();
  require(header.size() >= 2, "CSV needs at least two columns", ErrorKind::Parse);
  const bool numeric_header = std::all_of(
      header.begin(), header.end(),
      [](const std::string& c) { return parse_number(c).has_value(); });
  require(!numeric_header, "CSV header row is missing", ErrorKind::Parse);
  for (const auto& name : header)
    require(!name.empty(), "CSV header has an empty column name",
            ErrorKind::Parse);

  std::size_t target = header.size() - 1;
  if (!target_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), target_column);
    require(it != header.end(),
            "target column '" + target_column + "' not found in header",
            ErrorKind::Parse);
    target = static_cast<std::size_t>(it - header.begin());
  }

  const auto n = static_cast<Index>(rows.size() - 1);
  const auto p = static_cast<Index>(header.size() - 1);
  LabeledTable table;
  table.target_name = header[target];
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != target) table.feature_names.push_back(header[c]);
  table.features.resize(n, p);
  table.targets.resize(n);

  for (Index r = 0; r < n; ++r) {
    const auto& cells = rows[static_cast<std::size_t>(r) + 1];
    const auto where = "line " + std::to_string(line_numbers[r + 1]);
    require(cells.size() == header.size(),
            where + ": expected " + std::to_string(header.size()) +
                " columns, found " + std::to_string(cells.size()),
            ErrorKind::Parse);
    Index feature = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto value = parse_number(cells[c]);
      const auto cell_where = where + ", column " + std::to_string(c + 1) +
                              " ('" + header[c] + "')";
      require(value.has_value(), cell_where + ": non-numeric cell '" + cells[c] + "'",
              ErrorKind::Parse);
      require(std::isfinite(*value), cell_where + ": NaN or infinite value",
              ErrorKind::Parse);
      if (c == target)
        table.targets(r) = *value;
      else
        table.features(r, feature++) = *value;
    }
  }
  return table;
}

LabeledTable load_csv(const std::filesystem::path& path,
                      const std::string& target_column) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open '" + path.string() + "'",
          ErrorKind::Io);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), target_column);
}

std::string format_csv(const LabeledTable& table) {
  require(static_cast<Index>(table.feature_names.size()) == table.features.cols(),
          "feature names and columns differ");
  require(table.targets.size() == table.features.rows(),
          "feature rows and targets differ");
  std::string out;
  for (const auto& name : table.feature_names) out += name + ",";
  out += table.target_name + "\n";
  for (Index r = 0; r < table.rows(); ++r) {
    for (Index c = 0; c < table.features.cols(); ++c)
      out += format_number(table.features(r, c)) + ",";
    out += format_number(table.targets(r)) + "\n";
  }
  return out;
}

void save_csv(const std::filesystem::path& path, const LabeledTable& table) {
  const std::string text = format_csv(table);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write '" + path.string() + "'",
          ErrorKind::Io);
  out << text;
  require(static_cast<bool>(out), "write to '" + path.string() + "' failed",
          ErrorKind::Io);
}

TabularDataset to_dataset(const LabeledTable& table, Index test_row) {
  require(test_row >= 0 && test_row < table.rows(), "test row out of range");
  require(table.rows() >= 3, "need at least two observations plus a test row");
  const Index n = table.rows() - 1;
  Matrix x(n, table.features.cols());
  Vector y(n);
  for (Index r = 0, k = 0; r < table.rows(); ++r) {
    if (r == test_row) continue;
    x.row(k) = table.features.row(r);
    y(k++) = table.targets(r);
  }
  return TabularDataset(std::move(x), std::move(y),
                        table.features.row(test_row).transpose(),
                        table.targets(test_row));
}

LabeledTable to_table(const TabularDataset& data) {
  const bool with_test = data.test_target().has_value();
  const Index rows = data.size() + (with_test ? 1 : 0);
  LabeledTable table;
  for (Index j = 0; j < data.dim(); ++j)
    table.feature_names.push_back("x" + std::to_string(j + 1));
  table.target_name = "y";
  table.features.resize(rows, data.dim());
  table.targets.resize(rows);
  table.features.topRows(data.size()) = data.features();
  table.targets.head(data.size()) = data.targets();
  if (with_test) {
    table.features.row(data.size()) = data.test_point().transpose();
    table.targets(data.size()) = *data.test_target();
  }
  return table;
}

// ---------------------------------------------------------------------------
// Standardization and splitting

std::pair<TabularDataset, StandardizeTransform> standardize(
    const TabularDataset& data, const StandardizeOptions& options) {
  const auto n = static_cast<double>(data.size());
  StandardizeTransform t;
  t.feature_mean = data.features().colwise().mean().transpose();
  t.feature_scale.resize(data.dim());
  t.constant_column.assign(static_cast<std::size_t>(data.dim()), false);
  for (Index j = 0; j < data.dim(); ++j) {
    const auto centered = data.features().col(j).array() - t.feature_mean(j);
    const double sd = std::sqrt(centered.square().sum() / n);
    if (sd <= 1e-12 * std::max(1.0, std::abs(t.feature_mean(j)))) {
      require(options.allow_constant_columns,
              "feature column " + std::to_string(j + 1) +
                  " has zero variance");
      t.constant_column[static_cast<std::size_t>(j)] = true;
      t.feature_mean(j) = 0.0;
      t.feature_scale(j) = 1.0;
    } else {
      t.feature_scale(j) = sd;
    }
  }

  const Vector& y = data.targets();
  if (options.center_targets) t.target_mean = y.mean();
  if (options.scale_targets) {
    const double sd = std::sqrt((y.array() - y.mean()).square().sum() / n);
    require(sd > 0.0, "targets have zero variance");
    t.target_scale = sd;
  }

  const Eigen::RowVectorXd mean = t.feature_mean.transpose();
  const Eigen::RowVectorXd inv_scale = t.feature_scale.cwiseInverse().transpose();
  Matrix x = (data.features().rowwise() - mean).array().rowwise() *
             inv_scale.array();
  Vector test = ((data.test_point() - t.feature_mean).array() *
                 inv_scale.transpose().array())
                    .matrix();
  Vector ys = (y.array() - t.target_mean) / t.target_scale;
  std::optional<double> test_y;
  if (data.test_target())
    test_y = (*data.test_target() - t.target_mean) / t.target_scale;
  return {TabularDataset(std::move(x), std::move(ys), std::move(test), test_y),
          std::move(t)};
}

SplitIndices split(Index n, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "train fraction must lie in (0, 1)");
  const auto train = static_cast<Index>(std::floor(train_fraction * n));
  require(train >= 1 && train < n, "split leaves an empty part");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + train);
  out.calibration.assign(order.begin() + train, order.end());
  return out;
}

TabularDataset permute_rows(const TabularDataset& data,
                            const std::vector<Index>& order) {
  require(static_cast<Index>(order.size()) == data.size(),
          "permutation length differs from n");
  std::vector<bool> seen(order.size(), false);
  Matrix x(data.size(), data.dim());
  Vector y(data.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Index r = order[k];
    require(r >= 0 && r < data.size() && !seen[static_cast<std::size_t>(r)],
            "order is not a permutation");
    seen[static_cast<std::size_t>(r)] = true;
    x.row(static_cast<Index>(k)) = data.features().row(r);
    y(static_cast<Index>(k)) = data.targets()(r);
  }
  return TabularDataset(std::move(x), std::move(y), data.test_point(),
                        data.test_target());
}

}  // namespace stabcp
