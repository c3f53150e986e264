#include "core/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "core/errors.hpp"

namespace uqeval {

void Dataset::validate() const {
  const std::size_t n = features.rows;
  if (n == 0 || features.cols == 0) throw DataError("dataset is empty");
  if (targets.size() != n)
    throw DataError("dataset has " + std::to_string(n) + " rows but " +
                    std::to_string(targets.size()) + " targets");
  if (!group_ids.empty() && group_ids.size() != n)
    throw DataError("group labels do not cover every row");
  if (!feature_names.empty() && feature_names.size() != features.cols)
    throw DataError("feature name count does not match feature columns");
  for (std::size_t i = 0; i < features.data.size(); ++i)
    if (!std::isfinite(features.data[i]))
      throw DataError("non-finite feature value at row " +
                      std::to_string(i / features.cols));
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(targets[i]))
      throw DataError("non-finite target value at row " + std::to_string(i));
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& field, std::size_t row, const std::string& column) {
  const std::string t = trim(field);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw DataError("unparsable numeric '" + t + "' in column '" + column +
                    "' at data row " + std::to_string(row));
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::string header;
  if (!std::getline(in, header)) throw DataError("'" + path + "' is empty");
  const std::vector<std::string> names = split_line(header);

  int target_col = -1, group_col = -1;
  std::vector<std::size_t> feature_cols;
  Dataset ds;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::string name = trim(names[c]);
    if (name == schema.target_column) {
      target_col = static_cast<int>(c);
    } else if (!schema.group_column.empty() && name == schema.group_column) {
      group_col = static_cast<int>(c);
    } else {
      feature_cols.push_back(c);
      ds.feature_names.push_back(name);
    }
  }
  if (target_col < 0)
    throw DataError("'" + path + "' has no column '" + schema.target_column + "'");
  if (!schema.group_column.empty() && group_col < 0)
    throw DataError("'" + path + "' has no column '" + schema.group_column + "'");
  if (feature_cols.empty())
    throw DataError("'" + path + "' has no feature columns");

  ds.target_name = schema.target_column;
  ds.group_name = schema.group_column;

  std::vector<double> values;
  std::map<std::string, int> group_relabel;  // first appearance -> dense id
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != names.size())
      throw DataError("row " + std::to_string(row) + " of '" + path + "' has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(names.size()));
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      double v = parse_double(fields[feature_cols[k]], row, ds.feature_names[k]);
      if (!std::isfinite(v))
        throw DataError("non-finite value in column '" + ds.feature_names[k] +
                        "' at data row " + std::to_string(row));
      values.push_back(v);
    }
    double y = parse_double(fields[target_col], row, ds.target_name);
    if (!std::isfinite(y))
      throw DataError("non-finite target at data row " + std::to_string(row));
    ds.targets.push_back(y);
    if (group_col >= 0) {
      const std::string token = trim(fields[group_col]);
      auto it = group_relabel.find(token);
      if (it == group_relabel.end())
        it = group_relabel.emplace(token, static_cast<int>(group_relabel.size())).first;
      ds.group_ids.push_back(it->second);
    }
    ++row;
  }
  if (row == 0) throw DataError("'" + path + "' has a header but no data rows");

  ds.features.rows = row;
  ds.features.cols = feature_cols.size();
  ds.features.data = std::move(values);
  ds.validate();
  return ds;
}

void write_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < dataset.dim(); ++c) {
    out << (c < dataset.feature_names.size() ? dataset.feature_names[c]
                                             : "x" + std::to_string(c + 1))
        << ',';
  }
  out << dataset.target_name;
  if (dataset.has_groups())
    out << ',' << (dataset.group_name.empty() ? "group" : dataset.group_name);
  out << '\n';

  char buf[64];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t c = 0; c < dataset.dim(); ++c) {
      emit(dataset.features.at(i, c));
      out << ',';
    }
    emit(dataset.targets[i]);
    if (dataset.has_groups()) out << ',' << dataset.group_ids[i];
    out << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

const char* to_string(SplitStrategy s) {
  return s == SplitStrategy::kRandom ? "random" : "group";
}

SplitStrategy split_strategy_from_string(const std::string& name) {
  if (name == "random") return SplitStrategy::kRandom;
  if (name == "group") return SplitStrategy::kGroup;
  throw ConfigError("unknown split strategy '" + name + "'");
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || !(test_fraction > 0.0))
    throw ConfigError("split fractions must all be positive");
  const double sum = train_fraction + val_fraction + test_fraction;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
}

namespace {

SplitIndices random_split(std::size_t n, const SplitSpec& spec) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);
  rng.shuffle(order);

  auto cut1 = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  auto cut2 = static_cast<std::size_t>(
      std::llround((spec.train_fraction + spec.val_fraction) * static_cast<double>(n)));
  if (cut1 == 0 || cut2 <= cut1 || cut2 >= n)
    throw DataError("infeasible split: " + std::to_string(n) +
                    " rows leave an empty part at the requested fractions");

  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + cut1);
  out.val.assign(order.begin() + cut1, order.begin() + cut2);
  out.test.assign(order.begin() + cut2, order.end());
  return out;
}

SplitIndices group_split(const Dataset& dataset, const SplitSpec& spec) {
  const std::size_t n = dataset.size();
  int max_gid = 0;
  for (int g : dataset.group_ids) max_gid = std::max(max_gid, g);
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(max_gid) + 1);
  for (std::size_t i = 0; i < n; ++i)
    groups[static_cast<std::size_t>(dataset.group_ids[i])].push_back(i);

  // Shuffle first, then a stable sort by size: equal-size groups stay in
  // seeded-shuffled order.
  Rng rng(spec.seed);
  rng.shuffle(groups);
  std::stable_sort(groups.begin(), groups.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  const double targets[3] = {spec.train_fraction * static_cast<double>(n),
                             spec.val_fraction * static_cast<double>(n),
                             spec.test_fraction * static_cast<double>(n)};
  std::size_t filled[3] = {0, 0, 0};
  SplitIndices out;
  std::vector<std::size_t>* parts[3] = {&out.train, &out.val, &out.test};

  for (const auto& group : groups) {
    if (group.empty()) continue;
    int best = 0;
    double best_deficit = targets[0] - static_cast<double>(filled[0]);
    for (int p = 1; p < 3; ++p) {
      const double deficit = targets[p] - static_cast<double>(filled[p]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = p;
      }
    }
    parts[best]->insert(parts[best]->end(), group.begin(), group.end());
    filled[best] += group.size();
  }

  if (out.train.empty() || out.val.empty() || out.test.empty())
    throw DataError("infeasible split: group sizes leave an empty part");
  return out;
}

}  // namespace

SplitIndices split(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  if (dataset.size() < 3)
    throw DataError("infeasible split: need at least 3 rows");
  SplitIndices out;
  if (spec.strategy == SplitStrategy::kGroup) {
    if (!dataset.has_groups())
      throw ConfigError("group split requested but the dataset has no group labels");
    out = group_split(dataset, spec);
  } else {
    out = random_split(dataset.size(), spec);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::size_t>(rng.below(n));
  return idx;
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return bootstrap_indices(n, rng);
}

const char* to_string(MeanFunction f) {
  return f == MeanFunction::kSumOfSines ? "sum_of_sines" : "polynomial";
}

const char* to_string(NoiseFunction f) {
  return f == NoiseFunction::kConstant ? "constant" : "affine_norm";
}

MeanFunction mean_function_from_string(const std::string& name) {
  if (name == "sum_of_sines") return MeanFunction::kSumOfSines;
  if (name == "polynomial") return MeanFunction::kPolynomial;
  throw ConfigError("unknown mean function '" + name + "'");
}

NoiseFunction noise_function_from_string(const std::string& name) {
  if (name == "constant") return NoiseFunction::kConstant;
  if (name == "affine_norm") return NoiseFunction::kAffineNorm;
  throw ConfigError("unknown noise function '" + name + "'");
}

void SyntheticSpec::validate() const {
  if (samples == 0) throw ConfigError("synthetic spec needs samples > 0");
  if (dim == 0) throw ConfigError("synthetic spec needs dim > 0");
  if (groups == 0) throw ConfigError("synthetic spec needs groups > 0");
  if (!(noise_base > 0.0))
    throw ConfigError("noise_base must be > 0 so sigma(x) stays positive");
  if (noise_slope < 0.0) throw ConfigError("noise_slope must be >= 0");
  if (cluster_spread <= 0.0) throw ConfigError("cluster_spread must be > 0");
  if (cluster_radius < 0.0) throw ConfigError("cluster_radius must be >= 0");
}

double mean_function_value(MeanFunction f, std::span<const double> x) {
  double acc = 0.0;
  if (f == MeanFunction::kSumOfSines) {
    for (double v : x) acc += std::sin(v);
  } else {
    for (double v : x) acc += 0.3 * v * v + 0.5 * v;
  }
  return acc;
}

double noise_function_value(NoiseFunction f, double base, double slope,
                            std::span<const double> x) {
  if (f == NoiseFunction::kConstant) return base;
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return base + slope * std::sqrt(sq);
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  // Centers on a circle in the first two dims; a single group sits at the
  // origin. Deterministic given the spec.
  Matrix centers(spec.groups, spec.dim, 0.0);
  if (spec.groups > 1) {
    for (std::size_t g = 0; g < spec.groups; ++g) {
      const double angle =
          2.0 * 3.14159265358979323846 * static_cast<double>(g) / static_cast<double>(spec.groups);
      centers.at(g, 0) = spec.cluster_radius * std::cos(angle);
      if (spec.dim > 1) centers.at(g, 1) = spec.cluster_radius * std::sin(angle);
    }
  }

  SyntheticData out;
  Dataset& ds = out.dataset;
  ds.features = Matrix(spec.samples, spec.dim);
  ds.targets.resize(spec.samples);
  out.true_noise.resize(spec.samples);
  for (std::size_t c = 0; c < spec.dim; ++c)
    ds.feature_names.push_back("x" + std::to_string(c + 1));
  if (spec.groups > 1) {
    ds.group_ids.resize(spec.samples);
    ds.group_name = "group";
  }

  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t g = i % spec.groups;
    for (std::size_t c = 0; c < spec.dim; ++c)
      ds.features.at(i, c) = centers.at(g, c) + rng.normal(0.0, spec.cluster_spread);
    const auto x = ds.features.row(i);
    const double sigma = noise_function_value(spec.noise_fn, spec.noise_base,
                                              spec.noise_slope, x);
    out.true_noise[i] = sigma;
    ds.targets[i] = mean_function_value(spec.mean_fn, x) + rng.normal(0.0, sigma);
    if (spec.groups > 1) ds.group_ids[i] = static_cast<int>(g);
  }
  ds.validate();
  return out;
}

}  // namespace uqeval
