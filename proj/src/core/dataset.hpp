#ifndef UQEVAL_CORE_DATASET_HPP_
#define UQEVAL_CORE_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/rng.hpp"

namespace uqeval {

// Dense row-major matrix of doubles. Minimal on purpose: the models in this
// project are small enough that explicit loops beat a linear-algebra
// dependency.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  std::span<double> row(std::size_t r) {
    return {data.data() + r * cols, cols};
  }
};

struct Dataset {
  Matrix features;                 // N x D
  std::vector<double> targets;     // N
  std::vector<int> group_ids;      // empty, or N entries dense-relabeled from 0
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  std::string group_name;          // empty when group_ids is
  std::string target_units;

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
  bool has_groups() const { return !group_ids.empty(); }
  // Shape consistency + finiteness; throws DataError.
  void validate() const;
};

struct CsvSchema {
  std::string target_column = "y";
  std::string group_column;  // empty = no groups
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);
void write_csv(const std::string& path, const Dataset& dataset);

enum class SplitStrategy { kRandom, kGroup };

const char* to_string(SplitStrategy s);
SplitStrategy split_strategy_from_string(const std::string& name);

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  SplitStrategy strategy = SplitStrategy::kRandom;
  std::uint64_t seed = 0;

  void validate() const;  // fractions positive and summing to 1
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Deterministic partition of [0, N). Random strategy: seeded shuffle then
// contiguous cut at the fraction boundaries. Group strategy: every row of a
// group lands in one part; groups are taken largest-first (ties shuffled by
// the seed) and each goes to the part currently furthest below its target.
// Index lists are returned sorted. Throws DataError when any part would be
// empty.
SplitIndices split(const Dataset& dataset, const SplitSpec& spec);

// n draws uniform with replacement from [0, n).
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed);
std::vector<std::size_t> bootstrap_indices(std::size_t n, Rng& rng);

enum class MeanFunction { kSumOfSines, kPolynomial };
enum class NoiseFunction { kConstant, kAffineNorm };

const char* to_string(MeanFunction f);
const char* to_string(NoiseFunction f);
MeanFunction mean_function_from_string(const std::string& name);
NoiseFunction noise_function_from_string(const std::string& name);

// Synthetic generator with known ground-truth noise. Features are sampled
// around `groups` cluster centers (centers on a circle in the first two
// dimensions so group-exclusive splits produce a genuine domain shift);
// targets are mean_fn(x) + eps with eps ~ N(0, sigma(x)^2).
struct SyntheticSpec {
  std::size_t samples = 1000;
  std::size_t dim = 2;
  MeanFunction mean_fn = MeanFunction::kSumOfSines;
  NoiseFunction noise_fn = NoiseFunction::kAffineNorm;
  double noise_base = 0.1;       // sigma = base (constant) or base + slope*|x|
  double noise_slope = 0.15;
  std::size_t groups = 1;
  double cluster_radius = 2.5;   // distance of centers from the origin
  double cluster_spread = 0.6;   // stddev of features around their center
  std::uint64_t seed = 0;

  void validate() const;  // sigma > 0 over the domain, shapes positive
};

struct SyntheticData {
  Dataset dataset;
  std::vector<double> true_noise;  // sigma(x) per row, as a standard deviation
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

double mean_function_value(MeanFunction f, std::span<const double> x);
double noise_function_value(NoiseFunction f, double base, double slope,
                            std::span<const double> x);

}  // namespace uqeval

#endif  // UQEVAL_CORE_DATASET_HPP_
