#ifndef UQEVAL_CORE_PIPELINE_HPP_
#define UQEVAL_CORE_PIPELINE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/calibration.hpp"
#include "core/dataset.hpp"
#include "core/estimators.hpp"
#include "core/ranking.hpp"

namespace uqeval {

// A run is fully determined by one config file: dataset + schema, split,
// method, training, metric settings, output directory, seed.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "uqeval_run";
  int jobs = 1;

  std::string dataset_path;
  CsvSchema schema;
  std::optional<SyntheticSpec> synthetic;

  SplitSpec split;
  ModelConfig model;
  EnsembleConfig ensemble;
  RankingConfig ranking;
  int confidence_levels = 100;
  int error_bins = 10;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  // Resolved form: defaults materialized, member seeds filled in. Parses
  // back to an identical config.
  nlohmann::json to_json() const;

  // FNV-1a over the canonical resolved dump.
  std::string config_hash() const;
  // Hash that ignores split strategy/out_dir/jobs, tying an in-domain run
  // to its out-of-domain twin.
  std::string lineage_hash() const;

  void validate() const;
};

struct RunOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<SplitStrategy> split;
  std::optional<std::string> uncertainty;  // ale | epi | total | all
  std::optional<int> jobs;
};

RunConfig apply_overrides(RunConfig config, const RunOverrides& overrides);

// One summary cell: a value plus an explicit flag ("ok", "infinite",
// "degenerate"). Infinite cells carry no numeric value.
struct MetricCell {
  double value = 0.0;
  bool has_value = true;
  std::string flag = "ok";

  static MetricCell ok(double v) { return {v, true, "ok"}; }
  static MetricCell infinite() { return {0.0, false, "infinite"}; }
  static MetricCell degenerate(double v) { return {v, true, "degenerate"}; }
  static MetricCell degenerate_empty() { return {0.0, false, "degenerate"}; }
};

// The seven indices of one uncertainty column, plus auxiliary values.
struct SelectorMetrics {
  MetricCell auco, error_drop, decrease_ratio, auce, mce, ence, cv;
  double ece = 0.0;
  double coverage_p90 = 0.0;
};

struct MetricsSummary {
  std::string method;
  std::string domain;  // "in" (random split) or "out" (group split)
  std::string config_hash;
  std::string lineage_hash;
  std::size_t n_test = 0;
  double mae = 0.0;
  double rmse = 0.0;
  SelectorMetrics epistemic, aleatoric, total;

  nlohmann::json to_json() const;
  static MetricsSummary from_json(const nlohmann::json& j);
  std::string text_table() const;
};

// Metric computation over aggregated predictions; pure given its inputs.
MetricsSummary compute_summary(const UQPredictions& predictions,
                               std::span<const double> targets,
                               const RunConfig& config, const std::string& method,
                               const std::string& domain);

struct EvaluateArtifacts {
  MetricsSummary summary;
  std::string eval_dir;
};

// Commands behind the CLI. Each writes its artifacts atomically under the
// config's (possibly overridden) output directory.
void cmd_synth(const std::string& config_path, const RunOverrides& overrides = {});
void cmd_train(const std::string& config_path, const RunOverrides& overrides = {});
EvaluateArtifacts cmd_evaluate(const std::string& config_path,
                               const RunOverrides& overrides = {});
nlohmann::json cmd_compare(const std::string& in_summary_path,
                           const std::string& out_summary_path,
                           const std::string& out_dir);

// In-memory variants used by the C API and tests.
void run_train(const RunConfig& config, const Dataset& dataset);
EvaluateArtifacts run_evaluate(const RunConfig& config, const Dataset& dataset);
EvaluateArtifacts run_evaluate_with_options(const RunConfig& config,
                                            const Dataset& dataset,
                                            const std::string& uncertainty,
                                            const std::string& eval_dir);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace uqeval

#endif  // UQEVAL_CORE_PIPELINE_HPP_
