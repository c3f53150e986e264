#include "core/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/errors.hpp"
#include "core/io.hpp"
#include "core/model.hpp"

namespace uqeval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kSummaryFormat[] = "UQEVAL-SUMMARY-v1";
constexpr char kManifestFormat[] = "UQEVAL-ENSEMBLE-v1";
constexpr char kSplitFormat[] = "UQEVAL-SPLIT-v1";
constexpr char kCompareFormat[] = "UQEVAL-COMPARE-v1";
constexpr std::uint64_t kSplitStream = 0x53504C4954ULL;
constexpr std::uint64_t kMcStream = 0x4D435052ULL;

void check_keys(const json& j, const std::string& block,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + it.key() + "' in " + block + " config");
  }
}

json object_or_empty(const json& j, const char* key) {
  if (!j.contains(key)) return json::object();
  if (!j.at(key).is_object())
    throw ConfigError(std::string("'") + key + "' must be a JSON object");
  return j.at(key);
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig RunConfig::from_json(const json& j) {
  try {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(j, "run",
               {"seed", "out_dir", "jobs", "dataset", "synthetic", "split", "model",
                "train", "ensemble", "ranking", "calibration"});
    RunConfig c;
    c.seed = j.value("seed", std::uint64_t{0});
    c.out_dir = j.value("out_dir", std::string("uqeval_run"));
    c.jobs = j.value("jobs", 1);

    const json dataset = object_or_empty(j, "dataset");
    check_keys(dataset, "dataset", {"path", "target", "group"});
    c.dataset_path = dataset.value("path", std::string());
    c.schema.target_column = dataset.value("target", std::string("y"));
    c.schema.group_column = dataset.value("group", std::string());

    if (j.contains("synthetic")) {
      const json synth = object_or_empty(j, "synthetic");
      check_keys(synth, "synthetic",
                 {"samples", "dim", "mean_fn", "noise_fn", "noise_base", "noise_slope",
                  "groups", "cluster_radius", "cluster_spread"});
      SyntheticSpec spec;
      spec.samples = synth.value("samples", std::uint64_t{1000});
      spec.dim = synth.value("dim", std::uint64_t{2});
      spec.mean_fn = mean_function_from_string(
          synth.value("mean_fn", std::string("sum_of_sines")));
      spec.noise_fn = noise_function_from_string(
          synth.value("noise_fn", std::string("affine_norm")));
      spec.noise_base = synth.value("noise_base", 0.1);
      spec.noise_slope = synth.value("noise_slope", 0.15);
      spec.groups = synth.value("groups", std::uint64_t{1});
      spec.cluster_radius = synth.value("cluster_radius", 2.5);
      spec.cluster_spread = synth.value("cluster_spread", 0.6);
      spec.seed = c.seed;
      c.synthetic = spec;
    }

    const json split_j = object_or_empty(j, "split");
    check_keys(split_j, "split", {"strategy", "fractions"});
    c.split.strategy =
        split_strategy_from_string(split_j.value("strategy", std::string("random")));
    if (split_j.contains("fractions")) {
      const json f = split_j.at("fractions");
      if (!f.is_array() || f.size() != 3)
        throw ConfigError("split.fractions must be an array of 3 numbers");
      c.split.train_fraction = f[0].get<double>();
      c.split.val_fraction = f[1].get<double>();
      c.split.test_fraction = f[2].get<double>();
    }
    c.split.seed = derive_seed(c.seed, kSplitStream);

    const json model = object_or_empty(j, "model");
    check_keys(model, "model", {"hidden_dims", "dropout_rate"});
    if (model.contains("hidden_dims")) {
      c.model.hidden_dims.clear();
      for (const auto& d : model.at("hidden_dims"))
        c.model.hidden_dims.push_back(d.get<std::size_t>());
    }
    c.model.dropout_rate = model.value("dropout_rate", 0.0);

    const json train = object_or_empty(j, "train");
    check_keys(train, "train",
               {"learning_rate", "momentum", "max_epochs", "patience", "weight_decay",
                "anchored", "anchor_prior_std", "batch_size"});
    TrainConfig& t = c.ensemble.train;
    t.learning_rate = train.value("learning_rate", 0.05);
    t.momentum = train.value("momentum", 0.9);
    t.max_epochs = train.value("max_epochs", 200);
    t.patience = train.value("patience", 20);
    t.weight_decay = train.value("weight_decay", 0.0);
    t.anchored = train.value("anchored", false);
    t.anchor_prior_std = train.value("anchor_prior_std", 1.0);
    t.batch_size = train.value("batch_size", 32);
    t.seed = c.seed;

    const json ens = object_or_empty(j, "ensemble");
    check_keys(ens, "ensemble", {"method", "members", "member_seeds", "sample_variance"});
    c.ensemble.method = method_from_string(ens.value("method", std::string("ensemble")));
    c.ensemble.members = ens.value("members", 15);
    c.ensemble.sample_variance = ens.value("sample_variance", false);
    if (ens.contains("member_seeds")) {
      for (const auto& s : ens.at("member_seeds"))
        c.ensemble.member_seeds.push_back(s.get<std::uint64_t>());
    }

    const json ranking = object_or_empty(j, "ranking");
    check_keys(ranking, "ranking", {"quantiles", "error_metric"});
    c.ranking.quantiles = ranking.value("quantiles", 100);
    c.ranking.metric =
        error_metric_from_string(ranking.value("error_metric", std::string("mae")));

    const json cal = object_or_empty(j, "calibration");
    check_keys(cal, "calibration", {"confidence_levels", "error_bins"});
    c.confidence_levels = cal.value("confidence_levels", 100);
    c.error_bins = cal.value("error_bins", 10);

    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["jobs"] = jobs;
  j["dataset"] = {{"path", dataset_path},
                  {"target", schema.target_column},
                  {"group", schema.group_column}};
  if (synthetic.has_value()) {
    const SyntheticSpec& s = *synthetic;
    j["synthetic"] = {{"samples", s.samples},
                      {"dim", s.dim},
                      {"mean_fn", to_string(s.mean_fn)},
                      {"noise_fn", to_string(s.noise_fn)},
                      {"noise_base", s.noise_base},
                      {"noise_slope", s.noise_slope},
                      {"groups", s.groups},
                      {"cluster_radius", s.cluster_radius},
                      {"cluster_spread", s.cluster_spread}};
  }
  j["split"] = {{"strategy", to_string(split.strategy)},
                {"fractions",
                 json::array({split.train_fraction, split.val_fraction, split.test_fraction})}};
  j["model"] = {{"hidden_dims", model.hidden_dims},
                {"dropout_rate", model.dropout_rate}};
  const TrainConfig& t = ensemble.train;
  j["train"] = {{"learning_rate", t.learning_rate},
                {"momentum", t.momentum},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"weight_decay", t.weight_decay},
                {"anchored", t.anchored},
                {"anchor_prior_std", t.anchor_prior_std},
                {"batch_size", t.batch_size}};
  j["ensemble"] = {{"method", to_string(ensemble.method)},
                   {"members", ensemble.members},
                   {"sample_variance", ensemble.sample_variance}};
  if (!ensemble.member_seeds.empty())
    j["ensemble"]["member_seeds"] = ensemble.member_seeds;
  j["ranking"] = {{"quantiles", ranking.quantiles},
                  {"error_metric", to_string(ranking.metric)}};
  j["calibration"] = {{"confidence_levels", confidence_levels},
                      {"error_bins", error_bins}};
  return j;
}

std::string RunConfig::config_hash() const { return fnv1a_hex(to_json().dump()); }

std::string RunConfig::lineage_hash() const {
  json j = to_json();
  j.erase("split");
  j.erase("out_dir");
  j.erase("jobs");
  return fnv1a_hex(j.dump());
}

namespace {

EnsembleConfig resolved_ensemble(const RunConfig& c) {
  EnsembleConfig e = c.ensemble;
  e.train.seed = c.seed;
  e.resolve_seeds();
  return e;
}

}  // namespace

void RunConfig::validate() const {
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  split.validate();
  resolved_ensemble(*this).validate(model);
  ranking.validate();
  if (confidence_levels < 2) throw ConfigError("confidence_levels must be >= 2");
  if (error_bins < 2) throw ConfigError("error_bins must be >= 2");
}

RunConfig apply_overrides(RunConfig config, const RunOverrides& overrides) {
  if (overrides.seed.has_value()) {
    config.seed = *overrides.seed;
    config.split.seed = derive_seed(config.seed, kSplitStream);
    config.ensemble.train.seed = config.seed;
    if (config.synthetic.has_value()) config.synthetic->seed = config.seed;
  }
  if (overrides.split.has_value()) config.split.strategy = *overrides.split;
  if (overrides.jobs.has_value()) config.jobs = *overrides.jobs;
  if (overrides.out_dir.has_value()) config.out_dir = *overrides.out_dir;
  return config;
}

namespace {

json cell_json(const MetricCell& cell) {
  json j;
  j["value"] = cell.has_value ? json(cell.value) : json(nullptr);
  j["flag"] = cell.flag;
  return j;
}

MetricCell cell_from_json(const json& j) {
  MetricCell cell;
  cell.flag = j.at("flag").get<std::string>();
  if (j.at("value").is_null()) {
    cell.has_value = false;
    cell.value = 0.0;
  } else {
    cell.has_value = true;
    cell.value = j.at("value").get<double>();
  }
  return cell;
}

json selector_json(const SelectorMetrics& m) {
  json j;
  j["auco"] = cell_json(m.auco);
  j["error_drop"] = cell_json(m.error_drop);
  j["decrease_ratio"] = cell_json(m.decrease_ratio);
  j["auce"] = cell_json(m.auce);
  j["mce"] = cell_json(m.mce);
  j["ence"] = cell_json(m.ence);
  j["cv"] = cell_json(m.cv);
  return j;
}

SelectorMetrics selector_from_json(const json& j, const json& extras,
                                   const std::string& name) {
  SelectorMetrics m;
  m.auco = cell_from_json(j.at("auco"));
  m.error_drop = cell_from_json(j.at("error_drop"));
  m.decrease_ratio = cell_from_json(j.at("decrease_ratio"));
  m.auce = cell_from_json(j.at("auce"));
  m.mce = cell_from_json(j.at("mce"));
  m.ence = cell_from_json(j.at("ence"));
  m.cv = cell_from_json(j.at("cv"));
  m.ece = extras.at("ece").at(name).get<double>();
  m.coverage_p90 = extras.at("coverage_p90").at(name).get<double>();
  return m;
}

}  // namespace

json MetricsSummary::to_json() const {
  json j;
  j["format"] = kSummaryFormat;
  j["method"] = method;
  j["domain"] = domain;
  j["config_hash"] = config_hash;
  j["lineage_hash"] = lineage_hash;
  j["n_test"] = n_test;
  j["mae"] = mae;
  j["columns"] = {{"epistemic", selector_json(epistemic)},
                  {"aleatoric", selector_json(aleatoric)},
                  {"total", selector_json(total)}};
  j["extras"] = {
      {"rmse", rmse},
      {"ece",
       {{"epistemic", epistemic.ece}, {"aleatoric", aleatoric.ece}, {"total", total.ece}}},
      {"coverage_p90",
       {{"epistemic", epistemic.coverage_p90},
        {"aleatoric", aleatoric.coverage_p90},
        {"total", total.coverage_p90}}}};
  return j;
}

MetricsSummary MetricsSummary::from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != kSummaryFormat)
      throw DataError("summary has format '" + j.value("format", std::string()) +
                      "', expected UQEVAL-SUMMARY-v1");
    MetricsSummary s;
    s.method = j.at("method").get<std::string>();
    s.domain = j.at("domain").get<std::string>();
    s.config_hash = j.at("config_hash").get<std::string>();
    s.lineage_hash = j.at("lineage_hash").get<std::string>();
    s.n_test = j.at("n_test").get<std::size_t>();
    s.mae = j.at("mae").get<double>();
    const json& extras = j.at("extras");
    s.rmse = extras.at("rmse").get<double>();
    s.epistemic = selector_from_json(j.at("columns").at("epistemic"), extras, "epistemic");
    s.aleatoric = selector_from_json(j.at("columns").at("aleatoric"), extras, "aleatoric");
    s.total = selector_from_json(j.at("columns").at("total"), extras, "total");
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed summary: ") + e.what());
  }
}

namespace {

std::string format_cell(const MetricCell& cell) {
  char buf[48];
  if (!cell.has_value) {
    std::snprintf(buf, sizeof(buf), "%12s", cell.flag == "infinite" ? "inf" : "n/a*");
    return buf;
  }
  if (cell.flag != "ok") {
    std::snprintf(buf, sizeof(buf), "%11.6g*", cell.value);
    return buf;
  }
  std::snprintf(buf, sizeof(buf), "%12.6g", cell.value);
  return buf;
}

}  // namespace

std::string MetricsSummary::text_table() const {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%s  method=%s  domain=%s  n_test=%zu\n",
                kSummaryFormat, method.c_str(), domain.c_str(), n_test);
  out += line;
  std::snprintf(line, sizeof(line), "MAE=%.6g  RMSE=%.6g\n\n", mae, rmse);
  out += line;
  std::snprintf(line, sizeof(line), "%-12s %12s %12s %12s\n", "index", "epistemic",
                "aleatoric", "total");
  out += line;
  const struct {
    const char* name;
    const MetricCell* cells[3];
  } rows[] = {
      {"AUCO", {&epistemic.auco, &aleatoric.auco, &total.auco}},
      {"Error Drop", {&epistemic.error_drop, &aleatoric.error_drop, &total.error_drop}},
      {"Decr. Ratio",
       {&epistemic.decrease_ratio, &aleatoric.decrease_ratio, &total.decrease_ratio}},
      {"AUCE", {&epistemic.auce, &aleatoric.auce, &total.auce}},
      {"MCE", {&epistemic.mce, &aleatoric.mce, &total.mce}},
      {"ENCE", {&epistemic.ence, &aleatoric.ence, &total.ence}},
      {"c_v", {&epistemic.cv, &aleatoric.cv, &total.cv}},
  };
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "%-12s %s %s %s\n", row.name,
                  format_cell(*row.cells[0]).c_str(), format_cell(*row.cells[1]).c_str(),
                  format_cell(*row.cells[2]).c_str());
    out += line;
  }
  out += "\n* = degenerate uncertainty (flagged)\n";
  return out;
}

namespace {

struct SelectorInputs {
  std::string name;
  const std::vector<double>* variance;
};

SelectorMetrics compute_selector(const std::vector<double>& abs_errors,
                                 const std::vector<double>& variance,
                                 std::span<const double> mean,
                                 std::span<const double> targets,
                                 const ConfidenceCurve& oracle, const RunConfig& config) {
  SelectorMetrics m;
  const ConfidenceCurve curve = confidence_curve(abs_errors, variance, config.ranking);
  m.auco = MetricCell::ok(auco(curve, oracle));
  const ErrorDropResult drop = error_drop(curve);
  m.error_drop = drop.infinite ? MetricCell::infinite() : MetricCell::ok(drop.value);
  m.decrease_ratio = MetricCell::ok(decrease_ratio(curve));

  const bool degenerate_var =
      std::any_of(variance.begin(), variance.end(), [](double v) { return v <= 0.0; });
  const CoverageCurve coverage =
      coverage_curve(mean, variance, targets,
                     CalibrationConfig::confidence(config.confidence_levels),
                     degenerate_var);
  const CalibrationScores scores = auce_mce(coverage);
  m.auce = degenerate_var ? MetricCell::degenerate(scores.auce) : MetricCell::ok(scores.auce);
  m.mce = degenerate_var ? MetricCell::degenerate(scores.mce) : MetricCell::ok(scores.mce);
  m.ece = scores.ece;
  m.coverage_p90 = coverage_at_level(mean, variance, targets, 0.9, degenerate_var);

  try {
    const ErrorCalibrationResult ec = error_calibration(
        mean, variance, targets, CalibrationConfig::error(config.error_bins));
    m.ence = degenerate_var ? MetricCell::degenerate(ec.ence) : MetricCell::ok(ec.ence);
  } catch (const DegenerateError&) {
    m.ence = MetricCell::degenerate_empty();
  }

  try {
    std::vector<double> stddev(variance.size());
    for (std::size_t i = 0; i < variance.size(); ++i) stddev[i] = std::sqrt(variance[i]);
    m.cv = MetricCell::ok(dispersion(stddev));
    if (degenerate_var) m.cv.flag = "degenerate";
  } catch (const DegenerateError&) {
    m.cv = MetricCell::degenerate(0.0);
  }
  return m;
}

}  // namespace

MetricsSummary compute_summary(const UQPredictions& predictions,
                               std::span<const double> targets,
                               const RunConfig& config, const std::string& method,
                               const std::string& domain) {
  const std::size_t n = predictions.size();
  if (targets.size() != n)
    throw InputError("predictions and targets must have the same length");
  if (n < 2) throw InputError("summary requires at least 2 predictions");

  std::vector<double> abs_errors(n);
  double mae_acc = 0.0, mse_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = targets[i] - predictions.mean[i];
    abs_errors[i] = std::abs(r);
    mae_acc += abs_errors[i];
    mse_acc += r * r;
  }

  MetricsSummary summary;
  summary.method = method;
  summary.domain = domain;
  summary.config_hash = config.config_hash();
  summary.lineage_hash = config.lineage_hash();
  summary.n_test = n;
  summary.mae = mae_acc / static_cast<double>(n);
  summary.rmse = std::sqrt(mse_acc / static_cast<double>(n));

  const ConfidenceCurve oracle = oracle_curve(abs_errors, config.ranking);
  summary.epistemic = compute_selector(abs_errors, predictions.epi, predictions.mean,
                                       targets, oracle, config);
  summary.aleatoric = compute_selector(abs_errors, predictions.ale, predictions.mean,
                                       targets, oracle, config);
  summary.total = compute_selector(abs_errors, predictions.total, predictions.mean,
                                   targets, oracle, config);
  return summary;
}

namespace {

std::string member_checkpoint_name(std::size_t index) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "members/member_%03zu.uqm", index);
  return buf;
}

json split_to_json(const SplitIndices& idx) {
  json j;
  j["format"] = kSplitFormat;
  j["train"] = idx.train;
  j["val"] = idx.val;
  j["test"] = idx.test;
  return j;
}

SplitIndices split_from_json(const json& j) {
  if (j.value("format", std::string()) != kSplitFormat)
    throw DataError("split file has an unexpected format tag");
  SplitIndices idx;
  idx.train = j.at("train").get<std::vector<std::size_t>>();
  idx.val = j.at("val").get<std::vector<std::size_t>>();
  idx.test = j.at("test").get<std::vector<std::size_t>>();
  return idx;
}

json load_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::string predictions_csv(const std::vector<std::size_t>& indices,
                            std::span<const double> targets, const UQPredictions& pred) {
  std::string out = "index,y_true,y_pred,var_ale,var_epi,var_total\n";
  char line[192];
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", indices[i],
                  targets[i], pred.mean[i], pred.ale[i], pred.epi[i], pred.total[i]);
    out += line;
  }
  return out;
}

}  // namespace

void run_train(const RunConfig& config, const Dataset& dataset) {
  config.validate();
  const SplitIndices indices = split(dataset, config.split);
  const EnsembleConfig ens = resolved_ensemble(config);
  const std::vector<TrainedMember> members =
      train_members(dataset, indices, config.model, ens, config.jobs);

  const fs::path out(config.out_dir);
  atomic_write_file((out / "split.json").string(), split_to_json(indices).dump(2) + "\n");

  json manifest;
  manifest["format"] = kManifestFormat;
  manifest["method"] = to_string(ens.method);
  manifest["members"] = ens.members;
  manifest["model_count"] = members.size();
  manifest["seeds"] = ens.member_seeds;
  manifest["sample_variance"] = ens.sample_variance;
  manifest["config_hash"] = config.config_hash();
  json checkpoints = json::array();
  json stats = json::array();
  for (std::size_t m = 0; m < members.size(); ++m) {
    const std::string rel = member_checkpoint_name(m);
    save_model(members[m].model, (out / rel).string());
    checkpoints.push_back(rel);
    stats.push_back({{"seed", members[m].seed},
                     {"epochs", members[m].history.epochs.size()},
                     {"best_epoch", members[m].history.best_epoch},
                     {"best_val_nll", members[m].history.best_val_nll}});
  }
  manifest["checkpoints"] = checkpoints;
  manifest["member_stats"] = stats;
  atomic_write_file((out / "manifest.json").string(), manifest.dump(2) + "\n");
  atomic_write_file((out / "resolved_config.json").string(),
                    config.to_json().dump(2) + "\n");
}

EvaluateArtifacts run_evaluate(const RunConfig& config, const Dataset& dataset) {
  return run_evaluate_with_options(config, dataset, "all", config.out_dir + "/eval");
}

EvaluateArtifacts run_evaluate_with_options(const RunConfig& config,
                                            const Dataset& dataset,
                                            const std::string& uncertainty,
                                            const std::string& eval_dir) {
  config.validate();
  const fs::path out(config.out_dir);

  const json manifest = load_json_file((out / "manifest.json").string());
  if (manifest.value("format", std::string()) != kManifestFormat)
    throw DataError("manifest format '" + manifest.value("format", std::string()) +
                    "' does not match " + kManifestFormat);
  if (manifest.value("config_hash", std::string()) != config.config_hash())
    throw ConfigError("manifest was produced by a different config (hash mismatch)");

  const SplitIndices indices = split_from_json(load_json_file((out / "split.json").string()));
  for (std::size_t i : indices.test)
    if (i >= dataset.size()) throw DataError("split indices exceed the dataset size");

  Ensemble ensemble;
  ensemble.method = method_from_string(manifest.at("method").get<std::string>());
  ensemble.mc_passes = manifest.at("members").get<int>();
  ensemble.sample_variance = manifest.value("sample_variance", false);
  for (const auto& rel : manifest.at("checkpoints"))
    ensemble.models.push_back(load_model((out / rel.get<std::string>()).string()));
  if (ensemble.models.empty()) throw DataError("manifest lists no checkpoints");

  const Matrix test_x = gather_feature_rows(dataset.features, indices.test);
  const std::vector<double> test_y = gather_values(dataset.targets, indices.test);

  const MemberOutputs outputs =
      predict_members(ensemble, test_x, derive_seed(config.seed, kMcStream));
  const UQPredictions predictions = aggregate(outputs, ensemble.sample_variance);

  const std::string domain =
      config.split.strategy == SplitStrategy::kGroup ? "out" : "in";
  MetricsSummary summary = compute_summary(predictions, test_y, config,
                                           to_string(ensemble.method), domain);

  const fs::path eval_path(eval_dir);
  atomic_write_file((eval_path / "summary.json").string(),
                    summary.to_json().dump(2) + "\n");
  atomic_write_file((eval_path / "summary.txt").string(), summary.text_table());
  atomic_write_file((eval_path / "predictions.csv").string(),
                    predictions_csv(indices.test, test_y, predictions));

  std::vector<double> abs_errors(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i)
    abs_errors[i] = std::abs(test_y[i] - predictions.mean[i]);
  const ConfidenceCurve oracle = oracle_curve(abs_errors, config.ranking);

  const struct {
    const char* token;
    const char* name;
    const std::vector<double>* variance;
  } selectors[] = {{"epi", "epistemic", &predictions.epi},
                   {"ale", "aleatoric", &predictions.ale},
                   {"total", "total", &predictions.total}};
  for (const auto& sel : selectors) {
    if (uncertainty != "all" && uncertainty != sel.token) continue;
    const std::vector<double>& var = *sel.variance;
    const bool degenerate =
        std::any_of(var.begin(), var.end(), [](double v) { return v <= 0.0; });
    const ConfidenceCurve curve = confidence_curve(abs_errors, var, config.ranking);
    atomic_write_file((eval_path / ("confidence_" + std::string(sel.name) + ".csv")).string(),
                      curve_csv(curve, oracle));
    const CoverageCurve cov = coverage_curve(
        predictions.mean, var, test_y,
        CalibrationConfig::confidence(config.confidence_levels), degenerate);
    atomic_write_file((eval_path / ("coverage_" + std::string(sel.name) + ".csv")).string(),
                      coverage_csv(cov));
    try {
      const ErrorCalibrationResult ec = error_calibration(
          predictions.mean, var, test_y, CalibrationConfig::error(config.error_bins));
      atomic_write_file(
          (eval_path / ("error_calibration_" + std::string(sel.name) + ".csv")).string(),
          error_calibration_csv(ec.bins));
    } catch (const DegenerateError&) {
      // No export for a selector whose variance cannot populate bins.
    }
  }

  return {std::move(summary), eval_path.string()};
}

void cmd_synth(const std::string& config_path, const RunOverrides& overrides) {
  RunConfig config = apply_overrides(RunConfig::load(config_path), overrides);
  if (!config.synthetic.has_value())
    throw ConfigError("synth requires a 'synthetic' block in the config");
  config.synthetic->validate();

  SyntheticData data = generate_synthetic(*config.synthetic);
  data.dataset.target_name = config.schema.target_column;
  if (data.dataset.has_groups() && !config.schema.group_column.empty())
    data.dataset.group_name = config.schema.group_column;

  std::string path = config.dataset_path;
  if (path.empty()) path = (fs::path(config.out_dir) / "dataset.csv").string();
  if (fs::path(path).has_parent_path()) {
    std::error_code ec;
    fs::create_directories(fs::path(path).parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  write_csv(tmp, data.dataset);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move '" + tmp + "' to '" + path + "'");

  std::string truth = "index,true_sigma\n";
  char line[64];
  for (std::size_t i = 0; i < data.true_noise.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, data.true_noise[i]);
    truth += line;
  }
  fs::path truth_path(path);
  truth_path.replace_extension();
  atomic_write_file(truth_path.string() + "_truth.csv", truth);
}

void cmd_train(const std::string& config_path, const RunOverrides& overrides) {
  const RunConfig config = apply_overrides(RunConfig::load(config_path), overrides);
  if (config.dataset_path.empty())
    throw ConfigError("train requires dataset.path in the config");
  const Dataset dataset = load_csv(config.dataset_path, config.schema);
  run_train(config, dataset);
}

EvaluateArtifacts cmd_evaluate(const std::string& config_path,
                               const RunOverrides& overrides) {
  RunOverrides without_out = overrides;
  without_out.out_dir.reset();  // --out relocates eval artifacts, not the run
  const RunConfig config = apply_overrides(RunConfig::load(config_path), without_out);
  if (config.dataset_path.empty())
    throw ConfigError("evaluate requires dataset.path in the config");
  const Dataset dataset = load_csv(config.dataset_path, config.schema);
  const std::string uncertainty = overrides.uncertainty.value_or("all");
  if (uncertainty != "all" && uncertainty != "ale" && uncertainty != "epi" &&
      uncertainty != "total")
    throw ConfigError("--uncertainty must be one of ale|epi|total|all");
  const std::string eval_dir =
      overrides.out_dir.value_or((fs::path(config.out_dir) / "eval").string());
  return run_evaluate_with_options(config, dataset, uncertainty, eval_dir);
}

namespace {

json ratio_cell(const MetricCell& in_cell, const MetricCell& out_cell) {
  json j;
  if (in_cell.flag == "ok" && out_cell.flag == "ok" && in_cell.has_value &&
      out_cell.has_value && in_cell.value != 0.0) {
    j["value"] = out_cell.value / in_cell.value;
    j["flag"] = "ok";
  } else {
    j["value"] = nullptr;
    j["flag"] = "undefined";
  }
  return j;
}

json selector_ratios(const SelectorMetrics& in_m, const SelectorMetrics& out_m) {
  json j;
  j["auco"] = ratio_cell(in_m.auco, out_m.auco);
  j["error_drop"] = ratio_cell(in_m.error_drop, out_m.error_drop);
  j["decrease_ratio"] = ratio_cell(in_m.decrease_ratio, out_m.decrease_ratio);
  j["auce"] = ratio_cell(in_m.auce, out_m.auce);
  j["mce"] = ratio_cell(in_m.mce, out_m.mce);
  j["ence"] = ratio_cell(in_m.ence, out_m.ence);
  j["cv"] = ratio_cell(in_m.cv, out_m.cv);
  return j;
}

}  // namespace

json cmd_compare(const std::string& in_summary_path, const std::string& out_summary_path,
                 const std::string& out_dir) {
  const MetricsSummary in_s = MetricsSummary::from_json(load_json_file(in_summary_path));
  const MetricsSummary out_s = MetricsSummary::from_json(load_json_file(out_summary_path));
  if (in_s.method != out_s.method)
    throw ConfigError("compare: summaries come from different methods ('" + in_s.method +
                      "' vs '" + out_s.method + "')");
  if (in_s.lineage_hash != out_s.lineage_hash)
    throw ConfigError("compare: summaries come from different config lineages");

  json report;
  report["format"] = kCompareFormat;
  report["method"] = in_s.method;
  report["lineage_hash"] = in_s.lineage_hash;
  report["in"] = {{"domain", in_s.domain}, {"mae", in_s.mae}, {"n_test", in_s.n_test}};
  report["out"] = {{"domain", out_s.domain}, {"mae", out_s.mae}, {"n_test", out_s.n_test}};
  if (in_s.mae != 0.0) {
    report["error_generalization_ratio"] = out_s.mae / in_s.mae;
  } else {
    report["error_generalization_ratio"] = nullptr;
  }
  report["ratios"] = {{"epistemic", selector_ratios(in_s.epistemic, out_s.epistemic)},
                      {"aleatoric", selector_ratios(in_s.aleatoric, out_s.aleatoric)},
                      {"total", selector_ratios(in_s.total, out_s.total)}};
  report["coverage_p90"] = {
      {"in",
       {{"epistemic", in_s.epistemic.coverage_p90},
        {"aleatoric", in_s.aleatoric.coverage_p90},
        {"total", in_s.total.coverage_p90}}},
      {"out",
       {{"epistemic", out_s.epistemic.coverage_p90},
        {"aleatoric", out_s.aleatoric.coverage_p90},
        {"total", out_s.total.coverage_p90}}},
      {"delta",
       {{"epistemic", out_s.epistemic.coverage_p90 - in_s.epistemic.coverage_p90},
        {"aleatoric", out_s.aleatoric.coverage_p90 - in_s.aleatoric.coverage_p90},
        {"total", out_s.total.coverage_p90 - in_s.total.coverage_p90}}}};

  const fs::path out(out_dir);
  atomic_write_file((out / "compare.json").string(), report.dump(2) + "\n");

  char line[256];
  std::string text;
  std::snprintf(line, sizeof(line), "%s  method=%s\n", kCompareFormat, in_s.method.c_str());
  text += line;
  std::snprintf(line, sizeof(line), "MAE in=%.6g out=%.6g  out/in=%.6g\n", in_s.mae,
                out_s.mae, in_s.mae != 0.0 ? out_s.mae / in_s.mae : 0.0);
  text += line;
  std::snprintf(line, sizeof(line), "coverage@0.90 (total): in=%.4f out=%.4f delta=%+.4f\n",
                in_s.total.coverage_p90, out_s.total.coverage_p90,
                out_s.total.coverage_p90 - in_s.total.coverage_p90);
  text += line;
  atomic_write_file((out / "compare.txt").string(), text);
  return report;
}

}  // namespace uqeval
