#include "core/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "core/errors.hpp"

namespace uqeval {

const char* to_string(Method m) {
  switch (m) {
    case Method::kMcDropout: return "mc_dropout";
    case Method::kEnsemble: return "ensemble";
    case Method::kBootstrap: return "bootstrap";
  }
  return "ensemble";
}

Method method_from_string(const std::string& name) {
  if (name == "mc_dropout") return Method::kMcDropout;
  if (name == "ensemble") return Method::kEnsemble;
  if (name == "bootstrap") return Method::kBootstrap;
  throw ConfigError("unknown method '" + name + "'");
}

std::vector<std::size_t> ModelConfig::layer_dims(std::size_t input_dim) const {
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(2);
  return dims;
}

void ModelConfig::validate() const {
  for (std::size_t d : hidden_dims)
    if (d == 0) throw ConfigError("hidden_dims entries must be positive");
  if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0)
    throw ConfigError("dropout_rate must lie in [0, 1)");
}

void EnsembleConfig::resolve_seeds() {
  if (member_seeds.empty()) {
    member_seeds.resize(static_cast<std::size_t>(std::max(members, 0)));
    for (std::size_t i = 0; i < member_seeds.size(); ++i)
      member_seeds[i] = derive_seed(train.seed, i);
  }
}

void EnsembleConfig::validate(const ModelConfig& model) const {
  model.validate();
  train.validate();
  if (members < 2)
    throw ConfigError("members must be >= 2 (a single sample has no variance)");
  if (member_seeds.size() != static_cast<std::size_t>(members))
    throw ConfigError("member_seeds must hold exactly " + std::to_string(members) +
                      " entries");
  std::set<std::uint64_t> distinct(member_seeds.begin(), member_seeds.end());
  if (distinct.size() != member_seeds.size())
    throw ConfigError("member_seeds must be pairwise distinct");
  if (method == Method::kMcDropout && !(model.dropout_rate > 0.0))
    throw ConfigError("mc_dropout requires dropout_rate > 0 "
                      "(epistemic variance degenerates to zero otherwise)");
}

UQPredictions aggregate(const MemberOutputs& outputs, bool sample_variance) {
  const std::size_t m = outputs.means.rows;
  const std::size_t n = outputs.means.cols;
  if (m < 2) throw ConfigError("aggregation requires at least 2 members");
  if (outputs.ale_vars.rows != m || outputs.ale_vars.cols != n)
    throw InputError("means and ale_vars must have identical shape");
  for (double v : outputs.ale_vars.data)
    if (!(v > 0.0)) throw InputError("aleatoric variances must be strictly positive");

  UQPredictions out;
  out.mean.resize(n);
  out.ale.resize(n);
  out.epi.resize(n);
  out.total.resize(n);

  const double denom = sample_variance ? static_cast<double>(m - 1)
                                       : static_cast<double>(m);
  std::vector<double> column(m);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) column[i] = outputs.means.at(i, j);
    // Canonical (sorted) summation order: permutation-invariant to the last
    // bit, and identical members give a shift of exactly zero.
    std::sort(column.begin(), column.end());
    const double shift = column[0];
    double acc = 0.0;
    for (double v : column) acc += v - shift;
    const double mean = shift + acc / static_cast<double>(m);
    double var_acc = 0.0;
    for (double v : column) {
      const double d = v - mean;
      var_acc += d * d;
    }
    out.mean[j] = mean;
    out.epi[j] = var_acc / denom;

    for (std::size_t i = 0; i < m; ++i) column[i] = outputs.ale_vars.at(i, j);
    std::sort(column.begin(), column.end());
    double ale_acc = 0.0;
    for (double v : column) ale_acc += v;
    out.ale[j] = ale_acc / static_cast<double>(m);
    out.total[j] = out.ale[j] + out.epi[j];
  }
  return out;
}

MemberOutputs mc_dropout_predict(const HeteroModel& model, const Matrix& inputs,
                                 int passes, std::uint64_t seed) {
  if (!(model.dropout_rate() > 0.0))
    throw ConfigError("mc_dropout_predict requires a model with dropout_rate > 0");
  if (passes < 2) throw ConfigError("mc_dropout_predict requires at least 2 passes");
  if (inputs.cols != model.input_dim())
    throw InputError("input dimension does not match the model");

  const std::size_t n = inputs.rows;
  MemberOutputs out;
  out.means = Matrix(static_cast<std::size_t>(passes), n);
  out.ale_vars = Matrix(static_cast<std::size_t>(passes), n);

  Rng rng(seed);
  for (int pass = 0; pass < passes; ++pass) {
    const DropoutMask mask = model.draw_mask(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const MeanLogVar pred = model.forward(inputs.row(i), &mask);
      out.means.at(static_cast<std::size_t>(pass), i) = pred.mean;
      out.ale_vars.at(static_cast<std::size_t>(pass), i) = std::exp(pred.log_var);
    }
  }
  return out;
}

MemberOutputs predict_deterministic(const std::vector<HeteroModel>& models,
                                    const Matrix& inputs) {
  if (models.empty()) throw InputError("no models to predict with");
  MemberOutputs out;
  out.means = Matrix(models.size(), inputs.rows);
  out.ale_vars = Matrix(models.size(), inputs.rows);
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (inputs.cols != models[m].input_dim())
      throw InputError("input dimension does not match member " + std::to_string(m));
    for (std::size_t i = 0; i < inputs.rows; ++i) {
      const MeanLogVar pred = models[m].forward(inputs.row(i));
      out.means.at(m, i) = pred.mean;
      out.ale_vars.at(m, i) = std::exp(pred.log_var);
    }
  }
  return out;
}

Matrix gather_feature_rows(const Matrix& features, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), features.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> gather_values(const std::vector<double>& values,
                                  const std::vector<std::size_t>& rows) {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = values[rows[i]];
  return out;
}

namespace {

TrainedMember train_one_member(const Matrix& train_x, const std::vector<double>& train_y,
                               const Matrix& val_x, const std::vector<double>& val_y,
                               const ModelConfig& model_config,
                               const EnsembleConfig& config, std::size_t member) {
  TrainedMember out;
  out.seed = config.member_seeds[member];
  Rng rng(out.seed);

  TrainConfig train_config = config.train;
  train_config.seed = out.seed;

  out.model = HeteroModel(model_config.layer_dims(train_x.cols),
                          model_config.dropout_rate);

  if (config.method == Method::kBootstrap) {
    // Resample indices first, then train from the same generator: the whole
    // member stream flows from one seed.
    out.bootstrap_sample = bootstrap_indices(train_x.rows, rng);
    std::vector<std::size_t> rows = out.bootstrap_sample;
    Matrix boot_x(rows.size(), train_x.cols);
    std::vector<double> boot_y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto src = train_x.row(rows[i]);
      std::copy(src.begin(), src.end(), boot_x.row(i).begin());
      boot_y[i] = train_y[rows[i]];
    }
    out.history = train(out.model, boot_x, boot_y, val_x, val_y, train_config, rng);
  } else {
    out.history = train(out.model, train_x, train_y, val_x, val_y, train_config, rng);
  }
  return out;
}

}  // namespace

std::vector<TrainedMember> train_members(const Dataset& dataset,
                                         const SplitIndices& indices,
                                         const ModelConfig& model_config,
                                         const EnsembleConfig& config, int jobs) {
  config.validate(model_config);
  if (indices.train.empty() || indices.val.empty())
    throw InputError("train and validation splits must be non-empty");

  const Matrix train_x = gather_feature_rows(dataset.features, indices.train);
  const std::vector<double> train_y = gather_values(dataset.targets, indices.train);
  const Matrix val_x = gather_feature_rows(dataset.features, indices.val);
  const std::vector<double> val_y = gather_values(dataset.targets, indices.val);

  const std::size_t count =
      config.method == Method::kMcDropout ? 1 : static_cast<std::size_t>(config.members);

  std::vector<TrainedMember> members(count);
  std::vector<std::string> failures(count);
  std::vector<int> failure_epochs(count, -1);

  auto run_member = [&](std::size_t m) {
    try {
      members[m] = train_one_member(train_x, train_y, val_x, val_y, model_config,
                                    config, m);
    } catch (const DivergenceError& e) {
      failures[m] = e.what();
      failure_epochs[m] = e.epoch();
    }
  };

  const int worker_count = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  if (worker_count == 1) {
    for (std::size_t m = 0; m < count; ++m) run_member(m);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(worker_count));
    for (int t = 0; t < worker_count; ++t)
      workers.emplace_back([&] {
        for (std::size_t m = next.fetch_add(1); m < count; m = next.fetch_add(1))
          run_member(m);
      });
    for (auto& w : workers) w.join();
  }

  for (std::size_t m = 0; m < count; ++m)
    if (!failures[m].empty())
      throw DivergenceError("member " + std::to_string(m) + ": " + failures[m],
                            failure_epochs[m], static_cast<int>(m));
  return members;
}

MemberOutputs predict_members(const Ensemble& ensemble, const Matrix& inputs,
                              std::uint64_t mc_seed) {
  if (ensemble.method == Method::kMcDropout) {
    if (ensemble.models.size() != 1)
      throw InputError("mc_dropout ensembles hold exactly one model");
    return mc_dropout_predict(ensemble.models[0], inputs, ensemble.mc_passes, mc_seed);
  }
  return predict_deterministic(ensemble.models, inputs);
}

}  // namespace uqeval
