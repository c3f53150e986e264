#ifndef UQEVAL_CORE_ESTIMATORS_HPP_
#define UQEVAL_CORE_ESTIMATORS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"

namespace uqeval {

enum class Method { kMcDropout, kEnsemble, kBootstrap };

const char* to_string(Method m);
Method method_from_string(const std::string& name);

struct ModelConfig {
  std::vector<std::size_t> hidden_dims = {64, 64};
  double dropout_rate = 0.0;

  std::vector<std::size_t> layer_dims(std::size_t input_dim) const;
  void validate() const;
};

struct EnsembleConfig {
  Method method = Method::kEnsemble;
  int members = 15;                          // M: models, or MC forward passes
  TrainConfig train;
  std::vector<std::uint64_t> member_seeds;   // auto-derived from train.seed when empty
  bool sample_variance = false;              // divide by M-1 instead of M

  // Fills member_seeds when empty and enforces the invariants (M >= 2,
  // pairwise-distinct seeds, dropout for MC-Dropout).
  void resolve_seeds();
  void validate(const ModelConfig& model) const;
};

// Raw per-member outputs: row m holds member m's predicted means and
// recovered aleatoric variances exp(log_var) over the N inputs.
struct MemberOutputs {
  Matrix means;     // M x N
  Matrix ale_vars;  // M x N
};

struct UQPredictions {
  std::vector<double> mean;
  std::vector<double> ale;    // sigma_a^2
  std::vector<double> epi;    // sigma_e^2
  std::vector<double> total;  // sigma_t^2 = sigma_a^2 + sigma_e^2, stored as the sum

  std::size_t size() const { return mean.size(); }
};

// Column-wise aggregation of member outputs: mean of means, variance of
// means (population unless sample_variance), mean of aleatoric variances.
// Values within each column are summed in sorted order, so the result is
// exactly invariant under member permutations and exactly zero-variance for
// identical members.
UQPredictions aggregate(const MemberOutputs& outputs, bool sample_variance = false);

// M stochastic forward passes with an independently drawn mask per pass
// (the mask is shared across the whole input batch within one pass).
MemberOutputs mc_dropout_predict(const HeteroModel& model, const Matrix& inputs,
                                 int passes, std::uint64_t seed);

// Deterministic member predictions (no dropout) for ensemble/bootstrap.
MemberOutputs predict_deterministic(const std::vector<HeteroModel>& models,
                                    const Matrix& inputs);

struct TrainedMember {
  HeteroModel model;
  TrainHistory history;
  std::uint64_t seed = 0;
  std::vector<std::size_t> bootstrap_sample;  // empty unless method=bootstrap
};

// Trains the method's members over the given split. Ensemble members see
// the identical training set from different seeded initializations;
// bootstrap members each train on a with-replacement resample of it (the
// validation set is shared and never resampled); MC-Dropout trains the one
// model its passes will reuse. jobs > 1 trains members on that many
// threads; members are independent, so the results do not depend on the
// schedule.
std::vector<TrainedMember> train_members(const Dataset& dataset,
                                         const SplitIndices& indices,
                                         const ModelConfig& model_config,
                                         const EnsembleConfig& config,
                                         int jobs = 1);

// A trained estimator ready to predict.
struct Ensemble {
  Method method = Method::kEnsemble;
  int mc_passes = 0;  // M for MC-Dropout
  bool sample_variance = false;
  std::vector<HeteroModel> models;
};

// Dispatches to the method's sampler. mc_seed feeds MC-Dropout's masks and
// is ignored by the other methods.
MemberOutputs predict_members(const Ensemble& ensemble, const Matrix& inputs,
                              std::uint64_t mc_seed);

Matrix gather_feature_rows(const Matrix& features, const std::vector<std::size_t>& rows);
std::vector<double> gather_values(const std::vector<double>& values,
                                  const std::vector<std::size_t>& rows);

}  // namespace uqeval

#endif  // UQEVAL_CORE_ESTIMATORS_HPP_
