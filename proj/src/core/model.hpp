#ifndef UQEVAL_CORE_MODEL_HPP_
#define UQEVAL_CORE_MODEL_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/rng.hpp"

namespace uqeval {

// One fully connected layer, weights out x in row-major.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;

  Layer() = default;
  Layer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), w(in_dim * out_dim, 0.0), b(out_dim, 0.0) {}
};

struct MeanLogVar {
  double mean = 0.0;
  double log_var = 0.0;
};

// One scaled mask per hidden layer, entries in {0, 1/(1-p)}.
using DropoutMask = std::vector<std::vector<double>>;

// Per-layer gradient (or velocity) buffers, same shapes as the layers.
struct Gradients {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;
};

// Predicted log-variance is clamped to this band before exp() so the
// recovered variance can neither overflow nor collapse to zero early in
// training.
inline constexpr double kLogVarClamp = 15.0;

// Feed-forward regressor with a two-output head: predicted mean and
// predicted log-variance. Hidden activations are ReLU; dropout applies to
// every hidden activation (never to the input features).
class HeteroModel {
 public:
  HeteroModel() = default;
  // layer_dims runs input dim -> hidden dims -> 2.
  HeteroModel(std::vector<std::size_t> layer_dims, double dropout_rate);

  bool initialized() const { return initialized_; }
  // Marks externally written weights as authoritative so train() keeps them.
  void mark_initialized() { initialized_ = true; }

  // Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  void init_weights(Rng& rng);

  // Draws the anchor point theta_0 ~ N(0, prior_std^2), one value per
  // parameter. Immutable once drawn.
  void draw_anchor(double prior_std, Rng& rng);
  // Installs an explicit anchor (checkpoint loading); same immutability.
  void set_anchor(std::vector<Layer> anchor);
  bool has_anchor() const { return anchor_.has_value(); }
  const std::vector<Layer>& anchor() const;

  // Single-input forward pass. With no mask no dropout is applied; a mask
  // must carry one entry vector per hidden layer with the scaled keep
  // values. Deterministic given (weights, x, mask).
  MeanLogVar forward(std::span<const double> x, const DropoutMask* mask = nullptr) const;

  // Draws a fresh mask set (one per hidden layer, shared across whichever
  // batch the caller applies it to).
  DropoutMask draw_mask(Rng& rng) const;

  const std::vector<std::size_t>& layer_dims() const { return layer_dims_; }
  std::size_t input_dim() const { return layer_dims_.front(); }
  std::size_t hidden_count() const { return layer_dims_.size() - 2; }
  double dropout_rate() const { return dropout_rate_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

  Gradients zero_gradients() const;

 private:
  friend struct ForwardTrace;
  std::vector<std::size_t> layer_dims_;
  double dropout_rate_ = 0.0;
  std::vector<Layer> layers_;
  std::optional<std::vector<Layer>> anchor_;
  std::uint64_t seed_ = 0;
  bool initialized_ = false;

  void check_mask(const DropoutMask* mask) const;
};

// Intermediate activations of one forward pass; backward() consumes them
// and the dropout-expectation test inspects them.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;      // pre-activation per hidden layer
  std::vector<std::vector<double>> post;     // post-ReLU (and mask) per hidden layer
  double mean = 0.0;
  double raw_log_var = 0.0;                  // before clamping
  double log_var = 0.0;

  static ForwardTrace run(const HeteroModel& model, std::span<const double> x,
                          const DropoutMask* mask);
};

// Eq-style Gaussian negative log-likelihood of one sample:
// (1/(2 sigma^2)) (y - mu)^2 + (1/2) log sigma^2 with sigma^2 = exp(log_var).
double gaussian_nll_loss(double mean, double log_var, double target);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int max_epochs = 200;
  int patience = 20;
  double weight_decay = 0.0;   // lambda
  bool anchored = false;       // lambda pulls toward theta_0 instead of 0
  double anchor_prior_std = 1.0;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// Gradients of the batch objective
//   (1/B) sum_i nll_i + (lambda/B) * ||theta - theta_0||^2
// (theta_0 = 0 for plain weight decay, the model anchor when
// config.anchored). Returns the objective value alongside.
struct BackwardResult {
  Gradients grads;
  double loss = 0.0;
};

BackwardResult backward(const HeteroModel& model, const Matrix& features,
                        std::span<const double> targets, const TrainConfig& config,
                        const DropoutMask* mask = nullptr);

struct EpochStats {
  double train_loss = 0.0;
  double val_nll = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;         // 0-based
  double best_val_nll = 0.0;
};

// Mean NLL over a set, no dropout, no regularization.
double evaluate_nll(const HeteroModel& model, const Matrix& features,
                    std::span<const double> targets);

// Minibatch SGD with momentum on the NLL objective, early stopping on
// validation NLL (weights of the best epoch are restored). If the model is
// uninitialized, weights (and the anchor, when configured) are drawn from
// the same generator that drives shuffling and dropout, so a member's whole
// randomness stream comes from one seed.
TrainHistory train(HeteroModel& model, const Matrix& train_x,
                   std::span<const double> train_y, const Matrix& val_x,
                   std::span<const double> val_y, const TrainConfig& config,
                   Rng& rng);

// Convenience overload seeding the generator from config.seed.
TrainHistory train(HeteroModel& model, const Matrix& train_x,
                   std::span<const double> train_y, const Matrix& val_x,
                   std::span<const double> val_y, const TrainConfig& config);

// Checkpoint IO, "UQEVAL-MODEL-v1": layer dims, dropout rate, seed, all
// weights as little-endian 64-bit floats, anchor when present. Writes are
// atomic (temp file + rename).
void save_model(const HeteroModel& model, const std::string& path);
HeteroModel load_model(const std::string& path);

}  // namespace uqeval

#endif  // UQEVAL_CORE_MODEL_HPP_
