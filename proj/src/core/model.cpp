#include "core/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/errors.hpp"
#include "core/io.hpp"

namespace uqeval {

HeteroModel::HeteroModel(std::vector<std::size_t> layer_dims, double dropout_rate)
    : layer_dims_(std::move(layer_dims)), dropout_rate_(dropout_rate) {
  if (layer_dims_.size() < 2)
    throw ConfigError("layer_dims needs at least an input and an output layer");
  for (std::size_t d : layer_dims_)
    if (d == 0) throw ConfigError("layer_dims entries must be positive");
  if (layer_dims_.back() != 2)
    throw ConfigError("final layer must have exactly 2 outputs (mean, log-variance)");
  if (!(dropout_rate_ >= 0.0) || dropout_rate_ >= 1.0)
    throw ConfigError("dropout_rate must lie in [0, 1)");
  layers_.reserve(layer_dims_.size() - 1);
  for (std::size_t l = 0; l + 1 < layer_dims_.size(); ++l)
    layers_.emplace_back(layer_dims_[l], layer_dims_[l + 1]);
}

void HeteroModel::init_weights(Rng& rng) {
  for (Layer& layer : layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (double& w : layer.w) w = rng.uniform(-bound, bound);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
  initialized_ = true;
}

void HeteroModel::draw_anchor(double prior_std, Rng& rng) {
  if (anchor_.has_value()) throw InputError("anchor point already drawn");
  if (!(prior_std > 0.0)) throw ConfigError("anchor prior_std must be positive");
  std::vector<Layer> anchor;
  anchor.reserve(layers_.size());
  for (const Layer& layer : layers_) {
    Layer a(layer.in, layer.out);
    for (double& w : a.w) w = rng.normal(0.0, prior_std);
    for (double& b : a.b) b = rng.normal(0.0, prior_std);
    anchor.push_back(std::move(a));
  }
  anchor_ = std::move(anchor);
}

void HeteroModel::set_anchor(std::vector<Layer> anchor) {
  if (anchor_.has_value()) throw InputError("anchor point already drawn");
  if (anchor.size() != layers_.size())
    throw InputError("anchor shape does not match the model");
  for (std::size_t l = 0; l < anchor.size(); ++l)
    if (anchor[l].in != layers_[l].in || anchor[l].out != layers_[l].out)
      throw InputError("anchor shape does not match the model");
  anchor_ = std::move(anchor);
}

const std::vector<Layer>& HeteroModel::anchor() const {
  if (!anchor_.has_value()) throw InputError("model has no anchor point");
  return *anchor_;
}

void HeteroModel::check_mask(const DropoutMask* mask) const {
  if (mask == nullptr) return;
  if (mask->size() != hidden_count())
    throw InputError("dropout mask has " + std::to_string(mask->size()) +
                     " layers, expected " + std::to_string(hidden_count()));
  for (std::size_t l = 0; l < mask->size(); ++l)
    if ((*mask)[l].size() != layer_dims_[l + 1])
      throw InputError("dropout mask layer " + std::to_string(l) + " has width " +
                       std::to_string((*mask)[l].size()) + ", expected " +
                       std::to_string(layer_dims_[l + 1]));
}

DropoutMask HeteroModel::draw_mask(Rng& rng) const {
  DropoutMask mask(hidden_count());
  const double keep_scale = 1.0 / (1.0 - dropout_rate_);
  for (std::size_t l = 0; l < mask.size(); ++l) {
    mask[l].resize(layer_dims_[l + 1]);
    for (double& m : mask[l])
      m = (rng.uniform() < dropout_rate_) ? 0.0 : keep_scale;
  }
  return mask;
}

ForwardTrace ForwardTrace::run(const HeteroModel& model, std::span<const double> x,
                               const DropoutMask* mask) {
  if (x.size() != model.input_dim())
    throw InputError("input has dimension " + std::to_string(x.size()) +
                     ", model expects " + std::to_string(model.input_dim()));
  model.check_mask(mask);

  ForwardTrace trace;
  const auto& layers = model.layers();
  const std::size_t hidden = model.hidden_count();
  trace.pre.resize(hidden);
  trace.post.resize(hidden);

  std::span<const double> input = x;
  for (std::size_t l = 0; l < hidden; ++l) {
    const Layer& layer = layers[l];
    trace.pre[l].resize(layer.out);
    trace.post[l].resize(layer.out);
    for (std::size_t u = 0; u < layer.out; ++u) {
      double z = layer.b[u];
      const double* w = layer.w.data() + u * layer.in;
      for (std::size_t j = 0; j < layer.in; ++j) z += w[j] * input[j];
      trace.pre[l][u] = z;
      double a = z > 0.0 ? z : 0.0;
      if (mask) a *= (*mask)[l][u];
      trace.post[l][u] = a;
    }
    input = trace.post[l];
  }

  const Layer& head = layers.back();
  double out[2];
  for (std::size_t u = 0; u < 2; ++u) {
    double z = head.b[u];
    const double* w = head.w.data() + u * head.in;
    for (std::size_t j = 0; j < head.in; ++j) z += w[j] * input[j];
    out[u] = z;
  }
  trace.mean = out[0];
  trace.raw_log_var = out[1];
  trace.log_var = std::clamp(out[1], -kLogVarClamp, kLogVarClamp);
  return trace;
}

MeanLogVar HeteroModel::forward(std::span<const double> x, const DropoutMask* mask) const {
  if (layers_.empty()) throw InputError("model has no layers");
  const ForwardTrace trace = ForwardTrace::run(*this, x, mask);
  return {trace.mean, trace.log_var};
}

Gradients HeteroModel::zero_gradients() const {
  Gradients g;
  g.w.reserve(layers_.size());
  g.b.reserve(layers_.size());
  for (const Layer& layer : layers_) {
    g.w.emplace_back(layer.w.size(), 0.0);
    g.b.emplace_back(layer.b.size(), 0.0);
  }
  return g;
}

double gaussian_nll_loss(double mean, double log_var, double target) {
  if (!std::isfinite(mean) || !std::isfinite(log_var) || !std::isfinite(target))
    throw InputError("gaussian_nll_loss requires finite inputs");
  const double residual = target - mean;
  return 0.5 * std::exp(-log_var) * residual * residual + 0.5 * log_var;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
  if (patience <= 0) throw ConfigError("patience must be positive");
  if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (anchored && !(anchor_prior_std > 0.0))
    throw ConfigError("anchor_prior_std must be positive when anchoring");
}

BackwardResult backward(const HeteroModel& model, const Matrix& features,
                        std::span<const double> targets, const TrainConfig& config,
                        const DropoutMask* mask) {
  const std::size_t n = features.rows;
  if (n == 0) throw InputError("backward requires a non-empty batch");
  if (features.cols != model.input_dim())
    throw InputError("batch feature dimension does not match the model");
  if (targets.size() != n)
    throw InputError("batch target count does not match its feature rows");
  if (config.anchored && config.weight_decay > 0.0 && !model.has_anchor())
    throw ConfigError("anchored regularization requires an anchor point");
  model.check_mask(mask);

  const auto& layers = model.layers();
  const std::size_t hidden = model.hidden_count();

  BackwardResult result;
  result.grads = model.zero_gradients();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Reused per-sample buffers.
  std::vector<std::vector<double>> pre(hidden), post(hidden), delta(hidden);
  for (std::size_t l = 0; l < hidden; ++l) {
    pre[l].resize(layers[l].out);
    post[l].resize(layers[l].out);
    delta[l].resize(layers[l].out);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> x = features.row(i);

    std::span<const double> input = x;
    for (std::size_t l = 0; l < hidden; ++l) {
      const Layer& layer = layers[l];
      for (std::size_t u = 0; u < layer.out; ++u) {
        double z = layer.b[u];
        const double* w = layer.w.data() + u * layer.in;
        for (std::size_t j = 0; j < layer.in; ++j) z += w[j] * input[j];
        pre[l][u] = z;
        double a = z > 0.0 ? z : 0.0;
        if (mask) a *= (*mask)[l][u];
        post[l][u] = a;
      }
      input = post[l];
    }

    const Layer& head = layers.back();
    double mean = head.b[0];
    double raw_log_var = head.b[1];
    {
      const double* w0 = head.w.data();
      const double* w1 = head.w.data() + head.in;
      for (std::size_t j = 0; j < head.in; ++j) {
        mean += w0[j] * input[j];
        raw_log_var += w1[j] * input[j];
      }
    }
    const bool clamped = raw_log_var < -kLogVarClamp || raw_log_var > kLogVarClamp;
    const double log_var = std::clamp(raw_log_var, -kLogVarClamp, kLogVarClamp);
    const double residual = mean - targets[i];
    const double inv_var = std::exp(-log_var);
    result.loss += (0.5 * inv_var * residual * residual + 0.5 * log_var) * inv_n;

    const double d_mean = inv_var * residual * inv_n;
    const double d_log_var =
        clamped ? 0.0 : 0.5 * (1.0 - inv_var * residual * residual) * inv_n;

    // Output layer.
    {
      double* gw = result.grads.w.back().data();
      double* gb = result.grads.b.back().data();
      const double* w0 = head.w.data();
      const double* w1 = head.w.data() + head.in;
      for (std::size_t j = 0; j < head.in; ++j) {
        gw[j] += d_mean * input[j];
        gw[head.in + j] += d_log_var * input[j];
      }
      gb[0] += d_mean;
      gb[1] += d_log_var;
      if (hidden > 0) {
        std::vector<double>& g_prev = delta[hidden - 1];
        for (std::size_t j = 0; j < head.in; ++j)
          g_prev[j] = w0[j] * d_mean + w1[j] * d_log_var;
      }
    }

    // Hidden layers, back to front. delta[l] holds the gradient wrt post[l]
    // on entry and wrt pre[l] after the mask/ReLU factors.
    for (std::size_t li = hidden; li-- > 0;) {
      const Layer& layer = layers[li];
      std::vector<double>& d = delta[li];
      for (std::size_t u = 0; u < layer.out; ++u) {
        double g = d[u];
        if (mask) g *= (*mask)[li][u];
        if (pre[li][u] <= 0.0) g = 0.0;
        d[u] = g;
      }
      const std::span<const double> layer_input = li == 0 ? x : std::span<const double>(post[li - 1]);
      double* gw = result.grads.w[li].data();
      double* gb = result.grads.b[li].data();
      for (std::size_t u = 0; u < layer.out; ++u) {
        const double g = d[u];
        if (g != 0.0) {
          double* gwu = gw + u * layer.in;
          for (std::size_t j = 0; j < layer.in; ++j) gwu[j] += g * layer_input[j];
        }
        gb[u] += g;
      }
      if (li > 0) {
        std::vector<double>& d_prev = delta[li - 1];
        std::fill(d_prev.begin(), d_prev.end(), 0.0);
        for (std::size_t u = 0; u < layer.out; ++u) {
          const double g = d[u];
          if (g == 0.0) continue;
          const double* w = layer.w.data() + u * layer.in;
          for (std::size_t j = 0; j < layer.in; ++j) d_prev[j] += w[j] * g;
        }
      }
    }
  }

  if (config.weight_decay > 0.0) {
    const double lambda = config.weight_decay;
    const std::vector<Layer>* anchor = config.anchored ? &model.anchor() : nullptr;
    double penalty = 0.0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Layer& layer = layers[l];
      const double* aw = anchor ? (*anchor)[l].w.data() : nullptr;
      const double* ab = anchor ? (*anchor)[l].b.data() : nullptr;
      double* gw = result.grads.w[l].data();
      double* gb = result.grads.b[l].data();
      for (std::size_t k = 0; k < layer.w.size(); ++k) {
        const double diff = layer.w[k] - (aw ? aw[k] : 0.0);
        penalty += diff * diff;
        gw[k] += 2.0 * lambda * inv_n * diff;
      }
      for (std::size_t k = 0; k < layer.b.size(); ++k) {
        const double diff = layer.b[k] - (ab ? ab[k] : 0.0);
        penalty += diff * diff;
        gb[k] += 2.0 * lambda * inv_n * diff;
      }
    }
    result.loss += lambda * inv_n * penalty;
  }

  return result;
}

double evaluate_nll(const HeteroModel& model, const Matrix& features,
                    std::span<const double> targets) {
  if (features.rows == 0) throw InputError("evaluate_nll requires a non-empty set");
  double acc = 0.0;
  for (std::size_t i = 0; i < features.rows; ++i) {
    const MeanLogVar out = model.forward(features.row(i));
    const double residual = targets[i] - out.mean;
    acc += 0.5 * std::exp(-out.log_var) * residual * residual + 0.5 * out.log_var;
  }
  return acc / static_cast<double>(features.rows);
}

namespace {

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) {
  Matrix out(end - begin, src.cols);
  for (std::size_t i = begin; i < end; ++i) {
    const auto row = src.row(order[i]);
    std::copy(row.begin(), row.end(), out.row(i - begin).begin());
  }
  return out;
}

}  // namespace

TrainHistory train(HeteroModel& model, const Matrix& train_x,
                   std::span<const double> train_y, const Matrix& val_x,
                   std::span<const double> val_y, const TrainConfig& config,
                   Rng& rng) {
  config.validate();
  if (train_x.rows == 0 || val_x.rows == 0)
    throw InputError("train and validation sets must be non-empty");
  if (train_x.cols != model.input_dim() || val_x.cols != model.input_dim())
    throw InputError("feature dimension does not match the model");

  if (!model.initialized()) model.init_weights(rng);
  if (config.anchored && config.weight_decay > 0.0 && !model.has_anchor())
    model.draw_anchor(config.anchor_prior_std, rng);
  model.set_seed(config.seed);

  const std::size_t n = train_x.rows;
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);
  Gradients velocity = model.zero_gradients();

  TrainHistory history;
  std::vector<Layer> best_weights = model.layers();
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<double> batch_y;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      const Matrix batch_x = gather_rows(train_x, order, start, end);
      batch_y.resize(end - start);
      for (std::size_t i = start; i < end; ++i) batch_y[i - start] = train_y[order[i]];

      DropoutMask mask;
      const DropoutMask* mask_ptr = nullptr;
      if (model.dropout_rate() > 0.0) {
        mask = model.draw_mask(rng);
        mask_ptr = &mask;
      }

      const BackwardResult step = backward(model, batch_x, batch_y, config, mask_ptr);
      if (!std::isfinite(step.loss))
        throw DivergenceError(
            "training diverged: non-finite loss at epoch " + std::to_string(epoch),
            epoch);
      loss_sum += step.loss * static_cast<double>(end - start);

      auto& layers = model.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        double* w = layers[l].w.data();
        double* v = velocity.w[l].data();
        const double* g = step.grads.w[l].data();
        for (std::size_t k = 0; k < layers[l].w.size(); ++k) {
          v[k] = config.momentum * v[k] - config.learning_rate * g[k];
          w[k] += v[k];
        }
        double* b = layers[l].b.data();
        double* vb = velocity.b[l].data();
        const double* gb = step.grads.b[l].data();
        for (std::size_t k = 0; k < layers[l].b.size(); ++k) {
          vb[k] = config.momentum * vb[k] - config.learning_rate * gb[k];
          b[k] += vb[k];
        }
      }
    }

    const double val_nll = evaluate_nll(model, val_x, val_y);
    if (!std::isfinite(val_nll))
      throw DivergenceError(
          "training diverged: non-finite validation loss at epoch " + std::to_string(epoch),
          epoch);
    history.epochs.push_back({loss_sum / static_cast<double>(n), val_nll});

    if (val_nll < best_val) {
      best_val = val_nll;
      best_weights = model.layers();
      history.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= config.patience) break;
    }
  }

  model.layers() = std::move(best_weights);
  history.best_val_nll = best_val;
  return history;
}

TrainHistory train(HeteroModel& model, const Matrix& train_x,
                   std::span<const double> train_y, const Matrix& val_x,
                   std::span<const double> val_y, const TrainConfig& config) {
  Rng rng(config.seed);
  return train(model, train_x, train_y, val_x, val_y, config, rng);
}

namespace {
constexpr char kModelMagic[] = "UQEVAL-MODEL-v1\n";
constexpr std::size_t kModelMagicLen = sizeof(kModelMagic) - 1;
}  // namespace

void save_model(const HeteroModel& model, const std::string& path) {
  if (!model.initialized()) throw InputError("cannot save an uninitialized model");
  std::string buf;
  buf.append(kModelMagic, kModelMagicLen);
  append_u32(buf, static_cast<std::uint32_t>(model.layer_dims().size()));
  for (std::size_t d : model.layer_dims()) append_u32(buf, static_cast<std::uint32_t>(d));
  append_f64(buf, model.dropout_rate());
  append_u64(buf, model.seed());
  buf.push_back(model.has_anchor() ? '\1' : '\0');
  auto append_layers = [&buf](const std::vector<Layer>& layers) {
    for (const Layer& layer : layers) {
      for (double w : layer.w) append_f64(buf, w);
      for (double b : layer.b) append_f64(buf, b);
    }
  };
  append_layers(model.layers());
  if (model.has_anchor()) append_layers(model.anchor());
  atomic_write_file(path, buf);
}

HeteroModel load_model(const std::string& path) {
  const std::string buf = read_file(path);
  ByteReader reader(buf);
  if (buf.size() < kModelMagicLen || reader.bytes(kModelMagicLen) != kModelMagic)
    throw DataError("'" + path + "' is not a UQEVAL-MODEL-v1 checkpoint");

  const std::uint32_t n_dims = reader.u32();
  if (n_dims < 2 || n_dims > 64)
    throw DataError("'" + path + "' has an invalid layer count");
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) {
    d = reader.u32();
    if (d == 0) throw DataError("'" + path + "' has a zero-width layer");
  }
  const double dropout = reader.f64();
  const std::uint64_t seed = reader.u64();
  const std::string anchor_flag = reader.bytes(1);

  HeteroModel model(dims, dropout);
  auto read_layers = [&reader](std::vector<Layer>& layers) {
    for (Layer& layer : layers) {
      for (double& w : layer.w) w = reader.f64();
      for (double& b : layer.b) b = reader.f64();
    }
  };
  read_layers(model.layers());
  if (anchor_flag[0] != '\0') {
    std::vector<Layer> anchor;
    anchor.reserve(model.layers().size());
    for (const Layer& layer : model.layers()) anchor.emplace_back(layer.in, layer.out);
    read_layers(anchor);
    model.set_anchor(std::move(anchor));
  }
  if (!reader.at_end()) throw DataError("'" + path + "' has trailing bytes");
  model.set_seed(seed);
  model.mark_initialized();
  return model;
}

}  // namespace uqeval
