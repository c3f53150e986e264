#include "core/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "core/errors.hpp"

namespace uqeval {

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / 1.4142135623730951);
}

namespace {

// Acklam's rational approximation of the normal quantile (absolute error
// ~1.15e-9 before refinement).
double acklam(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / 2.5066282746310002;
}

}  // namespace

double inverse_normal_cdf(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw InputError("inverse_normal_cdf requires p in (0, 1)");
  double z = acklam(p);
  // One Newton step against the erfc-based CDF.
  const double pdf = normal_pdf(z);
  if (pdf > 0.0) z -= (normal_cdf(z) - p) / pdf;
  return z;
}

CalibrationConfig CalibrationConfig::confidence(int levels) {
  return {levels, CalibrationMode::kConfidence};
}

CalibrationConfig CalibrationConfig::error(int bins) {
  return {bins, CalibrationMode::kError};
}

void CalibrationConfig::validate() const {
  if (bins < 2) throw ConfigError("calibration bin/level count must be >= 2");
}

namespace {

// |y - mu| / sigma with the zero-variance point-interval convention.
std::vector<double> normalized_residuals(std::span<const double> pred_mean,
                                         std::span<const double> pred_var,
                                         std::span<const double> targets,
                                         bool allow_zero_variance) {
  const std::size_t n = pred_mean.size();
  if (pred_var.size() != n || targets.size() != n)
    throw InputError("prediction and target arrays must have the same length");
  if (n == 0) throw InputError("coverage requires at least one sample");
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(pred_mean[i]) || !std::isfinite(pred_var[i]) ||
        !std::isfinite(targets[i]))
      throw InputError("coverage inputs must be finite");
    if (pred_var[i] < 0.0 || (!allow_zero_variance && pred_var[i] == 0.0))
      throw InputError("predicted variances must be strictly positive");
    const double resid = std::abs(targets[i] - pred_mean[i]);
    if (pred_var[i] == 0.0) {
      t[i] = resid == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      t[i] = resid / std::sqrt(pred_var[i]);
    }
  }
  return t;
}

}  // namespace

CoverageCurve coverage_curve(std::span<const double> pred_mean,
                             std::span<const double> pred_var,
                             std::span<const double> targets,
                             const CalibrationConfig& config,
                             bool allow_zero_variance) {
  config.validate();
  if (config.mode != CalibrationMode::kConfidence)
    throw InputError("coverage_curve requires confidence mode");
  std::vector<double> t =
      normalized_residuals(pred_mean, pred_var, targets, allow_zero_variance);
  std::sort(t.begin(), t.end());

  const int k_levels = config.bins;
  CoverageCurve curve;
  curve.levels.resize(static_cast<std::size_t>(k_levels));
  curve.coverage.resize(static_cast<std::size_t>(k_levels));
  const double n = static_cast<double>(t.size());
  for (int k = 1; k <= k_levels; ++k) {
    const double p = static_cast<double>(k) / static_cast<double>(k_levels + 1);
    const double z = inverse_normal_cdf(0.5 * (1.0 + p));
    const auto covered = std::upper_bound(t.begin(), t.end(), z) - t.begin();
    curve.levels[static_cast<std::size_t>(k - 1)] = p;
    curve.coverage[static_cast<std::size_t>(k - 1)] = static_cast<double>(covered) / n;
  }
  return curve;
}

double coverage_at_level(std::span<const double> pred_mean,
                         std::span<const double> pred_var,
                         std::span<const double> targets, double p,
                         bool allow_zero_variance) {
  if (!(p > 0.0) || !(p < 1.0)) throw InputError("coverage level must lie in (0, 1)");
  const std::vector<double> t =
      normalized_residuals(pred_mean, pred_var, targets, allow_zero_variance);
  const double z = inverse_normal_cdf(0.5 * (1.0 + p));
  std::size_t covered = 0;
  for (double v : t)
    if (v <= z) ++covered;
  return static_cast<double>(covered) / static_cast<double>(t.size());
}

CalibrationScores auce_mce(const CoverageCurve& curve) {
  if (curve.levels.empty() || curve.levels.size() != curve.coverage.size())
    throw InputError("auce_mce requires a non-empty coverage curve");
  CalibrationScores scores;
  for (std::size_t k = 0; k < curve.levels.size(); ++k) {
    const double gap = std::abs(curve.coverage[k] - curve.levels[k]);
    scores.auce += gap;
    scores.mce = std::max(scores.mce, gap);
  }
  scores.ece = scores.auce / static_cast<double>(curve.levels.size());
  return scores;
}

ErrorCalibrationResult error_calibration(std::span<const double> pred_mean,
                                         std::span<const double> pred_var,
                                         std::span<const double> targets,
                                         const CalibrationConfig& config,
                                         bool root_form) {
  config.validate();
  if (config.mode != CalibrationMode::kError)
    throw InputError("error_calibration requires error mode");
  const std::size_t n = pred_mean.size();
  if (pred_var.size() != n || targets.size() != n)
    throw InputError("prediction and target arrays must have the same length");
  const std::size_t k_bins = static_cast<std::size_t>(config.bins);
  if (n < 2 * k_bins)
    throw InputError("error calibration needs K <= N/2 so every bin holds >= 2 samples");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(pred_mean[i]) || !std::isfinite(pred_var[i]) ||
        !std::isfinite(targets[i]) || pred_var[i] < 0.0)
      throw InputError("error calibration inputs must be finite with var >= 0");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pred_var[a] < pred_var[b]; });

  ErrorCalibrationResult result;
  result.bins.mean_var.resize(k_bins);
  result.bins.mse.resize(k_bins);
  result.bins.count.resize(k_bins);

  const std::size_t base = n / k_bins;
  const std::size_t remainder = n % k_bins;
  std::size_t pos = 0;
  double ence_acc = 0.0;
  for (std::size_t k = 0; k < k_bins; ++k) {
    const std::size_t size = base + (k < remainder ? 1 : 0);
    double var_acc = 0.0, mse_acc = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t idx = order[pos + i];
      var_acc += pred_var[idx];
      const double r = targets[idx] - pred_mean[idx];
      mse_acc += r * r;
    }
    pos += size;
    const double mv = var_acc / static_cast<double>(size);
    const double mse = mse_acc / static_cast<double>(size);
    result.bins.mean_var[k] = mv;
    result.bins.mse[k] = mse;
    result.bins.count[k] = size;
    if (!(mv > 0.0))
      throw DegenerateError("error calibration bin " + std::to_string(k) +
                            " has zero mean predicted variance");
    if (root_form) {
      const double rmv = std::sqrt(mv);
      ence_acc += std::abs(rmv - std::sqrt(mse)) / rmv;
    } else {
      ence_acc += std::abs(mv - mse) / mv;
    }
  }
  result.ence = ence_acc / static_cast<double>(k_bins);
  return result;
}

double dispersion(std::span<const double> uncertainty_std) {
  if (uncertainty_std.empty()) throw InputError("dispersion requires a non-empty vector");
  double acc = 0.0;
  for (double s : uncertainty_std) {
    if (!std::isfinite(s) || s < 0.0)
      throw InputError("dispersion inputs must be finite non-negative standard deviations");
    acc += s;
  }
  const double mean = acc / static_cast<double>(uncertainty_std.size());
  if (!(mean > 0.0))
    throw DegenerateError("dispersion is undefined for zero-mean uncertainties");
  double var_acc = 0.0;
  for (double s : uncertainty_std) {
    const double d = s - mean;
    var_acc += d * d;
  }
  const double std_dev = std::sqrt(var_acc / static_cast<double>(uncertainty_std.size()));
  return std_dev / mean;
}

std::string coverage_csv(const CoverageCurve& curve) {
  std::string out = "level,empirical_coverage,abs_gap\n";
  char line[96];
  for (std::size_t k = 0; k < curve.levels.size(); ++k) {
    std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g\n", curve.levels[k],
                  curve.coverage[k], std::abs(curve.coverage[k] - curve.levels[k]));
    out += line;
  }
  return out;
}

std::string error_calibration_csv(const ErrorCalibrationBins& bins) {
  std::string out = "bin_index,mean_variance,mse,count\n";
  char line[96];
  for (std::size_t k = 0; k < bins.mean_var.size(); ++k) {
    std::snprintf(line, sizeof(line), "%zu,%.10g,%.10g,%zu\n", k, bins.mean_var[k],
                  bins.mse[k], bins.count[k]);
    out += line;
  }
  return out;
}

}  // namespace uqeval
