#include "core/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "core/errors.hpp"

namespace uqeval {

const char* to_string(ErrorMetric m) {
  return m == ErrorMetric::kMae ? "mae" : "rmse";
}

ErrorMetric error_metric_from_string(const std::string& name) {
  if (name == "mae") return ErrorMetric::kMae;
  if (name == "rmse") return ErrorMetric::kRmse;
  throw ConfigError("unknown error metric '" + name + "'");
}

void RankingConfig::validate() const {
  if (quantiles < 2) throw ConfigError("quantiles must be >= 2");
}

ConfidenceCurve confidence_curve(std::span<const double> abs_errors,
                                 std::span<const double> uncertainty,
                                 const RankingConfig& config) {
  config.validate();
  const std::size_t n = abs_errors.size();
  const std::size_t q = static_cast<std::size_t>(config.quantiles);
  if (uncertainty.size() != n)
    throw InputError("abs_errors and uncertainty must have the same length");
  if (n < q)
    throw InputError("need at least q=" + std::to_string(q) + " samples, got " +
                     std::to_string(n));
  for (double e : abs_errors) {
    if (!std::isfinite(e)) throw InputError("abs_errors must be finite");
    if (e < 0.0) throw InputError("abs_errors must be non-negative");
  }
  for (double u : uncertainty)
    if (!std::isfinite(u)) throw InputError("uncertainty values must be finite");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return uncertainty[a] < uncertainty[b];
  });

  // Left-fold prefix sums in confidence order, accumulated in long double so
  // equal subsets reached through different orderings still round to the
  // same double.
  const bool rmse = config.metric == ErrorMetric::kRmse;
  std::vector<long double> prefix(n + 1, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = abs_errors[order[i]];
    prefix[i + 1] = prefix[i] + (rmse ? static_cast<long double>(e) * e : e);
  }
  auto prefix_metric = [&](std::size_t k) {
    const long double mean = prefix[k] / static_cast<long double>(k);
    return rmse ? std::sqrt(static_cast<double>(mean)) : static_cast<double>(mean);
  };

  ConfidenceCurve curve;
  curve.quantiles = config.quantiles;
  curve.metric = config.metric;
  curve.samples = n;
  curve.full_error = prefix_metric(n);
  curve.h.resize(q - 1);
  for (std::size_t j = 1; j <= q - 1; ++j) {
    const std::size_t k = (n * (q - j + 1) + q - 1) / q;  // ceil(n*(q-j+1)/q)
    curve.h[j - 1] = prefix_metric(k);
  }
  return curve;
}

ConfidenceCurve oracle_curve(std::span<const double> abs_errors,
                             const RankingConfig& config) {
  return confidence_curve(abs_errors, abs_errors, config);
}

double auco(const ConfidenceCurve& curve, const ConfidenceCurve& oracle) {
  if (curve.quantiles != oracle.quantiles || curve.metric != oracle.metric ||
      curve.samples != oracle.samples)
    throw InputError("auco requires curves with matching q, metric and sample count");
  double acc = 0.0;
  for (std::size_t j = 0; j < curve.h.size(); ++j) acc += curve.h[j] - oracle.h[j];
  return acc;
}

ErrorDropResult error_drop(const ConfidenceCurve& curve) {
  if (curve.h.empty()) throw InputError("error_drop requires a non-empty curve");
  const double first = curve.h.front();
  const double last = curve.h.back();
  if (last == 0.0)
    return {std::numeric_limits<double>::infinity(), true};
  return {first / last, false};
}

double decrease_ratio(const ConfidenceCurve& curve) {
  if (curve.h.empty()) throw InputError("decrease_ratio requires a non-empty curve");
  std::size_t non_increasing = 0;
  double prev = curve.full_error;
  for (double h : curve.h) {
    if (prev >= h) ++non_increasing;
    prev = h;
  }
  return static_cast<double>(non_increasing) / static_cast<double>(curve.h.size());
}

std::string curve_csv(const ConfidenceCurve& curve, const ConfidenceCurve& oracle) {
  if (curve.quantiles != oracle.quantiles || curve.samples != oracle.samples)
    throw InputError("curve export requires matching curves");
  std::string out = "quantile_index,retained_fraction,error,oracle_error,confidence_oracle_gap\n";
  const std::size_t n = curve.samples;
  const std::size_t q = static_cast<std::size_t>(curve.quantiles);
  char line[160];
  for (std::size_t j = 1; j <= curve.h.size(); ++j) {
    const std::size_t k = (n * (q - j + 1) + q - 1) / q;
    std::snprintf(line, sizeof(line), "%zu,%.10g,%.10g,%.10g,%.10g\n", j,
                  static_cast<double>(k) / static_cast<double>(n), curve.h[j - 1],
                  oracle.h[j - 1], curve.h[j - 1] - oracle.h[j - 1]);
    out += line;
  }
  return out;
}

}  // namespace uqeval
