#ifndef UQEVAL_CORE_RANKING_HPP_
#define UQEVAL_CORE_RANKING_HPP_

#include <span>
#include <string>
#include <vector>

namespace uqeval {

enum class ErrorMetric { kMae, kRmse };

const char* to_string(ErrorMetric m);
ErrorMetric error_metric_from_string(const std::string& name);

struct RankingConfig {
  int quantiles = 100;  // q
  ErrorMetric metric = ErrorMetric::kMae;

  void validate() const;  // q >= 2
};

// h holds h_1..h_{q-1}: h_j is the error over the ceil(N*(q-j+1)/q) most
// confident predictions, so h_1 is the error on the complete set (equal to
// full_error by construction) and h_{q-1} covers the most-confident
// ceil(2N/q) predictions.
struct ConfidenceCurve {
  std::vector<double> h;
  double full_error = 0.0;  // h_0
  int quantiles = 0;
  ErrorMetric metric = ErrorMetric::kMae;
  std::size_t samples = 0;
};

// Sorts by uncertainty ascending (ties broken by original index) and
// evaluates the error metric over shrinking most-confident prefixes.
// Requires N >= q and finite, non-negative abs_errors.
ConfidenceCurve confidence_curve(std::span<const double> abs_errors,
                                 std::span<const double> uncertainty,
                                 const RankingConfig& config);

// The confidence curve under the best possible ordering: ranking by the
// true absolute errors themselves.
ConfidenceCurve oracle_curve(std::span<const double> abs_errors,
                             const RankingConfig& config);

// Summed gap sum_j (h_j - h_j^oracle) over j = 1..q-1. Curves must share
// q, metric and sample count.
double auco(const ConfidenceCurve& curve, const ConfidenceCurve& oracle);

// h_1 / h_{q-1}. A zero denominator is reported as +infinity with the flag
// set, not as an error.
struct ErrorDropResult {
  double value = 0.0;
  bool infinite = false;
};

ErrorDropResult error_drop(const ConfidenceCurve& curve);

// Fraction of non-increasing steps over the q-point sequence
// (full_error, h_1, ..., h_{q-1}).
double decrease_ratio(const ConfidenceCurve& curve);

// CSV with columns (quantile_index, retained_fraction, error, oracle_error,
// confidence_oracle_gap).
std::string curve_csv(const ConfidenceCurve& curve, const ConfidenceCurve& oracle);

}  // namespace uqeval

#endif  // UQEVAL_CORE_RANKING_HPP_
