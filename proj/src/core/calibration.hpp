#ifndef UQEVAL_CORE_CALIBRATION_HPP_
#define UQEVAL_CORE_CALIBRATION_HPP_

#include <span>
#include <string>
#include <vector>

namespace uqeval {

// Phi^-1(p) for p in (0,1): rational initial guess refined by one Newton
// step against the erfc-based CDF; absolute error below 1e-9.
double inverse_normal_cdf(double p);

// Standard normal CDF (erfc based, accurate in both tails).
double normal_cdf(double x);

enum class CalibrationMode { kConfidence, kError };

struct CalibrationConfig {
  int bins = 100;  // K: confidence levels, or error-calibration bins
  CalibrationMode mode = CalibrationMode::kConfidence;

  static CalibrationConfig confidence(int levels = 100);
  static CalibrationConfig error(int bins = 10);
  void validate() const;  // K >= 2
};

// Empirical coverage of symmetric Gaussian intervals at levels
// p_k = k/(K+1): coverage_k = #{ |y_i - mu_i| <= z_k * sigma_i } / N with
// z_k = Phi^-1((1+p_k)/2).
struct CoverageCurve {
  std::vector<double> levels;
  std::vector<double> coverage;
};

// Variances must be strictly positive unless allow_zero_variance, in which
// case a zero-variance interval degenerates to the point {mean} (used for
// flagged-degenerate epistemic columns).
CoverageCurve coverage_curve(std::span<const double> pred_mean,
                             std::span<const double> pred_var,
                             std::span<const double> targets,
                             const CalibrationConfig& config,
                             bool allow_zero_variance = false);

// Coverage at a single level p (same interval construction).
double coverage_at_level(std::span<const double> pred_mean,
                         std::span<const double> pred_var,
                         std::span<const double> targets, double p,
                         bool allow_zero_variance = false);

struct CalibrationScores {
  double auce = 0.0;  // sum_k |coverage_k - p_k| (unnormalized)
  double mce = 0.0;   // max_k |coverage_k - p_k|
  double ece = 0.0;   // auce / K (each level weighs 1/K)
};

CalibrationScores auce_mce(const CoverageCurve& curve);

// Equal-count bins ordered by predicted variance; the remainder rows go to
// the first bins.
struct ErrorCalibrationBins {
  std::vector<double> mean_var;  // MV_k
  std::vector<double> mse;       // MSE_k
  std::vector<std::size_t> count;
};

struct ErrorCalibrationResult {
  ErrorCalibrationBins bins;
  double ence = 0.0;
};

// ence = (1/K) sum_k |MV_k - MSE_k| / MV_k on variances; with
// root_form the RMV/RMSE variant (1/K) sum_k |sqrt(MV_k) - sqrt(MSE_k)| /
// sqrt(MV_k) is used instead. Requires K <= N/2 and every MV_k > 0.
ErrorCalibrationResult error_calibration(std::span<const double> pred_mean,
                                         std::span<const double> pred_var,
                                         std::span<const double> targets,
                                         const CalibrationConfig& config,
                                         bool root_form = false);

// Coefficient of variation c_v of uncertainty standard deviations:
// population std divided by mean. Zero mean is a degenerate-uncertainty
// error.
double dispersion(std::span<const double> uncertainty_std);

// CSV exports: (level, empirical_coverage, abs_gap) and
// (bin_index, mean_variance, mse, count).
std::string coverage_csv(const CoverageCurve& curve);
std::string error_calibration_csv(const ErrorCalibrationBins& bins);

}  // namespace uqeval

#endif  // UQEVAL_CORE_CALIBRATION_HPP_
