#pragma once

// Estimator summaries, variance ratios, reference errors and log-log decay fits.

#include <string>
#include <utility>
#include <vector>

#include "sqs/corrector.hpp"
#include "sqs/lattice_field.hpp"

namespace sqs {

/// Streaming mean and unbiased variance (Welford).
class RunningMoments {
 public:
  void add(double x) noexcept {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  /// NaN when fewer than two values were added.
  double variance() const noexcept;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct EstimatorReport {
  std::string mode;
  std::size_t M = 0;
  Matrix mean;
  /// Unbiased, entry-wise; NaN when M < 2.
  Matrix variance;
  /// 1.96 sqrt(variance / M).
  Matrix half_width;
};

/// Entry-wise statistics of a list of d x d tensors.
EstimatorReport summarize(const std::vector<Matrix>& tensors, std::string mode);

/// variance_a / variance_b for entry (i, j). Throws SpecError on a zero or
/// undefined denominator.
double variance_ratio(const EstimatorReport& a, const EstimatorReport& b, int i, int j);

/// Max-norm distance between the report mean and a reference tensor.
double total_error(const EstimatorReport& report, const Matrix& reference);

struct DecayFit {
  std::vector<std::pair<double, double>> points;  // (log x, log y)
  double slope = 0.0;
  double intercept = 0.0;
  /// Root mean square of the fit residuals in log space.
  double residual = 0.0;
};

/// Least squares on (log x, log y). Needs >= 3 points with x, y > 0.
DecayFit loglog_slope(const std::vector<std::pair<double, double>>& xy);

struct SurrogateOptions {
  int M_ref = 500;
  int N_ref = 40;
  int r = 1;
  Boundary bc = Boundary::periodic;
  std::uint64_t base_seed = 0;
  unsigned workers = 1;
  SolverOptions solver;
};

/// Empirical mean of A*_N over exactly balanced environments at N_ref.
Matrix surrogate_reference(const FieldSpec& spec, const SurrogateOptions& options);

}  // namespace sqs
