#include "sqs/statistics.hpp"

#include <cmath>
#include <limits>

#include "sqs/errors.hpp"
#include "sqs/parallel.hpp"

namespace sqs {

double RunningMoments::variance() const noexcept {
  if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
  return m2_ / static_cast<double>(n_ - 1);
}

EstimatorReport summarize(const std::vector<Matrix>& tensors, std::string mode) {
  if (tensors.empty()) throw SpecError("no samples to summarize");
  const Eigen::Index rows = tensors.front().rows();
  const Eigen::Index cols = tensors.front().cols();
  std::vector<RunningMoments> acc(static_cast<std::size_t>(rows * cols));
  for (const auto& t : tensors) {
    if (t.rows() != rows || t.cols() != cols) throw SpecError("tensors have inconsistent shapes");
    for (Eigen::Index i = 0; i < t.size(); ++i) acc[static_cast<std::size_t>(i)].add(t.data()[i]);
  }
  EstimatorReport report;
  report.mode = std::move(mode);
  report.M = tensors.size();
  report.mean.resize(rows, cols);
  report.variance.resize(rows, cols);
  report.half_width.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows * cols; ++i) {
    const auto& a = acc[static_cast<std::size_t>(i)];
    report.mean.data()[i] = a.mean();
    report.variance.data()[i] = a.variance();
    report.half_width.data()[i] = 1.96 * std::sqrt(report.variance.data()[i] / static_cast<double>(report.M));
  }
  return report;
}

double variance_ratio(const EstimatorReport& a, const EstimatorReport& b, int i, int j) {
  const double denominator = b.variance(i, j);
  if (!(denominator > 0.0)) throw SpecError("variance ratio has a zero or undefined denominator");
  return a.variance(i, j) / denominator;
}

double total_error(const EstimatorReport& report, const Matrix& reference) {
  if (reference.rows() != report.mean.rows() || reference.cols() != report.mean.cols())
    throw SpecError("reference tensor has the wrong shape");
  return (report.mean - reference).cwiseAbs().maxCoeff();
}

DecayFit loglog_slope(const std::vector<std::pair<double, double>>& xy) {
  if (xy.size() < 3) throw SpecError("a decay fit needs at least three points");
  DecayFit fit;
  double sx = 0.0;
  double sy = 0.0;
  for (const auto& [x, y] : xy) {
    if (!(x > 0.0 && y > 0.0)) throw SpecError("decay fit needs positive values");
    fit.points.emplace_back(std::log(x), std::log(y));
    sx += fit.points.back().first;
    sy += fit.points.back().second;
  }
  const auto n = static_cast<double>(xy.size());
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [lx, ly] : fit.points) {
    sxx += (lx - mx) * (lx - mx);
    sxy += (lx - mx) * (ly - my);
  }
  if (!(sxx > 0.0)) throw SpecError("decay fit needs distinct abscissae");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (const auto& [lx, ly] : fit.points) {
    const double e = ly - (fit.intercept + fit.slope * lx);
    rss += e * e;
  }
  fit.residual = std::sqrt(rss / n);
  return fit;
}

Matrix surrogate_reference(const FieldSpec& spec, const SurrogateOptions& options) {
  if (options.M_ref < 1) throw SpecError("surrogate reference needs at least one sample");
  const DomainSpec domain{options.N_ref, spec.dimension()};
  std::vector<Matrix> tensors(static_cast<std::size_t>(options.M_ref));
  parallel_for(tensors.size(), options.workers, [&](std::size_t m) {
    const std::uint64_t seed = options.base_seed + m;
    const Environment env = sample_environment_sqs1_exact(spec, domain, seed);
    tensors[m] = compute_homogenized(discretize(spec, env, options.r), options.bc, options.solver).tensor;
  });
  return summarize(tensors, "reference").mean;
}

}  // namespace sqs
