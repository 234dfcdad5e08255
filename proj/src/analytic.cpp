#include "sqs/analytic.hpp"

#include <gsl/gsl_integration.h>

#include <boost/math/distributions/normal.hpp>

#include <array>
#include <cmath>
#include <memory>
#include <numbers>

#include "sqs/errors.hpp"
#include "sqs/parallel.hpp"
#include "sqs/rng.hpp"
#include "sqs/statistics.hpp"

namespace sqs {

namespace {

constexpr std::uint64_t kGaussStream = 0x67617573ULL;

struct PairedDraw {
  std::vector<double> y;
  std::vector<double> x;
};

/// Y i.i.d. standard normal and X = Y - mean(Y) + s from one stream.
PairedDraw paired_draw(int n, const Conditioning& c, std::uint64_t seed) {
  RngStream stream(seed, kGaussStream);
  PairedDraw d;
  d.y.resize(static_cast<std::size_t>(n));
  double mean = 0.0;
  for (double& v : d.y) {
    v = stream.normal();
    mean += v;
  }
  mean /= n;
  double s = 0.0;
  if (!c.exact) {
    static const boost::math::normal_distribution<double> standard;
    const double lo = boost::math::cdf(standard, c.z0);
    const double hi = boost::math::cdf(standard, c.z1);
    s = boost::math::quantile(standard, lo + (hi - lo) * stream.uniform()) / std::sqrt(static_cast<double>(n));
  }
  d.x.resize(d.y.size());
  for (std::size_t i = 0; i < d.y.size(); ++i) d.x[i] = d.y[i] - mean + s;
  return d;
}

double mean_of(CatalogFunction g, const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += catalog_value(g, x);
  return s / static_cast<double>(v.size());
}

std::uint64_t draw_seed(std::uint64_t seed, std::size_t i) { return mix64(seed) + i; }

}  // namespace

std::string to_string(CatalogFunction g) {
  switch (g) {
    case CatalogFunction::exp:
      return "exp";
    case CatalogFunction::affine:
      return "affine";
    case CatalogFunction::cubic:
      return "cubic";
    case CatalogFunction::two_plus_tanh:
      return "two_plus_tanh";
    case CatalogFunction::constant:
      return "constant";
  }
  return {};
}

CatalogFunction parse_catalog_function(const std::string& text) {
  for (auto g : {CatalogFunction::exp, CatalogFunction::affine, CatalogFunction::cubic, CatalogFunction::two_plus_tanh,
                 CatalogFunction::constant})
    if (to_string(g) == text) return g;
  throw SpecError("unknown catalog function '" + text + "'");
}

double catalog_value(CatalogFunction g, double x) {
  switch (g) {
    case CatalogFunction::exp:
      return std::exp(x);
    case CatalogFunction::affine:
      return x;
    case CatalogFunction::cubic:
      return x + x * x * x;
    case CatalogFunction::two_plus_tanh:
      return 2.0 + std::tanh(x);
    case CatalogFunction::constant:
      return 2.0;
  }
  return 0.0;
}

double catalog_derivative(CatalogFunction g, double x) {
  switch (g) {
    case CatalogFunction::exp:
      return std::exp(x);
    case CatalogFunction::affine:
      return 1.0;
    case CatalogFunction::cubic:
      return 1.0 + 3.0 * x * x;
    case CatalogFunction::two_plus_tanh: {
      const double c = std::cosh(x);
      return 1.0 / (c * c);
    }
    case CatalogFunction::constant:
      return 0.0;
  }
  return 0.0;
}

double gauss_hermite_expectation(const std::function<double(double)>& f, int nodes) {
  if (nodes < 1) throw SpecError("quadrature needs at least one node");
  // Weight exp(-x^2 / 2) on the real line.
  std::unique_ptr<gsl_integration_fixed_workspace, decltype(&gsl_integration_fixed_free)> ws(
      gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, static_cast<std::size_t>(nodes), 0.0, 0.5, 0.0, 0.0),
      &gsl_integration_fixed_free);
  if (!ws) throw SpecError("quadrature rule allocation failed");
  const double* x = gsl_integration_fixed_nodes(ws.get());
  const double* w = gsl_integration_fixed_weights(ws.get());
  double sum = 0.0;
  for (int i = 0; i < nodes; ++i) sum += w[i] * f(x[i]);
  return sum / std::sqrt(2.0 * std::numbers::pi);
}

GaussianMoments gaussian_moments(CatalogFunction g) {
  const double e = std::numbers::e;
  switch (g) {
    case CatalogFunction::exp:
      return {std::sqrt(e), std::sqrt(e), e * e - e, std::sqrt(e)};
    case CatalogFunction::affine:
      return {0.0, 1.0, 1.0, 0.0};
    case CatalogFunction::cubic:
      return {0.0, 4.0, 22.0, 0.0};
    case CatalogFunction::constant:
      return {2.0, 0.0, 0.0, 0.0};
    case CatalogFunction::two_plus_tanh:
      break;
  }
  GaussianMoments m;
  m.mean = gauss_hermite_expectation([g](double x) { return catalog_value(g, x); });
  m.mean_derivative = gauss_hermite_expectation([g](double x) { return catalog_derivative(g, x); });
  m.variance = gauss_hermite_expectation([g, &m](double x) {
    const double v = catalog_value(g, x) - m.mean;
    return v * v;
  });
  m.mean_x_derivative = gauss_hermite_expectation([g](double x) { return x * catalog_derivative(g, x); });
  return m;
}

void Conditioning::validate() const {
  if (!exact && !(z1 > z0)) throw SpecError("conditioning window needs z1 > z0");
}

void OneDSpec::validate() const {
  if (N < 2) throw SpecError("N must be >= 2");
  if (g != CatalogFunction::two_plus_tanh && g != CatalogFunction::constant && g != CatalogFunction::exp)
    throw SpecError("the cell-value map must be positive");
}

std::vector<double> conditional_gaussian_sample(int n, const Conditioning& conditioning, std::uint64_t seed) {
  if (n < 2) throw SpecError("conditional sampling needs n >= 2");
  conditioning.validate();
  return paired_draw(n, conditioning, seed).x;
}

double truncated_normal_variance(double z0, double z1) {
  if (!(z1 > z0)) throw SpecError("truncation window needs z1 > z0");
  static const boost::math::normal_distribution<double> standard;
  const double mass = boost::math::cdf(standard, z1) - boost::math::cdf(standard, z0);
  const double p0 = boost::math::pdf(standard, z0);
  const double p1 = boost::math::pdf(standard, z1);
  const double mean = (p0 - p1) / mass;
  return 1.0 + (z0 * p0 - z1 * p1) / mass - mean * mean;
}

Prop2Result prop2_check(const ZeroDSpec& spec, std::size_t samples, std::uint64_t seed, unsigned workers) {
  if (spec.n < 2 || samples < 2) throw SpecError("prop2 needs n >= 2 and at least two samples");
  const GaussianMoments gm = gaussian_moments(spec.g);
  std::vector<double> conditioned(samples);
  std::vector<double> plain(samples);
  parallel_for(samples, workers, [&](std::size_t i) {
    const PairedDraw d = paired_draw(spec.n, Conditioning::exact_zero(), draw_seed(seed, i));
    conditioned[i] = mean_of(spec.g, d.x);
    plain[i] = mean_of(spec.g, d.y);
  });
  RunningMoments c;
  RunningMoments p;
  for (std::size_t i = 0; i < samples; ++i) {
    c.add(conditioned[i]);
    p.add(plain[i]);
  }
  Prop2Result r;
  r.bias = c.mean() - gm.mean;
  r.bias_stderr = std::sqrt(c.variance() / static_cast<double>(samples));
  r.ratio = p.variance() > 0.0 ? c.variance() / p.variance() : std::numeric_limits<double>::quiet_NaN();
  r.predicted_bias = -gm.mean_derivative / (2.0 * spec.n);
  r.predicted_ratio = gm.variance > 0.0 ? 1.0 - gm.mean_derivative * gm.mean_derivative / gm.variance
                                        : std::numeric_limits<double>::quiet_NaN();
  return r;
}

Prop3Result prop3_check(const ZeroDSpec& spec, double z0, double z1, std::size_t samples, std::uint64_t seed,
                        unsigned workers) {
  if (spec.n < 2 || samples < 2) throw SpecError("prop3 needs n >= 2 and at least two samples");
  const Conditioning window = Conditioning::window(z0, z1);
  window.validate();
  const GaussianMoments gm = gaussian_moments(spec.g);
  std::vector<double> conditioned(samples);
  std::vector<double> plain(samples);
  parallel_for(samples, workers, [&](std::size_t i) {
    const PairedDraw d = paired_draw(spec.n, window, draw_seed(seed, i));
    conditioned[i] = mean_of(spec.g, d.x);
    plain[i] = mean_of(spec.g, d.y);
  });
  RunningMoments c;
  RunningMoments p;
  for (std::size_t i = 0; i < samples; ++i) {
    c.add(conditioned[i]);
    p.add(plain[i]);
  }
  Prop3Result r;
  r.C = truncated_normal_variance(z0, z1);
  r.ratio = p.variance() > 0.0 ? c.variance() / p.variance() : std::numeric_limits<double>::quiet_NaN();
  r.predicted_ratio = gm.variance > 0.0
                          ? 1.0 - (1.0 - r.C) * gm.mean_derivative * gm.mean_derivative / gm.variance
                          : std::numeric_limits<double>::quiet_NaN();
  return r;
}

Prop4Result prop4_check(const OneDSpec& spec, std::size_t samples, std::uint64_t seed, unsigned workers) {
  spec.validate();
  if (samples < 2) throw SpecError("prop4 needs at least two samples");
  const GaussianMoments gm = gaussian_moments(spec.g);
  const double g0 = gm.mean;
  const double phi0 = 1.0 / g0;
  const double dphi0 = -1.0 / (g0 * g0);
  const double d2phi0 = 2.0 / (g0 * g0 * g0);
  const double shrink = std::sqrt(1.0 - 1.0 / spec.N);
  const double conditioned_mean =
      gauss_hermite_expectation([&](double z) { return catalog_value(spec.g, shrink * z); });

  std::vector<std::array<double, 4>> rows(samples);
  parallel_for(samples, workers, [&](std::size_t i) {
    const PairedDraw d = paired_draw(spec.N, Conditioning::exact_zero(), draw_seed(seed, i));
    const double gu = mean_of(spec.g, d.y);
    const double gc = mean_of(spec.g, d.x);
    rows[i] = {1.0 / gu - phi0 - dphi0 * (gu - g0), 1.0 / gc - phi0 - dphi0 * (gc - conditioned_mean), 1.0 / gu,
               1.0 / gc};
  });
  RunningMoments bias_mc;
  RunningMoments bias_sqs;
  RunningMoments plain;
  RunningMoments conditioned;
  for (const auto& row : rows) {
    bias_mc.add(row[0]);
    bias_sqs.add(row[1]);
    plain.add(row[2]);
    conditioned.add(row[3]);
  }
  const auto m = static_cast<double>(samples);
  Prop4Result r;
  r.bias_mc = bias_mc.mean();
  r.bias_mc_stderr = std::sqrt(bias_mc.variance() / m);
  r.bias_sqs = bias_sqs.mean();
  r.bias_sqs_stderr = std::sqrt(bias_sqs.variance() / m);
  r.predicted_bias_mc = d2phi0 * gm.variance / (2.0 * spec.N);
  r.predicted_bias_sqs = d2phi0 / (2.0 * spec.N) * (gm.variance - gm.mean_derivative * gm.mean_derivative) -
                         dphi0 / (2.0 * spec.N) * gm.mean_x_derivative;
  if (!(gm.variance > 0.0) || !(plain.variance() > 0.0)) {
    r.degenerate = true;
    r.ratio = std::numeric_limits<double>::quiet_NaN();
    r.predicted_ratio = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.ratio = conditioned.variance() / plain.variance();
  r.predicted_ratio = 1.0 - gm.mean_derivative * gm.mean_derivative / gm.variance;
  return r;
}

double harmonic_oracle(std::span<const double> values) {
  if (values.empty()) throw SpecError("harmonic mean of an empty set");
  double inv = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw SpecError("harmonic mean needs positive values");
    inv += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv;
}

}  // namespace sqs
