#pragma once

// Exactly analyzable zero- and one-dimensional models of conditioned sampling.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sqs {

/// Test functions g with known Gaussian moments.
///  exp: e^x; affine: x; cubic: x + x^3; two_plus_tanh: 2 + tanh(x); constant: 2.
enum class CatalogFunction { exp, affine, cubic, two_plus_tanh, constant };

std::string to_string(CatalogFunction g);
CatalogFunction parse_catalog_function(const std::string& text);

double catalog_value(CatalogFunction g, double x);
double catalog_derivative(CatalogFunction g, double x);

/// Moments under X ~ N(0, 1).
struct GaussianMoments {
  double mean = 0.0;             // E[g(X)]
  double mean_derivative = 0.0;  // E[g'(X)]
  double variance = 0.0;         // Var[g(X)]
  double mean_x_derivative = 0.0;  // E[X g'(X)]
};

/// Closed form where available, otherwise Gauss-Hermite quadrature.
GaussianMoments gaussian_moments(CatalogFunction g);

/// E[f(X)] for X ~ N(0, 1) by a Gauss-Hermite rule with `nodes` points.
double gauss_hermite_expectation(const std::function<double(double)>& f, int nodes = 200);

/// Conditioning of the mean xi(X) = (1/n) sum X_i: exactly 0, or in [z0/sqrt(n), z1/sqrt(n)].
struct Conditioning {
  bool exact = true;
  double z0 = 0.0;
  double z1 = 0.0;

  static Conditioning exact_zero() { return {}; }
  static Conditioning window(double z0, double z1) { return {false, z0, z1}; }
  void validate() const;
};

struct ZeroDSpec {
  int n = 100;
  CatalogFunction g = CatalogFunction::exp;
  Conditioning conditioning;
};

/// One-dimensional model a*_N = phi((1/N) sum g(X_k)) with phi(x) = 1/x.
struct OneDSpec {
  int N = 200;
  CatalogFunction g = CatalogFunction::two_plus_tanh;
  void validate() const;
};

/// Exact draw of n standard normals conditioned on their mean: X = Y - mean(Y) + s.
std::vector<double> conditional_gaussian_sample(int n, const Conditioning& conditioning, std::uint64_t seed);

/// Var[X | z0 <= X <= z1] for X ~ N(0, 1).
double truncated_normal_variance(double z0, double z1);

struct Prop2Result {
  double bias = 0.0;
  double bias_stderr = 0.0;
  double ratio = 0.0;
  double predicted_bias = 0.0;
  double predicted_ratio = 0.0;
};

/// Conditioned (xi = 0) versus plain sample means of g over `samples` paired draws.
Prop2Result prop2_check(const ZeroDSpec& spec, std::size_t samples, std::uint64_t seed, unsigned workers = 1);

struct Prop3Result {
  double ratio = 0.0;
  double predicted_ratio = 0.0;
  double C = 0.0;
};

Prop3Result prop3_check(const ZeroDSpec& spec, double z0, double z1, std::size_t samples, std::uint64_t seed,
                        unsigned workers = 1);

struct Prop4Result {
  double bias_mc = 0.0;
  double bias_mc_stderr = 0.0;
  double bias_sqs = 0.0;
  double bias_sqs_stderr = 0.0;
  double ratio = 0.0;
  double predicted_bias_mc = 0.0;
  double predicted_bias_sqs = 0.0;
  double predicted_ratio = 0.0;
  /// Set when Var[g] = 0 and the ratio is undefined.
  bool degenerate = false;
};

/// Biases are measured with the control variate phi'(g0) (mean(g) - m), where
/// m is the exact mean of mean(g) under each scheme: g0 unconditioned and
/// E[g(sqrt(1 - 1/N) Z)] conditioned on xi = 0.
Prop4Result prop4_check(const OneDSpec& spec, std::size_t samples, std::uint64_t seed, unsigned workers = 1);

/// (mean of 1/a_k)^-1. Throws SpecError for empty input or a value <= 0.
double harmonic_oracle(std::span<const double> values);

}  // namespace sqs
