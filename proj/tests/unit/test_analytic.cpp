#include <numbers>

#include "doctest.h"
#include "sqs/analytic.hpp"
#include "sqs/rng.hpp"
#include "support.hpp"

using namespace sqs;

TEST_SUITE("analytic") {
  TEST_CASE("catalog names and derivatives") {
    for (CatalogFunction g : {CatalogFunction::exp, CatalogFunction::affine, CatalogFunction::cubic,
                              CatalogFunction::two_plus_tanh, CatalogFunction::constant}) {
      CHECK(parse_catalog_function(to_string(g)) == g);
      for (double x : {-1.3, 0.2, 0.9}) {
        const double h = 1e-6;
        const double fd = (catalog_value(g, x + h) - catalog_value(g, x - h)) / (2 * h);
        CHECK(catalog_derivative(g, x) == doctest::Approx(fd).epsilon(1e-6));
      }
    }
    CHECK_THROWS_AS(parse_catalog_function("sin"), SpecError);
  }

  TEST_CASE("gaussian moments against quadrature") {
    const double e = std::numbers::e;
    const GaussianMoments m = gaussian_moments(CatalogFunction::exp);
    CHECK(m.mean == doctest::Approx(std::sqrt(e)));
    CHECK(m.variance == doctest::Approx(e * e - e));
    for (CatalogFunction g : {CatalogFunction::exp, CatalogFunction::cubic}) {
      const GaussianMoments gm = gaussian_moments(g);
      const double mean = gauss_hermite_expectation([g](double x) { return catalog_value(g, x); });
      const double second = gauss_hermite_expectation([g](double x) { return catalog_value(g, x) * catalog_value(g, x); });
      CHECK(gm.mean == doctest::Approx(mean).epsilon(1e-10));
      CHECK(gm.variance == doctest::Approx(second - mean * mean).epsilon(1e-10));
    }
    const GaussianMoments t = gaussian_moments(CatalogFunction::two_plus_tanh);
    CHECK(t.mean == doctest::Approx(2.0));
    CHECK(std::abs(t.mean_x_derivative) < 1e-12);
    CHECK(gauss_hermite_expectation([](double x) { return x * x; }) == doctest::Approx(1.0));
  }

  TEST_CASE("exact conditioning sums to zero") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto x = conditional_gaussian_sample(50, Conditioning::exact_zero(), s);
      double sum = 0.0;
      for (double v : x) sum += v;
      CHECK(std::abs(sum) < 1e-12);
    }
  }

  TEST_CASE("window conditioning keeps the scaled mean inside the window") {
    const int n = 64;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto x = conditional_gaussian_sample(n, Conditioning::window(1.0, 2.0), s);
      double sum = 0.0;
      for (double v : x) sum += v;
      const double z = sum / std::sqrt(double(n));
      CHECK(z >= 1.0);
      CHECK(z <= 2.0);
    }
    CHECK_THROWS_AS(Conditioning::window(1.0, 1.0).validate(), SpecError);
  }

  TEST_CASE("exact conditioning covariance is minus one over n") {
    const int n = 10;
    const int draws = 1000000;
    double s12 = 0.0, s11 = 0.0;
    for (int i = 0; i < draws; ++i) {
      const auto x = conditional_gaussian_sample(n, Conditioning::exact_zero(), static_cast<std::uint64_t>(i));
      s12 += x[0] * x[1];
      s11 += x[0] * x[0];
    }
    CHECK(std::abs(s12 / draws + 1.0 / n) < 3e-3);
    CHECK(std::abs(s11 / draws - (1.0 - 1.0 / n)) < 3e-3);
  }

  TEST_CASE("truncated normal variance against rejection sampling") {
    RngStream rng(17, 3);
    double s = 0.0, s2 = 0.0;
    long kept = 0;
    while (kept < 2000000) {
      const double x = rng.normal();
      if (x < 1.0 || x > 2.0) continue;
      s += x;
      s2 += x * x;
      ++kept;
    }
    const double mean = s / kept;
    CHECK(truncated_normal_variance(1.0, 2.0) == doctest::Approx(s2 / kept - mean * mean).epsilon(3e-3));
    CHECK(truncated_normal_variance(-1.0, 1.0) == doctest::Approx(0.29112).epsilon(1e-4));
    CHECK(truncated_normal_variance(-8.0, 8.0) == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("affine g has zero conditioned variance") {
    const Prop2Result r = prop2_check(ZeroDSpec{20, CatalogFunction::affine, {}}, 1000, 3);
    CHECK(r.predicted_ratio == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(r.ratio) < 1e-20);
  }

  TEST_CASE("exp conditioning at n = 100") {
    const Prop2Result r = prop2_check(ZeroDSpec{100, CatalogFunction::exp, {}}, 20000, 9);
    CHECK(r.predicted_ratio == doctest::Approx(1.0 - 1.0 / (std::numbers::e - 1.0)));
    CHECK(r.predicted_bias == doctest::Approx(-std::exp(0.5) / 200.0));
    CHECK(std::abs(r.ratio - r.predicted_ratio) < 0.03);
    CHECK(std::abs(r.bias - r.predicted_bias) < 4.0 * r.bias_stderr);
  }

  TEST_CASE("window prediction uses the truncated variance") {
    const Prop3Result r = prop3_check(ZeroDSpec{400, CatalogFunction::exp, {}}, 1.0, 2.0, 5000, 2);
    const double C = truncated_normal_variance(1.0, 2.0);
    CHECK(r.C == doctest::Approx(C));
    CHECK(r.predicted_ratio == doctest::Approx(1.0 - (1.0 - C) / (std::numbers::e - 1.0)));
    CHECK(r.ratio < 1.0);
  }

  TEST_CASE("one-dimensional predictions and the constant case") {
    const Prop4Result r = prop4_check(OneDSpec{100, CatalogFunction::two_plus_tanh}, 20000, 4);
    const GaussianMoments m = gaussian_moments(CatalogFunction::two_plus_tanh);
    CHECK(r.predicted_ratio == doctest::Approx(1.0 - m.mean_derivative * m.mean_derivative / m.variance));
    CHECK(r.predicted_bias_mc == doctest::Approx(m.variance / (8.0 * 100.0)));
    CHECK_FALSE(r.degenerate);
    const Prop4Result c = prop4_check(OneDSpec{100, CatalogFunction::constant}, 100, 4);
    CHECK(c.degenerate);
    CHECK(std::abs(c.bias_mc) < 1e-12);
    CHECK(std::abs(c.bias_sqs) < 1e-12);
  }

  TEST_CASE("harmonic oracle") {
    CHECK(harmonic_oracle(std::vector<double>{1, 1, 1}) == 1.0);
    CHECK(harmonic_oracle(std::vector<double>{1.5, 0.5}) == doctest::Approx(0.75));
    CHECK(harmonic_oracle(std::vector<double>(7, 2.5)) == doctest::Approx(2.5));
    CHECK_THROWS_AS(harmonic_oracle(std::vector<double>{}), SpecError);
    CHECK_THROWS_AS(harmonic_oracle(std::vector<double>{1.0, 0.0}), SpecError);
  }
}
