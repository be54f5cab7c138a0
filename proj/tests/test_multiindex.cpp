#include <catch_amalgamated.hpp>

#include <cmath>

#include "ep/multiindex.hpp"

using namespace ep;
using Catch::Approx;

TEST_CASE("graded index count matches the binomial formula") {
  for (int n = 0; n <= 6; ++n) {
    const auto idx = all_indices(n);
    CHECK(idx.size() == static_cast<std::size_t>((n + 1) * (n + 2) * (n + 3) / 6));
    for (std::size_t i = 0; i < idx.size(); ++i) CHECK(graded_position(idx[i]) == i);
    for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i - 1] < idx[i]);
  }
}

TEST_CASE("one-dimensional partition sum equals R(R+1)^(n-1)") {
  for (const Rational R : {Rational(1, 3), Rational(1), Rational(2), Rational(5)})
    for (int n = 1; n <= 12; ++n) CHECK(faa_sum_1d(n, R) == R * pow_rational(R + 1, n - 1));
}

TEST_CASE("hand-counted small cases") {
  // ordered compositions of n, weighted R^parts
  // n = 2: 2, 1+1: R + R^2
  CHECK(faa_sum_1d(2, Rational(3)) == Rational(3 + 9));
  // n = 3: 3, 2+1, 1+2, 1+1+1: R + 2R^2 + R^3
  CHECK(faa_sum_1d(3, Rational(2)) == Rational(2 + 8 + 8));
}

TEST_CASE("multi-index decomposition sum agrees with the generating function") {
  const Rational R(2, 3);
  for (const MultiIndex a : {MultiIndex{1, 0, 0}, MultiIndex{1, 1, 0}, MultiIndex{2, 1, 0}, MultiIndex{1, 1, 1},
                             MultiIndex{0, 3, 1}, MultiIndex{2, 2, 0}})
    CHECK(faa_sum_multi(a, R) == faa_series_coeff(a, R));
}

TEST_CASE("single-axis multi-index reduces to the 1-D sum") {
  const Rational R(5);
  for (int n = 1; n <= 6; ++n) CHECK(faa_sum_multi(MultiIndex{0, n, 0}, R) == faa_sum_1d(n, R));
}

TEST_CASE("binomial and factorial") {
  const MultiIndex a{2, 1, 3}, b{1, 0, 2};
  CHECK(a.factorial() == 12);
  CHECK(binomial(a, b) == Approx(2.0 * 1.0 * 3.0));
}

TEST_CASE("convolution of indicator sequences reproduces binomial coefficients") {
  AnalyticLedger L;
  L.max_order = 4;
  IndexedSeq x(4), y(4);
  x[MultiIndex{}] = 1;
  x[MultiIndex{1, 0, 0}] = 1;
  y[MultiIndex{}] = 1;
  y[MultiIndex{0, 1, 0}] = 2;
  const IndexedSeq z = convolve_coeffs(L, x, y);
  CHECK(z[MultiIndex{}] == Approx(1));
  CHECK(z[MultiIndex{1, 1, 0}] == Approx(2));  // binomial weight 1, times 1 * 2
  CHECK(z[MultiIndex{0, 1, 0}] == Approx(2));
}

TEST_CASE("ledger coefficient matches its exact form") {
  AnalyticLedger L;
  const MultiIndex a{1, 2, 1};
  const double t = 0.3;
  const Rational tau(7, 100);  // tau0 - M0 t
  const double exact = static_cast<double>(coeff_exact(tau, a));
  CHECK(coeff(L, a, t) == Approx(exact).epsilon(1e-12));
  CHECK(coeff(L, MultiIndex{}, t) == Approx(1.0));
}

TEST_CASE("ledger ratio stays bounded") {
  AnalyticLedger L;
  const double r = ledger_ratio_max(L, 0.0);
  CHECK(std::isfinite(r));
  CHECK(r > 0);
}
