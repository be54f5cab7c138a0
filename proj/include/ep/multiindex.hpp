#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace ep {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Orders of (eps d_t, d_x1, d_x2).
struct MultiIndex {
  int a0 = 0, a1 = 0, a2 = 0;

  int abs() const { return a0 + a1 + a2; }
  int bracket() const { return 1 + abs(); }
  int operator[](int i) const { return i == 0 ? a0 : (i == 1 ? a1 : a2); }
  int& operator[](int i) { return i == 0 ? a0 : (i == 1 ? a1 : a2); }
  BigInt factorial() const;
  double factorial_d() const;
  bool le(const MultiIndex& o) const { return a0 <= o.a0 && a1 <= o.a1 && a2 <= o.a2; }

  friend MultiIndex operator+(MultiIndex x, const MultiIndex& y) {
    return {x.a0 + y.a0, x.a1 + y.a1, x.a2 + y.a2};
  }
  friend MultiIndex operator-(MultiIndex x, const MultiIndex& y) {
    return {x.a0 - y.a0, x.a1 - y.a1, x.a2 - y.a2};
  }
  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
  // graded lexicographic: degree first, then (a0, a1) descending
  friend std::strong_ordering operator<=>(const MultiIndex& x, const MultiIndex& y) {
    if (auto c = x.abs() <=> y.abs(); c != 0) return c;
    if (auto c = y.a0 <=> x.a0; c != 0) return c;
    return y.a1 <=> x.a1;
  }
};

std::ostream& operator<<(std::ostream& os, const MultiIndex& a);

MultiIndex unit_index(int i);

// All indices with |alpha| <= max_order in graded lexicographic order.
std::vector<MultiIndex> all_indices(int max_order);
std::size_t graded_position(const MultiIndex& a);

// alpha! / (beta! gamma!) for beta + gamma = alpha
double binomial(const MultiIndex& alpha, const MultiIndex& beta);

struct AnalyticLedger {
  double tau0 = 0.1;
  double M0 = 0.1;
  int max_order = 8;

  double tau(double t) const { return tau0 - M0 * t; }
};

// tau(t)^{|alpha|} <alpha>^9 / alpha!
double coeff(const AnalyticLedger& ledger, const MultiIndex& alpha, double t);
Rational coeff_exact(const Rational& tau, const MultiIndex& alpha);

// Sequence indexed by multi-indices up to a cap, stored in graded order.
class IndexedSeq {
 public:
  IndexedSeq() = default;
  explicit IndexedSeq(int max_order);

  int max_order() const { return max_order_; }
  std::size_t size() const { return v_.size(); }
  double& operator[](const MultiIndex& a);
  double operator[](const MultiIndex& a) const;
  double& at_pos(std::size_t p) { return v_[p]; }
  double at_pos(std::size_t p) const { return v_[p]; }
  const std::vector<double>& values() const { return v_; }

  std::string to_csv() const;

 private:
  int max_order_ = 0;
  std::vector<double> v_;
};

enum class SeqNorm { L1, L2 };

// sum_alpha A_alpha(t) x_alpha, or the l2 version sqrt(sum (A_alpha x_alpha)^2)
double weighted_norm(const AnalyticLedger& ledger, double t, const IndexedSeq& x, SeqNorm kind);

// z_alpha = sum_{beta+gamma=alpha} alpha!/(beta! gamma!) x_beta y_gamma
IndexedSeq convolve_coeffs(const AnalyticLedger& ledger, const IndexedSeq& x, const IndexedSeq& y);

// max over alpha, i of tau/sqrt((|alpha|+1)(|alpha|+2)) * A_alpha / A_{alpha+e_i}
double ledger_ratio_max(const AnalyticLedger& ledger, double t);

// Exhaustive partition sum; equals R(R+1)^{n-1}.
Rational faa_sum_1d(int n, const Rational& R);

// Sum over decompositions k1 b1 + ... + ks bs = alpha with distinct nonzero b_i.
Rational faa_sum_multi(const MultiIndex& alpha, const Rational& R, std::size_t budget = 50'000'000);

// Independent route: Taylor coefficient of 1/(1 - R(g - 1)), g = prod 1/(1 - x_i).
Rational faa_series_coeff(const MultiIndex& alpha, const Rational& R);

Rational pow_rational(const Rational& x, int n);

}  // namespace ep
