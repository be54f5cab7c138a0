#include "ep/multiindex.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "ep/error.hpp"

namespace ep {

namespace {

BigInt big_factorial(int n) {
  BigInt r = 1;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

double dfact(int n) { return std::tgamma(n + 1.0); }

}  // namespace

BigInt MultiIndex::factorial() const { return big_factorial(a0) * big_factorial(a1) * big_factorial(a2); }

double MultiIndex::factorial_d() const { return dfact(a0) * dfact(a1) * dfact(a2); }

std::ostream& operator<<(std::ostream& os, const MultiIndex& a) {
  return os << '(' << a.a0 << ',' << a.a1 << ',' << a.a2 << ')';
}

MultiIndex unit_index(int i) {
  MultiIndex e;
  e[i] = 1;
  return e;
}

std::vector<MultiIndex> all_indices(int max_order) {
  std::vector<MultiIndex> out;
  for (int d = 0; d <= max_order; ++d)
    for (int a0 = d; a0 >= 0; --a0)
      for (int a1 = d - a0; a1 >= 0; --a1) out.push_back({a0, a1, d - a0 - a1});
  return out;
}

std::size_t graded_position(const MultiIndex& a) {
  const int d = a.abs();
  std::size_t pos = static_cast<std::size_t>(d) * (d + 1) * (d + 2) / 6;
  for (int b0 = d; b0 > a.a0; --b0) pos += d - b0 + 1;
  pos += (d - a.a0) - a.a1;
  return pos;
}

double binomial(const MultiIndex& alpha, const MultiIndex& beta) {
  auto c = [](int n, int k) {
    double r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  return c(alpha.a0, beta.a0) * c(alpha.a1, beta.a1) * c(alpha.a2, beta.a2);
}

double coeff(const AnalyticLedger& ledger, const MultiIndex& alpha, double t) {
  const double tau = ledger.tau(t);
  if (!(tau > 0)) throw Error(ErrorKind::NonPositiveRadius, "tau(t) = " + std::to_string(tau));
  if (alpha.abs() > ledger.max_order)
    throw Error(ErrorKind::OrderCap, "|alpha| exceeds max_order");
  return std::pow(tau, alpha.abs()) * std::pow(double(alpha.bracket()), 9) / alpha.factorial_d();
}

Rational pow_rational(const Rational& x, int n) {
  Rational r = 1;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

Rational coeff_exact(const Rational& tau, const MultiIndex& alpha) {
  return pow_rational(tau, alpha.abs()) * pow_rational(Rational(alpha.bracket()), 9) /
         Rational(alpha.factorial());
}

IndexedSeq::IndexedSeq(int max_order)
    : max_order_(max_order), v_(static_cast<std::size_t>(max_order + 1) * (max_order + 2) * (max_order + 3) / 6, 0.0) {}

double& IndexedSeq::operator[](const MultiIndex& a) {
  if (a.abs() > max_order_) throw Error(ErrorKind::OrderCap, "index beyond sequence cap");
  return v_[graded_position(a)];
}

double IndexedSeq::operator[](const MultiIndex& a) const {
  if (a.abs() > max_order_) throw Error(ErrorKind::OrderCap, "index beyond sequence cap");
  return v_[graded_position(a)];
}

std::string IndexedSeq::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "a0,a1,a2,value\n";
  for (const auto& a : all_indices(max_order_))
    os << a.a0 << ',' << a.a1 << ',' << a.a2 << ',' << (*this)[a] << '\n';
  return os.str();
}

double weighted_norm(const AnalyticLedger& ledger, double t, const IndexedSeq& x, SeqNorm kind) {
  double s = 0;
  for (const auto& a : all_indices(std::min(x.max_order(), ledger.max_order))) {
    const double term = coeff(ledger, a, t) * std::abs(x[a]);
    s += kind == SeqNorm::L1 ? term : term * term;
  }
  return kind == SeqNorm::L1 ? s : std::sqrt(s);
}

IndexedSeq convolve_coeffs(const AnalyticLedger& ledger, const IndexedSeq& x, const IndexedSeq& y) {
  const int cap = ledger.max_order;
  if (x.max_order() < cap || y.max_order() < cap)
    throw Error(ErrorKind::OrderCap, "sequence shorter than ledger cap");
  IndexedSeq z(cap);
  for (const auto& alpha : all_indices(cap)) {
    double s = 0;
    for (int b0 = 0; b0 <= alpha.a0; ++b0)
      for (int b1 = 0; b1 <= alpha.a1; ++b1)
        for (int b2 = 0; b2 <= alpha.a2; ++b2) {
          const MultiIndex beta{b0, b1, b2};
          s += binomial(alpha, beta) * x[beta] * y[alpha - beta];
        }
    z[alpha] = s;
  }
  return z;
}

double ledger_ratio_max(const AnalyticLedger& ledger, double t) {
  double worst = 0;
  for (const auto& a : all_indices(ledger.max_order - 1))
    for (int i = 0; i < 3; ++i) {
      const double n = a.abs();
      const double r = ledger.tau(t) / std::sqrt((n + 1) * (n + 2)) * coeff(ledger, a, t) /
                       coeff(ledger, a + unit_index(i), t);
      worst = std::max(worst, r);
    }
  return worst;
}

Rational faa_sum_1d(int n, const Rational& R) {
  if (n < 1) throw Error(ErrorKind::OrderCap, "n must be >= 1");
  // k[i] is the multiplicity of part i+1
  std::vector<int> k(n, 0);
  Rational total = 0;
  std::function<void(int, int)> rec = [&](int part, int rest) {
    if (part == 0) {
      if (rest != 0) return;
      int s = 0;
      BigInt denom = 1;
      for (int v : k) {
        s += v;
        denom *= big_factorial(v);
      }
      total += Rational(big_factorial(s), denom) * pow_rational(R, s);
      return;
    }
    for (int m = 0; m * part <= rest; ++m) {
      k[part - 1] = m;
      rec(part - 1, rest - m * part);
    }
    k[part - 1] = 0;
  };
  rec(n, n);
  return total;
}

Rational faa_sum_multi(const MultiIndex& alpha, const Rational& R, std::size_t budget) {
  if (alpha.abs() < 1) throw Error(ErrorKind::OrderCap, "|alpha| must be >= 1");
  std::vector<MultiIndex> betas;
  for (int b0 = 0; b0 <= alpha.a0; ++b0)
    for (int b1 = 0; b1 <= alpha.a1; ++b1)
      for (int b2 = 0; b2 <= alpha.a2; ++b2)
        if (b0 + b1 + b2 > 0) betas.push_back({b0, b1, b2});

  // Accumulate by (sum k, prod k!) to keep big-number work out of the leaves.
  std::map<std::pair<int, BigInt>, BigInt> tally;
  std::size_t visited = 0;
  std::function<void(std::size_t, MultiIndex, int, BigInt)> rec = [&](std::size_t i, MultiIndex rest, int ksum,
                                                                        BigInt kfact) {
    if (++visited > budget) throw Error(ErrorKind::OrderCap, "decomposition enumeration over budget");
    if (rest.abs() == 0) {
      tally[{ksum, kfact}] += 1;
      return;
    }
    if (i == betas.size()) return;
    const MultiIndex& b = betas[i];
    MultiIndex r = rest;
    BigInt kf = kfact;
    for (int m = 0;; ++m) {
      if (m > 0) {
        r = r - b;
        kf *= m;
        if (r.a0 < 0 || r.a1 < 0 || r.a2 < 0) break;
      }
      rec(i + 1, r, ksum + m, kf);
    }
  };
  rec(0, alpha, 0, BigInt(1));

  Rational total = 0;
  for (const auto& [key, count] : tally)
    total += Rational(big_factorial(key.first) * count, key.second) * pow_rational(R, key.first);
  return total;
}

Rational faa_series_coeff(const MultiIndex& alpha, const Rational& R) {
  const int n0 = alpha.a0 + 1, n1 = alpha.a1 + 1, n2 = alpha.a2 + 1;
  const std::size_t sz = static_cast<std::size_t>(n0) * n1 * n2;
  auto idx = [&](int i, int j, int k) { return (static_cast<std::size_t>(i) * n1 + j) * n2 + k; };
  // P = g - 1 truncated to the box below alpha
  std::vector<Rational> P(sz, Rational(1));
  P[0] = 0;
  auto mul = [&](const std::vector<Rational>& a, const std::vector<Rational>& b) {
    std::vector<Rational> c(sz, Rational(0));
    for (int i = 0; i < n0; ++i)
      for (int j = 0; j < n1; ++j)
        for (int k = 0; k < n2; ++k) {
          const Rational& av = a[idx(i, j, k)];
          if (av == 0) continue;
          for (int p = 0; i + p < n0; ++p)
            for (int q = 0; j + q < n1; ++q)
              for (int r = 0; k + r < n2; ++r) c[idx(i + p, j + q, k + r)] += av * b[idx(p, q, r)];
        }
    return c;
  };
  std::vector<Rational> term(sz, Rational(0));
  term[0] = 1;
  Rational out = 0;
  for (int k = 1; k <= alpha.abs(); ++k) {
    term = mul(term, P);
    out += pow_rational(R, k) * term[idx(alpha.a0, alpha.a1, alpha.a2)];
  }
  return out;
}

}  // namespace ep
