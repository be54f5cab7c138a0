#include "ep/residual.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "ep/error.hpp"

namespace ep {

AnalyticNorm analytic_norm(const Tangential& tan, const std::vector<Mat>& comps, const std::vector<Mat>& rate,
                           const Vec& w, double tau, int max_order, int tail_order) {
  if (max_order < 0) throw Error(ErrorKind::OrderCap, "analytic norm needs max_order >= 0");
  tail_order = std::max(tail_order, max_order);
  const int n = tan.n(), R = tan.rows();
  // mode energies, grouped by (k1^2, k2^2)
  std::map<std::pair<long, long>, std::array<double, 2>> energy;
  for (int a0 = 0; a0 < 2; ++a0) {
    const auto& fs = a0 == 0 ? comps : rate;
    for (const Mat& f : fs) {
      const Mat C = tan.to_modes(f);
      const Vec e = C.cwiseAbs2() * w * tan.cell();
      for (int r = 0; r < R; ++r) {
        const long k1 = std::lround(-tan.axis().lambda()[r / n]), k2 = std::lround(-tan.axis().lambda()[r % n]);
        energy[{k1, k2}][a0] += e[r];
      }
    }
  }
  AnalyticNorm out;
  for (int a0 = 0; a0 < 2; ++a0) {
    if (a0 == 1 && rate.empty()) break;
    for (int a1 = 0; a0 + a1 <= tail_order; ++a1)
      for (int a2 = 0; a0 + a1 + a2 <= tail_order; ++a2) {
        double sq = 0;
        for (const auto& [k, e] : energy) {
          if (e[a0] == 0) continue;
          if ((a1 > 0 && k.first == 0) || (a2 > 0 && k.second == 0)) continue;
          sq += std::pow(double(k.first), a1) * std::pow(double(k.second), a2) * e[a0];
        }
        if (sq == 0) continue;
        const int order = a0 + a1 + a2;
        const double A = std::exp(order * std::log(tau) + 9 * std::log(1.0 + order) - std::lgamma(a1 + 1.0) -
                                  std::lgamma(a2 + 1.0));
        (order <= max_order ? out.value : out.tail) += A * std::sqrt(sq);
      }
  }
  return out;
}

ResidualEvaluator::ResidualEvaluator(const ExpansionStack& stack, ResidualOptions opt) : stack_(stack), opt_(opt) {
  F_ = stack.fields();
  // eps d_t R along the layer equations: R is at most quadratic in the state, so the
  // central difference along the rate is exact.
  const LayerState rate = F_.rate();
  Fplus_ = stack.derive(F_.s.axpy(1.0, rate));
  Fminus_ = stack.derive(F_.s.axpy(-1.0, rate));
}

void ResidualEvaluator::points(double kappa, std::vector<double>& x3, Vec& w) const {
  if (!(kappa > 0)) throw Error(ErrorKind::Config, "kappa must be positive");
  const double s = std::sqrt(stack_.config().eta0 * kappa);
  const Chebyshev& pz = stack_.prandtl_grid();
  const Chebyshev& ex = stack_.euler_grid();
  const double edge = s * pz.length();
  if (edge >= ex.length()) throw Error(ErrorKind::Config, "boundary layer thicker than the Euler domain");
  // inner: the Prandtl nodes; outer: Chebyshev nodes on [edge, X_max]
  const Chebyshev outer(ex.n(), ex.length() - edge);
  const int ni = pz.size(), no = outer.size() - 1;
  x3.resize(ni + no);
  w.resize(ni + no);
  for (int j = 0; j < ni; ++j) {
    x3[j] = s * pz.x()[j];
    w[j] = s * pz.w()[j];
  }
  x3[ni - 1] = edge;
  w[ni - 1] += outer.w()[0];
  for (int j = 1; j < outer.size(); ++j) {
    x3[ni + j - 1] = std::min(edge + outer.x()[j], ex.length());
    w[ni + j - 1] = outer.w()[j];
  }
}

ResidualEvaluator::Fields ResidualEvaluator::evaluate(const LayerFields& F, double kappa, bool structural,
                                                      bool with_groups) const {
  const int N = stack_.N();
  const double s = std::sqrt(stack_.config().eta0 * kappa);
  std::vector<double> x3;
  Vec w;
  points(kappa, x3, w);
  const Sample S = stack_.point_sample(F, x3, s);
  const int R = stack_.tangential().rows(), np = static_cast<int>(x3.size());
  const Mat Z = Mat::Zero(R, np);
  Fields out;
  out.ns.assign(3, Z);
  out.div.assign(1, Z);
  auto sp = [&](int k) { return std::pow(s, k); };
  const Equation eqs[3] = {Equation::Tangential1, Equation::Tangential2, Equation::Normal};

  // divergence: Euler defect plus Prandtl compatibility defect, order by order
  std::vector<Mat> euler_div(N + 1), prandtl_div(N + 1);
  for (int m = 0; m <= N; ++m) {
    euler_div[m] = S.E[m].u[0].d1 + S.E[m].u[1].d2 + S.E[m].v.dn;
    prandtl_div[m] = S.P[m].u[0].d1 + S.P[m].u[1].d2 + S.P[m + 1].v.dn;
  }

  if (structural) {
    auto add_group = [&](const std::string& key, int comp, const Mat& v) {
      if (!with_groups) return;
      auto& g = out.groups[key];
      if (g.empty()) g.assign(4, Z);
      g[comp] += v;
    };
    for (int c = 0; c < 3; ++c)
      enumerate_terms(S, eqs[c], -1, [&](const TermTag& t, const Mat& v) {
        if (absorbed(t, eqs[c], N)) return;
        const Mat contrib = sp(t.power) * v;
        out.ns[c] += contrib;
        add_group(std::string(group_name(t.group)) + (t.remainder ? "_taylor_remainder" : ""), c, contrib);
      });
    // normal Prandtl velocities at orders N and N+1 are never balanced
    for (int m = N; m <= N + 1; ++m) {
      const Mat contrib = sp(m) * S.dvp[m];
      out.ns[2] += contrib;
      add_group(group_name(TermGroup::TimeDerivative), 2, contrib);
    }
    // closure of the Prandtl pressure, exact on the Prandtl grid, interpolated here
    for (int m = 0; m <= N - 1; ++m) {
      Mat G = S.dvp[m];
      enumerate_terms(S, Equation::Normal, m, [&](const TermTag& t, const Mat& v) {
        if (t.cls == TermClass::Prandtl && absorbed(t, Equation::Normal, N)) G += v;
      });
      out.ns[2] += sp(m) * G;
      add_group(group_name(TermGroup::ClosureDefect), 2, sp(m) * G);
    }
    for (int m = 0; m <= N; ++m) {
      out.div[0] += sp(m) * (euler_div[m] + prandtl_div[m]);
      add_group("euler_divergence", 3, sp(m) * euler_div[m]);
      add_group("prandtl_compatibility", 3, sp(m) * prandtl_div[m]);
    }
    return out;
  }

  // direct route: assemble and differentiate
  const ExpansionStack::LocalRates L = stack_.local_rates(S);
  struct Assembled {
    Mat v, d1, d2, d3, lap, dt;
  };
  auto assemble = [&](auto euler_jet, auto prandtl_jet, int plo, int phi, auto euler_rate, auto prandtl_rate) {
    Assembled A{Z, Z, Z, Z, Z, Z};
    for (int i = 0; i <= N; ++i) {
      const Jet& J = euler_jet(i);
      const double f = sp(i);
      A.v += f * J.v;
      A.d1 += f * J.d1;
      A.d2 += f * J.d2;
      A.d3 += f * J.dn;
      A.lap += f * (J.lap + J.dnn);
      A.dt += f * euler_rate(i);
    }
    for (int i = plo; i <= phi; ++i) {
      const Jet& J = prandtl_jet(i);
      const double f = sp(i);
      A.v += f * J.v;
      A.d1 += f * J.d1;
      A.d2 += f * J.d2;
      A.d3 += (f / s) * J.dn;
      A.lap += f * (J.lap + J.dnn / (s * s));
      A.dt += f * prandtl_rate(i);
    }
    return A;
  };
  std::array<Assembled, 2> U;
  for (int c = 0; c < 2; ++c)
    U[c] = assemble([&](int i) -> const Jet& { return S.E[i].u[c]; }, [&](int i) -> const Jet& { return S.P[i].u[c]; },
                    0, N, [&](int i) -> const Mat& { return L.due[i][c]; },
                    [&](int i) -> const Mat& { return L.dup[i][c]; });
  const Assembled V = assemble([&](int i) -> const Jet& { return S.E[i].v; },
                               [&](int i) -> const Jet& { return S.P[i].v; }, 1, N + 1,
                               [&](int i) -> const Mat& { return L.dve[i]; },
                               [&](int i) -> const Mat& { return S.dvp[i]; });
  Mat p1 = Z, p2 = Z, p3 = Z;
  for (int i = 0; i <= N; ++i) {
    p1 += sp(i) * (S.E[i].p1 + S.P[i].p1);
    p2 += sp(i) * (S.E[i].p2 + S.P[i].p2);
    p3 += sp(i) * (S.E[i].pn + S.P[i].pn / s);
  }
  const Mat* grad[3] = {&p1, &p2, &p3};
  for (int c = 0; c < 3; ++c) {
    const Assembled& Y = c < 2 ? U[c] : V;
    out.ns[c] = Y.dt + U[0].v.cwiseProduct(Y.d1) + U[1].v.cwiseProduct(Y.d2) + V.v.cwiseProduct(Y.d3) -
                s * s * Y.lap + *grad[c];
  }
  out.div[0] = U[0].d1 + U[1].d2 + V.d3;
  return out;
}

ResidualReport ResidualEvaluator::report(double kappa, bool structural) const {
  ResidualReport r;
  r.kappa = kappa;
  r.t = stack_.time();
  r.N = stack_.N();
  std::vector<double> x3;
  Vec w;
  points(kappa, x3, w);
  const Fields F0 = evaluate(F_, kappa, structural, structural);
  const Fields Fp = evaluate(Fplus_, kappa, structural, structural);
  const Fields Fm = evaluate(Fminus_, kappa, structural, structural);
  const double eps = opt_.epsilon, tau = opt_.ledger.tau0;
  const int mo = opt_.ledger.max_order, to = opt_.tail_order;
  auto rate = [&](const std::vector<Mat>& p, const std::vector<Mat>& m) {
    std::vector<Mat> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = 0.5 * eps * (p[i] - m[i]);
    return out;
  };
  const auto& T = stack_.tangential();
  const std::vector<Mat> ns_rate = rate(Fp.ns, Fm.ns), div_rate = rate(Fp.div, Fm.div);
  const AnalyticNorm par = analytic_norm(T, {F0.ns[0], F0.ns[1]}, {ns_rate[0], ns_rate[1]}, w, tau, mo, to);
  const AnalyticNorm nor = analytic_norm(T, {F0.ns[2]}, {ns_rate[2]}, w, tau, mo, to);
  const AnalyticNorm all = analytic_norm(T, F0.ns, ns_rate, w, tau, mo, to);
  const AnalyticNorm dv = analytic_norm(T, F0.div, div_rate, w, tau, mo, to);
  r.ns_par = par.value;
  r.ns_normal = nor.value;
  r.ns = all.value;
  r.div = dv.value;
  r.total = r.ns + r.div;
  r.tail = all.tail + dv.tail;
  for (const Mat& m : F0.ns) r.sup = std::max(r.sup, m.cwiseAbs().maxCoeff());
  r.sup = std::max(r.sup, F0.div[0].cwiseAbs().maxCoeff());
  if (structural)
    for (const auto& [key, g] : F0.groups) {
      const auto& gp = Fp.groups.at(key);
      const auto& gm = Fm.groups.at(key);
      r.groups[key] = analytic_norm(T, g, rate(gp, gm), w, tau, mo, to).value;
    }
  if (!std::isfinite(r.total)) throw Error(ErrorKind::BlowUp, "non-finite residual norm");
  return r;
}

ResidualReport ResidualEvaluator::direct(double kappa) const { return report(kappa, false); }
ResidualReport ResidualEvaluator::structural(double kappa) const { return report(kappa, true); }

double ResidualEvaluator::route_gap(double kappa) const {
  std::vector<double> x3;
  Vec w;
  points(kappa, x3, w);
  const auto& T = stack_.tangential();
  const double tau = opt_.ledger.tau0;
  const int mo = opt_.ledger.max_order;
  double diff = 0, ref = 0;
  for (const LayerFields* F : {&F_, &Fplus_, &Fminus_}) {
    const Fields a = evaluate(*F, kappa, false, false), b = evaluate(*F, kappa, true, false);
    std::vector<Mat> d, ref_f;
    for (int c = 0; c < 3; ++c) {
      d.push_back(a.ns[c] - b.ns[c]);
      ref_f.push_back(b.ns[c]);
    }
    d.push_back(a.div[0] - b.div[0]);
    ref_f.push_back(b.div[0]);
    diff = std::max(diff, analytic_norm(T, d, {}, w, tau, mo, mo).value);
    ref = std::max(ref, analytic_norm(T, ref_f, {}, w, tau, mo, mo).value);
  }
  return ref > 0 ? diff / ref : diff;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = static_cast<int>(x.size());
  if (n < 2 || y.size() != x.size()) throw Error(ErrorKind::Config, "slope fit needs two or more points");
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (int i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

SweepResult kappa_sweep(const ExpansionStack& stack, const std::vector<double>& kappas, const ResidualOptions& opt) {
  if (kappas.size() < 3) throw Error(ErrorKind::Config, "the kappa sweep needs at least three values");
  SweepResult out;
  out.N = stack.N();
  const ResidualEvaluator ev(stack, opt);
  for (double k : kappas) {
    SweepPoint p;
    p.kappa = k;
    p.direct = ev.direct(k);
    p.structural = ev.structural(k);
    p.gap = ev.route_gap(k);
    out.points.push_back(std::move(p));
  }
  std::vector<SweepPoint> sorted = out.points;
  std::sort(sorted.begin(), sorted.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.kappa < b.kappa; });
  std::vector<double> xs, ys, xa, ya;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    xa.push_back(sorted[i].kappa);
    ya.push_back(sorted[i].direct.total);
    if (i < 3) {
      xs.push_back(sorted[i].kappa);
      ys.push_back(sorted[i].direct.total);
    }
  }
  out.slope = loglog_slope(xs, ys);
  out.slope_all = loglog_slope(xa, ya);
  for (const auto& [key, v] : sorted[0].structural.groups) {
    std::vector<double> gx, gy;
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = sorted[i].structural.groups.count(key) ? sorted[i].structural.groups.at(key) : 0.0;
      if (g > 0) {
        gx.push_back(sorted[i].kappa);
        gy.push_back(g);
      }
    }
    if (gx.size() >= 2) out.group_slopes[key] = loglog_slope(gx, gy);
  }
  return out;
}

std::string SweepResult::csv() const {
  std::ostringstream os;
  os << "kappa,N,ns_par,ns_normal,div,total\n" << std::setprecision(12);
  for (const auto& p : points)
    os << p.kappa << ',' << N << ',' << p.direct.ns_par << ',' << p.direct.ns_normal << ',' << p.direct.div << ','
       << p.direct.total << '\n';
  return os.str();
}

}  // namespace ep
