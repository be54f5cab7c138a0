#include "ep/fluid.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "ep/error.hpp"

namespace ep {

namespace {

Mat zeros(int r, int c) { return Mat::Zero(r, c); }

double factorial(int k) {
  double f = 1;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// x^k / k! per column
Eigen::RowVectorXd taylor_row(const Vec& x, int k) {
  Eigen::RowVectorXd r(x.size());
  const double fk = factorial(k);
  for (int j = 0; j < x.size(); ++j) r[j] = std::pow(x[j], k) / fk;
  return r;
}

}  // namespace

double Profile::operator()(double x) const {
  if (kind == Kind::Erfc) return c * std::erfc(x / width);
  const double xp = power == 0 ? 1.0 : std::pow(x, power);
  return c * xp * std::exp(-lambda * x - gamma * x * x);
}

double evaluate(const ComponentData& d, double x1, double x2, double normal) {
  double v = 0;
  for (const auto& t : d) {
    double a = 0;
    for (const auto& p : t.profile) a += p(normal);
    const double ph = t.k1 * x1 + t.k2 * x2;
    v += a * (t.sine ? std::sin(ph) : std::cos(ph));
  }
  return v;
}

void InitialData::validate(int N, int K_max) const {
  if (!base_normal_zero)
    throw Error(ErrorKind::Config, "data.base_normal_zero: only shear bases with v_e^0 = 0 are supported");
  auto check_profiles = [](const std::vector<Profile>& ps, const std::string& where) {
    for (const auto& p : ps) {
      if (!std::isfinite(p.c) || !std::isfinite(p.lambda) || !std::isfinite(p.gamma) || p.power < 0)
        throw Error(ErrorKind::Config, where + ": bad profile parameters");
      if (p.kind == Profile::Kind::Erfc && !(p.width > 0))
        throw Error(ErrorKind::Config, where + ": erfc width must be positive");
      if (p.kind == Profile::Kind::PowerExp && (p.gamma < 0 || (p.gamma == 0 && p.lambda < 0)))
        throw Error(ErrorKind::Config, where + ": profile must not grow");
    }
  };
  for (int c = 0; c < 2; ++c) check_profiles(shear[c], "data.shear");
  auto check_layer = [&](const std::map<int, LayerData>& m, int lo, const std::string& what, bool mean_zero) {
    for (const auto& [order, layer] : m) {
      const std::string where = "data." + what + "[" + std::to_string(order) + "]";
      if (order < lo || order > N) throw Error(ErrorKind::Config, where + ": order outside 0..N");
      for (const auto& comp : layer)
        for (const auto& t : comp) {
          if (std::abs(t.k1) > K_max || std::abs(t.k2) > K_max)
            throw Error(ErrorKind::Config, where + ": wavenumber above K_max");
          if (mean_zero && t.k1 == 0 && t.k2 == 0 && !t.sine)
            throw Error(ErrorKind::Config, where + ": tangential Euler data must have zero mean");
          check_profiles(t.profile, where);
        }
    }
  };
  check_layer(euler, 1, "euler", true);
  check_layer(prandtl, 0, "prandtl", false);
  // every layer's wall value must cancel the Euler slip of the same order
  for (int m = 0; m <= N; ++m)
    for (int c = 0; c < 2; ++c) {
      double worst = 0;
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
          const double x1 = 0.9 * i, x2 = 0.9 * j;
          double e = 0;
          if (m == 0)
            for (const auto& p : shear[c]) e += p(0.0);
          else if (auto it = euler.find(m); it != euler.end())
            e = ep::evaluate(it->second[c], x1, x2, 0.0);
          double w = 0;
          if (auto it = prandtl.find(m); it != prandtl.end()) w = ep::evaluate(it->second[c], x1, x2, 0.0);
          worst = std::max(worst, std::abs(e + w));
        }
      if (worst > 1e-10) {
        const std::string where = "data.prandtl[" + std::to_string(m) + "].u" + std::to_string(c + 1);
        throw Error(ErrorKind::Config, prandtl.count(m) ? where + ": wall value does not cancel the Euler slip"
                                                        : where + ": missing, needed to cancel the Euler slip");
      }
    }
}

InitialData InitialData::pure_shear() {
  InitialData d;
  d.shear[0] = {Profile::constant(1.0), Profile::power_exp(0.5, 1, 0, 1)};
  d.prandtl[0][0] = {DataTerm{0, 0, false, {Profile::erfc(-1.0, 2.0)}}};
  return d;
}

InitialData InitialData::shear_default() {
  InitialData d = pure_shear();
  // u_e^1 = g(x3) (-sin, sin)(x1 + x2): divergence free along the wall
  const std::vector<Profile> g = {Profile::power_exp(0.2, 0, 1, 0), Profile::power_exp(0.2, 1, 1, 0)};
  std::vector<Profile> gm = g;
  for (auto& p : gm) p.c = -p.c;
  d.euler[1][0] = {DataTerm{1, 1, true, gm}};
  d.euler[1][1] = {DataTerm{1, 1, true, g}};
  // matching layer: u_p^1(0) = -u_e^1(0)
  d.prandtl[1][0] = {DataTerm{1, 1, true, {Profile::erfc(0.2, 2.0)}}};
  d.prandtl[1][1] = {DataTerm{1, 1, true, {Profile::erfc(-0.2, 2.0)}}};
  return d;
}

void FluidConfig::validate() const {
  if (N < 0 || N > 6) throw Error(ErrorKind::Config, "scales.N must lie in 0..6");
  if (!(eta0 > 0)) throw Error(ErrorKind::Config, "eta0 must be positive");
  if (!(dt > 0)) throw Error(ErrorKind::Config, "run.dt must be positive");
  if (grid.K_max < 0 || grid.K_max > 32) throw Error(ErrorKind::Config, "grids.K_max must lie in 0..32");
  if (grid.n_x < 8 || grid.n_z < 8) throw Error(ErrorKind::Config, "grids: need at least 8 normal nodes");
  if (!(grid.X_max > 0) || !(grid.Z_max > 0)) throw Error(ErrorKind::Config, "grids: X_max and Z_max must be positive");
  data.validate(N, grid.K_max);
}

LayerState LayerState::axpy(double a, const LayerState& o) const {
  LayerState r = *this;
  for (std::size_t m = 0; m < ue.size(); ++m)
    for (int c = 0; c < 2; ++c) {
      r.ue[m][c] += a * o.ue[m][c];
      r.up[m][c] += a * o.up[m][c];
    }
  return r;
}

LayerState LayerFields::rate() const {
  LayerState r;
  r.ue = due;
  r.up = dup;
  return r;
}

const char* group_name(TermGroup g) {
  switch (g) {
    case TermGroup::EulerEuler: return "euler_euler";
    case TermGroup::PrandtlTimesEuler: return "prandtl_times_euler";
    case TermGroup::EulerTimesPrandtl: return "euler_times_prandtl";
    case TermGroup::PrandtlPrandtl: return "prandtl_prandtl";
    case TermGroup::NormalPrandtlEuler: return "normal_prandtl_euler";
    case TermGroup::NormalEulerPrandtl: return "normal_euler_prandtl";
    case TermGroup::NormalPrandtlPrandtl: return "normal_prandtl_prandtl";
    case TermGroup::ViscousEuler: return "viscous_euler";
    case TermGroup::ViscousPrandtl: return "viscous_prandtl";
    case TermGroup::PressureEuler: return "pressure_euler";
    case TermGroup::PressurePrandtl: return "pressure_prandtl";
    case TermGroup::TimeDerivative: return "time_derivative";
    case TermGroup::ClosureDefect: return "closure_defect";
    case TermGroup::Count: break;
  }
  return "?";
}

bool absorbed(const TermTag& t, Equation eq, int N) {
  if (t.remainder || t.tail || t.order < 0 || t.order > N) return false;
  if (eq == Equation::Normal && t.cls == TermClass::Prandtl) return t.order <= N - 1;
  return true;
}

// ---------------------------------------------------------------------------
// Term enumeration.
//
// Y is the transported quantity: a tangential velocity component or the normal
// velocity. Euler layers are read at x3, Prandtl layers at z = x3/s; every
// Euler factor multiplying a Prandtl factor is expanded in x3 about the wall,
// the pieces of order <= N are visited separately and the rest is visited as
// one remainder (the full factor minus its truncated Taylor polynomial).

void enumerate_terms(const Sample& S, Equation eq, int filt, const TermSink& sink) {
  const int N = S.N;
  const bool normal = eq == Equation::Normal;
  const int c = eq == Equation::Tangential2 ? 1 : 0;
  auto want = [&](int order) { return filt < 0 || filt == order; };
  auto tag = [](TermClass cls, TermKind kind, TermGroup g, int order, int power, bool tail, bool rem) {
    return TermTag{cls, kind, g, order, power, tail, rem};
  };

  // Y ranges
  const int ye_lo = 0, ye_hi = N;
  const int yp_lo = normal ? 1 : 0, yp_hi = normal ? N + 1 : N;
  auto Ye = [&](int j) -> const Jet& { return normal ? S.E[j].v : S.E[j].u[c]; };
  auto Yp = [&](int j) -> const Jet& { return normal ? S.P[j].v : S.P[j].u[c]; };
  // wall jets of Y and of its tangential derivatives
  auto WY = [&](int j, int k) -> const Vec& { return normal ? S.W.v[j][k] : S.W.u[j][k][c]; };
  auto WYa = [&](int a, int j, int k) -> const Vec& {
    if (normal) return a == 0 ? S.W.v1[j][k] : S.W.v2[j][k];
    return a == 0 ? S.W.u1[j][k][c] : S.W.u2[j][k][c];
  };
  auto yp_tail = [&](int j) { return normal && j == N + 1; };
  const int rows = S.euler ? static_cast<int>(S.E[0].u[0].v.rows()) : static_cast<int>(S.P[0].u[0].v.rows());
  const int cols = static_cast<int>(S.euler ? S.x3.size() : S.z.size());

  // truncated wall expansion sum_{k<=K} w_k x^k/k! (w supplied by jet(k))
  auto taylor = [&](const std::function<const Vec&(int)>& jet, int K, const Vec& x) {
    Mat acc = zeros(rows, cols);
    for (int k = 0; k <= K; ++k) acc += jet(k) * taylor_row(x, k);
    return acc;
  };

  // (a) u . grad_par Y
  for (int i = 0; i <= N; ++i) {
    for (int j = ye_lo; j <= ye_hi; ++j) {
      if (S.euler && want(i + j)) {
        Mat v = S.E[i].u[0].v.cwiseProduct(Ye(j).d1) + S.E[i].u[1].v.cwiseProduct(Ye(j).d2);
        sink(tag(TermClass::Euler, TermKind::Advection, TermGroup::EulerEuler, i + j, i + j, false, false), v);
      }
      if (S.prandtl) {
        const int base = i + j, K = N - base;
        for (int k = 0; k <= K; ++k) {
          if (!want(base + k)) continue;
          const Eigen::RowVectorXd zk = taylor_row(S.z, k);
          Mat v = S.P[i].u[0].v.cwiseProduct(WYa(0, j, k) * zk) + S.P[i].u[1].v.cwiseProduct(WYa(1, j, k) * zk);
          sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::PrandtlTimesEuler, base + k, base + k, false, false), v);
        }
        if (S.remainders && filt < 0) {
          Mat v = zeros(rows, cols);
          for (int a = 0; a < 2; ++a) {
            const Mat full = a == 0 ? Ye(j).d1 : Ye(j).d2;
            v += S.P[i].u[a].v.cwiseProduct(full - taylor([&](int k) -> const Vec& { return WYa(a, j, k); }, K, S.x3));
          }
          sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::PrandtlTimesEuler, N + 1, base, false, true), v);
        }
      }
    }
    if (!S.prandtl) continue;
    for (int j = yp_lo; j <= yp_hi; ++j) {
      const int base = i + j, K = N - base;
      for (int k = 0; k <= K; ++k) {
        if (!want(base + k)) continue;
        const Eigen::RowVectorXd zk = taylor_row(S.z, k);
        Mat v = (S.W.u[i][k][0] * zk).cwiseProduct(Yp(j).d1) + (S.W.u[i][k][1] * zk).cwiseProduct(Yp(j).d2);
        sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::EulerTimesPrandtl, base + k, base + k, yp_tail(j), false), v);
      }
      if (S.remainders && filt < 0) {
        Mat v = zeros(rows, cols);
        for (int a = 0; a < 2; ++a) {
          const Mat e = S.E[i].u[a].v - taylor([&](int k) -> const Vec& { return S.W.u[i][k][a]; }, K, S.x3);
          v += e.cwiseProduct(a == 0 ? Yp(j).d1 : Yp(j).d2);
        }
        sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::EulerTimesPrandtl, N + 1, base, yp_tail(j), true), v);
      }
      if (want(i + j)) {
        Mat v = S.P[i].u[0].v.cwiseProduct(Yp(j).d1) + S.P[i].u[1].v.cwiseProduct(Yp(j).d2);
        sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::PrandtlPrandtl, i + j, i + j, yp_tail(j), false), v);
      }
    }
  }

  // (b) v d3 Y; on Prandtl factors d3 = s^{-1} dz
  for (int j = ye_lo; j <= ye_hi; ++j) {
    for (int i = 0; i <= N; ++i)
      if (S.euler && want(i + j)) {
        Mat v = S.E[i].v.v.cwiseProduct(Ye(j).dn);
        sink(tag(TermClass::Euler, TermKind::Advection, TermGroup::EulerEuler, i + j, i + j, false, false), v);
      }
    if (!S.prandtl) continue;
    for (int i = 1; i <= N + 1; ++i) {
      const bool tail = i == N + 1;
      const int base = i + j, K = N - base;
      for (int k = 0; k <= K; ++k) {
        if (!want(base + k)) continue;
        Mat v = S.P[i].v.v.cwiseProduct(WY(j, k + 1) * taylor_row(S.z, k));
        sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::NormalPrandtlEuler, base + k, base + k, tail, false), v);
      }
      if (S.remainders && filt < 0) {
        const Mat e = Ye(j).dn - taylor([&](int k) -> const Vec& { return WY(j, k + 1); }, K, S.x3);
        sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::NormalPrandtlEuler, N + 1, base, tail, true),
             S.P[i].v.v.cwiseProduct(e));
      }
    }
  }
  if (S.prandtl) {
    for (int j = yp_lo; j <= yp_hi; ++j) {
      for (int i = 0; i <= N; ++i) {
        const int base = i + j - 1, K = N - base;
        for (int k = 0; k <= K; ++k) {
          if (!want(base + k)) continue;
          Mat v = (S.W.v[i][k] * taylor_row(S.z, k)).cwiseProduct(Yp(j).dn);
          sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::NormalEulerPrandtl, base + k, base + k, yp_tail(j), false), v);
        }
        if (S.remainders && filt < 0) {
          const Mat e = S.E[i].v.v - taylor([&](int k) -> const Vec& { return S.W.v[i][k]; }, K, S.x3);
          sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::NormalEulerPrandtl, N + 1, base, yp_tail(j), true),
               e.cwiseProduct(Yp(j).dn));
        }
      }
      for (int i = 1; i <= N + 1; ++i) {
        const int order = i + j - 1;
        if (!want(order)) continue;
        Mat v = S.P[i].v.v.cwiseProduct(Yp(j).dn);
        sink(tag(TermClass::Prandtl, TermKind::Advection, TermGroup::NormalPrandtlPrandtl, order, order, i == N + 1 || yp_tail(j), false), v);
      }
    }
  }

  // (c) -s^2 Laplacian
  if (S.euler)
    for (int j = ye_lo; j <= ye_hi; ++j)
      if (want(j + 2))
        sink(tag(TermClass::Euler, TermKind::Viscous, TermGroup::ViscousEuler, j + 2, j + 2, false, false),
             -(Ye(j).lap + Ye(j).dnn));
  if (S.prandtl)
    for (int j = yp_lo; j <= yp_hi; ++j) {
      if (want(j + 2))
        sink(tag(TermClass::Prandtl, TermKind::Viscous, TermGroup::ViscousPrandtl, j + 2, j + 2, yp_tail(j), false), -Yp(j).lap);
      if (want(j))
        sink(tag(TermClass::Prandtl, TermKind::Viscous, TermGroup::ViscousPrandtl, j, j, yp_tail(j), false), -Yp(j).dnn);
    }

  // (d) pressure
  for (int j = 0; j <= N; ++j) {
    if (S.euler && want(j)) {
      const Mat& p = normal ? S.E[j].pn : (c == 0 ? S.E[j].p1 : S.E[j].p2);
      sink(tag(TermClass::Euler, TermKind::Pressure, TermGroup::PressureEuler, j, j, false, false), p);
    }
    if (S.prandtl) {
      const int order = normal ? j - 1 : j;
      if (!want(order)) continue;
      const Mat& p = normal ? S.P[j].pn : (c == 0 ? S.P[j].p1 : S.P[j].p2);
      sink(tag(TermClass::Prandtl, TermKind::Pressure, TermGroup::PressurePrandtl, order, order, false, false), p);
    }
  }
}

// ---------------------------------------------------------------------------

ExpansionStack::ExpansionStack(FluidConfig cfg)
    : cfg_(std::move(cfg)),
      tan_((cfg_.validate(), cfg_.grid.K_max)),
      ex_(cfg_.grid.n_x, cfg_.grid.X_max),
      pz_(cfg_.grid.n_z, cfg_.grid.Z_max) {
  // pressure: Neumann at the wall; decaying Robin condition at X_max (Dirichlet for the mean)
  const int m = ex_.size(), n = ex_.n();
  std::map<long, int> seen;
  poisson_index_.assign(tan_.rows(), 0);
  for (int r = 0; r < tan_.rows(); ++r) {
    const double k2 = tan_.mode_k2(r);
    const long key = std::lround(k2);
    auto it = seen.find(key);
    if (it == seen.end()) {
      Mat A = ex_.D2() - k2 * Mat::Identity(m, m);
      A.row(0) = ex_.D().row(0);
      if (k2 > 0.5) {
        A.row(n) = ex_.D().row(n);
        A(n, n) += std::sqrt(k2);
      } else {
        A.row(n).setZero();
        A(n, n) = 1;
      }
      it = seen.emplace(key, static_cast<int>(poisson_lu_.size())).first;
      poisson_lu_.emplace_back(A);
    }
    poisson_index_[r] = it->second;
  }
  init_state();
}

void ExpansionStack::init_state() {
  const int N = cfg_.N, R = tan_.rows();
  state_.ue.assign(N + 1, {});
  state_.up.assign(N + 1, {});
  for (int m = 0; m <= N; ++m)
    for (int c = 0; c < 2; ++c) {
      Mat& ue = state_.ue[m][c];
      ue = zeros(R, ex_.size());
      for (int r = 0; r < R; ++r)
        for (int j = 0; j < ex_.size(); ++j) {
          const double x3 = ex_.x()[j];
          if (m == 0) {
            double b = 0;
            for (const auto& p : cfg_.data.shear[c]) b += p(x3);
            ue(r, j) = b;
          } else if (auto it = cfg_.data.euler.find(m); it != cfg_.data.euler.end()) {
            ue(r, j) = evaluate(it->second[c], tan_.x1(r), tan_.x2(r), x3);
          }
        }
      Mat& up = state_.up[m][c];
      up = zeros(R, pz_.size());
      if (auto it = cfg_.data.prandtl.find(m); it != cfg_.data.prandtl.end())
        for (int r = 0; r < R; ++r)
          for (int j = 0; j < pz_.size(); ++j) up(r, j) = evaluate(it->second[c], tan_.x1(r), tan_.x2(r), pz_.x()[j]);
    }
  t_ = 0;
}

Jet ExpansionStack::euler_jet(const Mat& f) const {
  Jet J;
  J.v = f;
  J.d1 = tan_.d1(f);
  J.d2 = tan_.d2(f);
  J.dn = f * ex_.D().transpose();
  J.dnn = f * ex_.D2().transpose();
  J.lap = tan_.d1(J.d1) + tan_.d2(J.d2);
  return J;
}

Jet ExpansionStack::prandtl_jet(const Mat& f) const {
  Jet J;
  J.v = f;
  J.d1 = tan_.d1(f);
  J.d2 = tan_.d2(f);
  J.dn = f * pz_.D().transpose();
  J.dnn = f * pz_.D2().transpose();
  J.lap = tan_.d1(J.d1) + tan_.d2(J.d2);
  return J;
}

WallJets ExpansionStack::wall_jets(const LayerFields& F) const {
  const int N = cfg_.N, K = N + 2;
  WallJets W;
  W.u.assign(N + 1, std::vector<std::array<Vec, 2>>(K + 1));
  W.u1 = W.u;
  W.u2 = W.u;
  W.v.assign(N + 1, std::vector<Vec>(K + 1));
  W.v1 = W.v;
  W.v2 = W.v;
  for (int k = 0; k <= K; ++k) {
    const Vec wd = ex_.wall_derivative(k);
    for (int m = 0; m <= N; ++m) {
      for (int c = 0; c < 2; ++c) {
        const Mat w = F.s.ue[m][c] * wd;
        W.u[m][k][c] = w;
        W.u1[m][k][c] = tan_.d1(w);
        W.u2[m][k][c] = tan_.d2(w);
      }
      const Mat w = F.ve[m] * wd;
      W.v[m][k] = w;
      W.v1[m][k] = tan_.d1(w);
      W.v2[m][k] = tan_.d2(w);
    }
  }
  return W;
}

Sample ExpansionStack::euler_sample(const LayerFields& F) const {
  Sample S;
  S.N = cfg_.N;
  S.euler = true;
  S.x3 = ex_.x();
  S.E.resize(S.N + 1);
  for (int m = 0; m <= S.N; ++m) {
    for (int c = 0; c < 2; ++c) S.E[m].u[c] = euler_jet(F.s.ue[m][c]);
    S.E[m].v = euler_jet(F.ve[m]);
    const Mat& p = F.pe.empty() ? zeros(tan_.rows(), ex_.size()) : F.pe[m];
    S.E[m].p1 = tan_.d1(p);
    S.E[m].p2 = tan_.d2(p);
    S.E[m].pn = p * ex_.D().transpose();
  }
  return S;
}

Sample ExpansionStack::prandtl_sample(const LayerFields& F) const {
  Sample S;
  S.N = cfg_.N;
  S.prandtl = true;
  S.z = pz_.x();
  S.x3 = Vec::Zero(S.z.size());
  S.P.resize(S.N + 2);
  const Mat Z = zeros(tan_.rows(), pz_.size());
  for (int m = 0; m <= S.N + 1; ++m) {
    for (int c = 0; c < 2; ++c) S.P[m].u[c] = prandtl_jet(m <= S.N ? F.s.up[m][c] : Z);
    S.P[m].v = prandtl_jet(F.vp[m]);
    const Mat& p = (m <= S.N && !F.pp.empty()) ? F.pp[m] : Z;
    S.P[m].p1 = tan_.d1(p);
    S.P[m].p2 = tan_.d2(p);
    S.P[m].pn = p * pz_.D().transpose();
  }
  S.dvp = F.dvp;
  S.W = wall_jets(F);
  return S;
}

Sample ExpansionStack::point_sample(const LayerFields& F, const std::vector<double>& x3, double s) const {
  Sample S;
  S.N = cfg_.N;
  S.s = s;
  S.euler = S.prandtl = S.remainders = true;
  const int np = static_cast<int>(x3.size());
  S.x3.resize(np);
  S.z.resize(np);
  Mat Pz = zeros(np, pz_.size());
  for (int j = 0; j < np; ++j) {
    if (x3[j] < 0 || x3[j] > ex_.length() * (1 + 1e-12))
      throw Error(ErrorKind::InterpolationOutOfRange, "sample point outside [0, X_max]");
    S.x3[j] = x3[j];
    S.z[j] = x3[j] / s;
    if (S.z[j] <= pz_.length() * (1 + 1e-12)) Pz.row(j) = pz_.eval_row(std::min(S.z[j], pz_.length()));
  }
  const Mat Ex = ex_.eval_matrix(x3);
  auto at_e = [&](const Jet& J) {
    Jet o;
    o.v = J.v * Ex.transpose();
    o.d1 = J.d1 * Ex.transpose();
    o.d2 = J.d2 * Ex.transpose();
    o.dn = J.dn * Ex.transpose();
    o.dnn = J.dnn * Ex.transpose();
    o.lap = J.lap * Ex.transpose();
    return o;
  };
  auto at_p = [&](const Jet& J) {
    Jet o;
    o.v = J.v * Pz.transpose();
    o.d1 = J.d1 * Pz.transpose();
    o.d2 = J.d2 * Pz.transpose();
    o.dn = J.dn * Pz.transpose();
    o.dnn = J.dnn * Pz.transpose();
    o.lap = J.lap * Pz.transpose();
    return o;
  };
  const Sample SE = euler_sample(F);
  const Sample SP = prandtl_sample(F);
  S.E.resize(S.N + 1);
  for (int m = 0; m <= S.N; ++m) {
    for (int c = 0; c < 2; ++c) S.E[m].u[c] = at_e(SE.E[m].u[c]);
    S.E[m].v = at_e(SE.E[m].v);
    S.E[m].p1 = SE.E[m].p1 * Ex.transpose();
    S.E[m].p2 = SE.E[m].p2 * Ex.transpose();
    S.E[m].pn = SE.E[m].pn * Ex.transpose();
  }
  S.P.resize(S.N + 2);
  S.dvp.resize(S.N + 2);
  for (int m = 0; m <= S.N + 1; ++m) {
    for (int c = 0; c < 2; ++c) S.P[m].u[c] = at_p(SP.P[m].u[c]);
    S.P[m].v = at_p(SP.P[m].v);
    S.P[m].p1 = SP.P[m].p1 * Pz.transpose();
    S.P[m].p2 = SP.P[m].p2 * Pz.transpose();
    S.P[m].pn = SP.P[m].pn * Pz.transpose();
    S.dvp[m] = F.dvp[m] * Pz.transpose();
  }
  S.W = SP.W;
  return S;
}

Mat ExpansionStack::pressure_solve(const Mat& rhs, const Vec& wall_flux) const {
  const Mat R = tan_.to_modes(rhs);
  const Mat G = tan_.to_modes(Mat(wall_flux));
  const int n = ex_.n();
  Mat P(R.rows(), R.cols());
  for (int r = 0; r < R.rows(); ++r) {
    Vec b = R.row(r).transpose();
    b[0] = G(r, 0);
    b[n] = 0;
    P.row(r) = poisson_lu_[poisson_index_[r]].solve(b).transpose();
  }
  return tan_.from_modes(P);
}

LayerFields ExpansionStack::derive(const LayerState& st) const {
  const int N = cfg_.N, R = tan_.rows(), nx = ex_.size(), nz = pz_.size();
  LayerFields F;
  F.N = N;
  F.s = st;
  F.vp.assign(N + 2, zeros(R, nz));
  F.dvp.assign(N + 2, zeros(R, nz));
  for (int m = 0; m <= N; ++m) F.vp[m + 1] = div_tan(st.up[m][0], st.up[m][1]) * pz_.T().transpose();
  F.ve.assign(N + 1, zeros(R, nx));
  for (int m = 0; m <= N; ++m) {
    const Vec g = m == 0 ? Vec::Zero(R) : Vec(-F.vp[m].col(0));
    F.ve[m] = g * Eigen::RowVectorXd::Ones(nx) - div_tan(st.ue[m][0], st.ue[m][1]) * ex_.Q().transpose();
  }
  F.pe.assign(N + 1, zeros(R, nx));
  F.pp.assign(N + 1, zeros(R, nz));
  F.dve.assign(N + 1, zeros(R, nx));
  F.due.assign(N + 1, {zeros(R, nx), zeros(R, nx)});
  F.dup.assign(N + 1, {zeros(R, nz), zeros(R, nz)});

  Sample SE = euler_sample(F);
  Sample SP = prandtl_sample(F);
  for (int m = 0; m <= N; ++m) {
    // wall-normal balance of the order m-1 Prandtl terms fixes p_p^m
    if (m >= 1) {
      Mat G = F.dvp[m - 1];
      enumerate_terms(SP, Equation::Normal, m - 1, [&](const TermTag& t, const Mat& v) {
        if (t.kind != TermKind::Pressure && absorbed(t, Equation::Normal, N)) G += v;
      });
      F.pp[m] = G * pz_.T().transpose();
      SP.P[m].p1 = tan_.d1(F.pp[m]);
      SP.P[m].p2 = tan_.d2(F.pp[m]);
      SP.P[m].pn = F.pp[m] * pz_.D().transpose();
    }
    for (int c = 0; c < 2; ++c) {
      Mat acc = zeros(R, nz);
      const Equation eq = c == 0 ? Equation::Tangential1 : Equation::Tangential2;
      enumerate_terms(SP, eq, m, [&](const TermTag& t, const Mat& v) {
        if (t.cls == TermClass::Prandtl && absorbed(t, eq, N)) acc += v;
      });
      F.dup[m][c] = -acc;
    }
    F.dvp[m + 1] = div_tan(F.dup[m][0], F.dup[m][1]) * pz_.T().transpose();
    SP.dvp = F.dvp;

    std::array<Mat, 2> Fu = {zeros(R, nx), zeros(R, nx)};
    Mat Fv = zeros(R, nx);
    for (int c = 0; c < 3; ++c) {
      const Equation eq = c == 0 ? Equation::Tangential1 : (c == 1 ? Equation::Tangential2 : Equation::Normal);
      Mat& acc = c < 2 ? Fu[c] : Fv;
      enumerate_terms(SE, eq, m, [&](const TermTag& t, const Mat& v) {
        if (t.cls == TermClass::Euler && t.kind != TermKind::Pressure && absorbed(t, eq, N)) acc += v;
      });
    }
    const Mat rhs = -(tan_.d1(Fu[0]) + tan_.d2(Fu[1]) + Fv * ex_.D().transpose());
    Vec wall = -Fv.col(0);
    if (m >= 1) wall += F.dvp[m].col(0);  // d_t v_e^m(0) = -d_t v_p^m(0)
    F.pe[m] = pressure_solve(rhs, wall);
    SE.E[m].p1 = tan_.d1(F.pe[m]);
    SE.E[m].p2 = tan_.d2(F.pe[m]);
    SE.E[m].pn = F.pe[m] * ex_.D().transpose();
    F.due[m][0] = -Fu[0] - SE.E[m].p1;
    F.due[m][1] = -Fu[1] - SE.E[m].p2;
    F.dve[m] = -Fv - SE.E[m].pn;
  }
  return F;
}

ExpansionStack::LocalRates ExpansionStack::local_rates(const Sample& S) const {
  const int N = cfg_.N;
  LocalRates L;
  const int R = static_cast<int>(S.E[0].u[0].v.rows()), np = static_cast<int>(S.x3.size());
  L.due.assign(N + 1, {zeros(R, np), zeros(R, np)});
  L.dup = L.due;
  L.dve.assign(N + 1, zeros(R, np));
  for (int m = 0; m <= N; ++m)
    for (int c = 0; c < 3; ++c) {
      const Equation eq = c == 0 ? Equation::Tangential1 : (c == 1 ? Equation::Tangential2 : Equation::Normal);
      Mat& e = c < 2 ? L.due[m][c] : L.dve[m];
      enumerate_terms(S, eq, m, [&](const TermTag& t, const Mat& v) {
        if (!absorbed(t, eq, N)) return;
        if (t.cls == TermClass::Euler) e -= v;
        else if (c < 2) L.dup[m][c] -= v;
      });
    }
  return L;
}

void ExpansionStack::step() { step_with(cfg_.dt); }

void ExpansionStack::step_with(double dt) {
  static constexpr double gam[3] = {8.0 / 15, 5.0 / 12, 3.0 / 4};
  static constexpr double zet[3] = {0.0, -17.0 / 60, -5.0 / 12};
  static constexpr double alp[3] = {4.0 / 15, 1.0 / 15, 1.0 / 6};
  const int N = cfg_.N, n = pz_.n();
  if (lu_dt_ != dt) {
    for (int k = 0; k < 3; ++k) {
      Mat A = Mat::Identity(pz_.size(), pz_.size()) - alp[k] * dt * pz_.D2();
      A.row(0).setZero();
      A(0, 0) = 1;
      A.row(n).setZero();
      A(n, n) = 1;
      diffusion_lu_[k].compute(A);
    }
    lu_dt_ = dt;
  }
  // advective speed bound for the explicit part
  double speed = 0;
  for (int c = 0; c < 2; ++c)
    speed = std::max(speed, state_.ue[0][c].cwiseAbs().maxCoeff() + state_.up[0][c].cwiseAbs().maxCoeff());
  if (speed * std::max(1, cfg_.grid.K_max) * dt > 1.0)
    throw Error(ErrorKind::Cfl, "time step too large for the tangential transport");

  LayerState S = state_, prev;
  for (int k = 0; k < 3; ++k) {
    const LayerFields F = derive(S);
    LayerState expl = F.rate();
    for (int m = 0; m <= N; ++m)
      for (int c = 0; c < 2; ++c) expl.up[m][c] -= S.up[m][c] * pz_.D2().transpose();
    LayerState next = S;
    for (int m = 0; m <= N; ++m)
      for (int c = 0; c < 2; ++c) {
        next.ue[m][c] = S.ue[m][c] + dt * gam[k] * expl.ue[m][c];
        if (k > 0) next.ue[m][c] += dt * zet[k] * prev.ue[m][c];
        Mat rhs = S.up[m][c] + dt * gam[k] * expl.up[m][c] + dt * alp[k] * S.up[m][c] * pz_.D2().transpose();
        if (k > 0) rhs += dt * zet[k] * prev.up[m][c];
        rhs.col(0) = -next.ue[m][c].col(0);
        rhs.col(n).setZero();
        next.up[m][c] = diffusion_lu_[k].solve(rhs.transpose()).transpose();
      }
    prev = std::move(expl);
    S = std::move(next);
  }
  for (int m = 0; m <= N; ++m)
    for (int c = 0; c < 2; ++c)
      if (!S.ue[m][c].allFinite() || !S.up[m][c].allFinite())
        throw Error(ErrorKind::BlowUp, "non-finite layer values");
  state_ = std::move(S);
  t_ += dt;
}

void ExpansionStack::advance_to(double t) {
  if (t < t_ - 1e-12) throw Error(ErrorKind::Config, "cannot step backwards in time");
  // equal steps no longer than dt that land exactly on t
  const long steps = static_cast<long>(std::ceil((t - t_) / cfg_.dt - 1e-9));
  if (steps <= 0) return;
  const double t0 = t_, h = (t - t0) / steps;
  for (long i = 0; i < steps; ++i) {
    step_with(h);
    t_ = t0 + (i + 1) * h;
  }
}

DecayFit ExpansionStack::decay(const Mat& f) const {
  DecayFit fit;
  const Vec M = f.cwiseAbs().colwise().maxCoeff().transpose();
  const double top = M.maxCoeff();
  if (top < 1e-13) {
    fit.zero = true;
    return fit;
  }
  std::vector<double> zs, ls;
  for (int j = 1; j < pz_.n(); ++j)
    if (M[j] > 1e-10 * top) {
      zs.push_back(pz_.x()[j]);
      ls.push_back(std::log(M[j]));
    }
  if (zs.size() < 3) {
    fit.sigma = 1e300;
    return fit;
  }
  const int n = static_cast<int>(zs.size());
  Mat A(n, 2);
  Vec b(n);
  for (int i = 0; i < n; ++i) {
    A(i, 0) = 1;
    A(i, 1) = zs[i];
    b[i] = ls[i];
  }
  const Vec x = A.colPivHouseholderQr().solve(b);
  fit.sigma = -x[1];
  const Vec res = A * x - b;
  const double range = b.maxCoeff() - b.minCoeff();
  fit.rel_residual = range > 0 ? std::sqrt(res.squaredNorm() / n) / range : 0.0;
  return fit;
}

MatchingReport ExpansionStack::matching(const LayerFields& F) const {
  MatchingReport r;
  const int N = cfg_.N, n = pz_.n();
  for (int m = 0; m <= N; ++m) {
    for (int c = 0; c < 2; ++c) {
      r.slip = std::max(r.slip, (F.s.up[m][c].col(0) + F.s.ue[m][c].col(0)).cwiseAbs().maxCoeff());
      r.far_field = std::max(r.far_field, F.s.up[m][c].col(n).cwiseAbs().maxCoeff());
    }
    r.wall_normal = std::max(r.wall_normal, (F.ve[m].col(0) + F.vp[m].col(0)).cwiseAbs().maxCoeff());
    r.euler_div = std::max(r.euler_div, (div_tan(F.s.ue[m][0], F.s.ue[m][1]) + F.ve[m] * ex_.D().transpose())
                                            .cwiseAbs()
                                            .maxCoeff());
    r.prandtl_div = std::max(r.prandtl_div, (div_tan(F.s.up[m][0], F.s.up[m][1]) + F.vp[m + 1] * pz_.D().transpose())
                                                .cwiseAbs()
                                                .maxCoeff());
  }
  if (N >= 1)
    for (int c = 0; c < 2; ++c) r.mean_drift = std::max(r.mean_drift, tan_.mean(F.s.ue[1][c]).cwiseAbs().maxCoeff());
  return r;
}

double ExpansionStack::heat_kernel_error() const {
  double b0 = 0;
  for (const auto& p : cfg_.data.shear[0]) b0 += p(0.0);
  const Eigen::RowVectorXd mean = tan_.mean(state_.up[0][0]);
  double err = 0;
  for (int j = 0; j < pz_.size(); ++j) {
    const double exact = -b0 * std::erfc(pz_.x()[j] / (2 * std::sqrt(1 + t_)));
    err = std::max(err, std::abs(mean[j] - exact));
  }
  return err;
}

namespace {
constexpr char kStackMagic[8] = {'E', 'P', 'S', 'T', 'A', 'C', 'K', '1'};

void put(std::ofstream& o, double v) { o.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put(std::ofstream& o, std::int64_t v) { o.write(reinterpret_cast<const char*>(&v), sizeof v); }
double get_d(std::ifstream& i) {
  double v;
  i.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::int64_t get_i(std::ifstream& i) {
  std::int64_t v;
  i.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

void ExpansionStack::save(const std::string& path) const {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw Error(ErrorKind::Config, "cannot write snapshot " + path);
  o.write(kStackMagic, 8);
  const auto& g = cfg_.grid;
  put(o, std::int64_t(cfg_.N));
  put(o, std::int64_t(g.K_max));
  put(o, std::int64_t(g.n_x));
  put(o, g.X_max);
  put(o, std::int64_t(g.n_z));
  put(o, g.Z_max);
  put(o, cfg_.eta0);
  put(o, t_);
  for (int m = 0; m <= cfg_.N; ++m)
    for (int c = 0; c < 2; ++c)
      for (const Mat* M : {&state_.ue[m][c], &state_.up[m][c]})
        o.write(reinterpret_cast<const char*>(M->data()), static_cast<std::streamsize>(M->size() * sizeof(double)));
}

void ExpansionStack::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  if (!in || !in.read(magic, 8) || std::string(magic, 8) != std::string(kStackMagic, 8))
    throw Error(ErrorKind::Config, "not a stack snapshot: " + path);
  const auto& g = cfg_.grid;
  const bool ok = get_i(in) == cfg_.N && get_i(in) == g.K_max && get_i(in) == g.n_x && get_d(in) == g.X_max &&
                  get_i(in) == g.n_z && get_d(in) == g.Z_max;
  if (!ok) throw Error(ErrorKind::Config, "snapshot grid does not match the configuration");
  get_d(in);
  t_ = get_d(in);
  for (int m = 0; m <= cfg_.N; ++m)
    for (int c = 0; c < 2; ++c)
      for (Mat* M : {&state_.ue[m][c], &state_.up[m][c]})
        in.read(reinterpret_cast<char*>(M->data()), static_cast<std::streamsize>(M->size() * sizeof(double)));
  if (!in) throw Error(ErrorKind::Config, "truncated snapshot " + path);
}

std::string ExpansionStack::csv(const std::string& field, int order, int component, const std::vector<double>& x1,
                                const std::vector<double>& x2, const std::vector<double>& normal) const {
  const LayerFields F = fields();
  const int N = cfg_.N;
  const Mat* M = nullptr;
  bool prandtl = false;
  auto in = [&](int lo, int hi) {
    if (order < lo || order > hi) throw Error(ErrorKind::Config, "csv: order out of range for " + field);
  };
  if (field == "ue") { in(0, N); M = &F.s.ue[order][component & 1]; }
  else if (field == "ve") { in(0, N); M = &F.ve[order]; }
  else if (field == "pe") { in(0, N); M = &F.pe[order]; }
  else if (field == "up") { in(0, N); M = &F.s.up[order][component & 1]; prandtl = true; }
  else if (field == "vp") { in(0, N + 1); M = &F.vp[order]; prandtl = true; }
  else if (field == "pp") { in(0, N); M = &F.pp[order]; prandtl = true; }
  else throw Error(ErrorKind::Config, "csv: unknown field " + field);
  const Chebyshev& G = prandtl ? pz_ : ex_;
  std::ostringstream os;
  os << "x1,x2,normal,value\n" << std::setprecision(17);
  for (double a : x1)
    for (double b : x2) {
      const Eigen::RowVectorXd tr = tan_.eval_row(a, b);
      const Eigen::RowVectorXd col = tr * *M;
      for (double y : normal) {
        if (y < 0 || y > G.length()) throw Error(ErrorKind::Config, "csv: normal coordinate outside the grid");
        os << a << ',' << b << ',' << y << ',' << col.dot(G.eval_row(y)) << '\n';
      }
    }
  return os.str();
}

}  // namespace ep
