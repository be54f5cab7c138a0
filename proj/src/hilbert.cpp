#include "ep/hilbert.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ep/error.hpp"

namespace ep {

using Eigen::Matrix3d;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

// value, gradient and Hessian of one scalar at a point
struct PointJet {
  double v = 0;
  Vector3d g = Vector3d::Zero();
  Matrix3d h = Matrix3d::Zero();
  void add(double f, const PointJet& o) {
    v += f * o.v;
    g += f * o.g;
    h += f * o.h;
  }
};

}  // namespace

FlowEvaluator::FlowEvaluator(const ExpansionStack& stack, double kappa, std::vector<double> time_offsets)
    : stack_(stack), kappa_(kappa), t_(stack.time()) {
  if (!(kappa > 0)) throw Error(ErrorKind::Config, "kappa must be positive");
  s_ = std::sqrt(stack.config().eta0 * kappa);
  F_ = stack.fields();
  const LayerState rate = F_.rate();
  Fplus_ = stack.derive(F_.s.axpy(1.0, rate));
  Fminus_ = stack.derive(F_.s.axpy(-1.0, rate));
  for (double h : time_offsets) offsets_.emplace(h, stack.derive(F_.s.axpy(h, rate)));
}

FlowPoint FlowEvaluator::eval(const LayerFields& F, const Vector3d& x) const {
  if (x[2] < 0) throw Error(ErrorKind::InterpolationOutOfRange, "flow point below the wall");
  const Tangential& T = stack_.tangential();
  const Eigen::RowVectorXd row = T.eval_row(x[0], x[1]);
  const int N = stack_.N();
  const Chebyshev& ex = stack_.euler_grid();
  const Chebyshev& pz = stack_.prandtl_grid();
  if (x[2] > ex.length() * (1 + 1e-12)) throw Error(ErrorKind::InterpolationOutOfRange, "flow point above X_max");

  struct Rows {
    bool inside = false;
    Eigen::RowVectorXd r0, r1, r2;
    double scale = 1;
  };
  auto rows_for = [](const Chebyshev& G, double y, double scale) {
    Rows r;
    if (y > G.length() * (1 + 1e-12)) return r;
    r.inside = true;
    r.r0 = G.eval_row(std::min(y, G.length()));
    r.r1 = r.r0 * G.D();
    r.r2 = r.r0 * G.D2();
    r.scale = scale;
    return r;
  };
  const Rows re = rows_for(ex, x[2], 1.0), rp = rows_for(pz, x[2] / s_, 1.0 / s_);
  auto jet = [&](const Mat& M, const Rows& r) {
    PointJet j;
    if (!r.inside) return j;
    Mat C(M.rows(), 3);
    C.col(0) = M * r.r0.transpose();
    C.col(1) = M * r.r1.transpose();
    C.col(2) = M * r.r2.transpose();
    const Mat C1 = T.d1(C), C2 = T.d2(C);
    const Mat C11 = T.d1(C1), C12 = T.d2(C1), C22 = T.d2(C2);
    const double sc = r.scale;
    j.v = row.dot(C.col(0));
    j.g << row.dot(C1.col(0)), row.dot(C2.col(0)), sc * row.dot(C.col(1));
    j.h(0, 0) = row.dot(C11.col(0));
    j.h(0, 1) = j.h(1, 0) = row.dot(C12.col(0));
    j.h(1, 1) = row.dot(C22.col(0));
    j.h(0, 2) = j.h(2, 0) = sc * row.dot(C1.col(1));
    j.h(1, 2) = j.h(2, 1) = sc * row.dot(C2.col(1));
    j.h(2, 2) = sc * sc * row.dot(C.col(2));
    return j;
  };
  std::array<PointJet, 3> U;
  PointJet P;
  for (int i = 0; i <= N; ++i) {
    const double f = std::pow(s_, i);
    for (int c = 0; c < 2; ++c) {
      U[c].add(f, jet(F.s.ue[i][c], re));
      U[c].add(f, jet(F.s.up[i][c], rp));
    }
    U[2].add(f, jet(F.ve[i], re));
    P.add(f, jet(F.pe[i], re));
    P.add(f, jet(F.pp[i], rp));
  }
  for (int i = 1; i <= N + 1; ++i) U[2].add(std::pow(s_, i), jet(F.vp[i], rp));

  FlowPoint out;
  for (int j = 0; j < 3; ++j) {
    out.U[j] = U[j].v;
    for (int i = 0; i < 3; ++i) {
      out.grad(i, j) = U[j].g[i];
      for (int k = 0; k < 3; ++k) out.hess[k](i, j) = U[j].h(k, i);
    }
  }
  out.P = P.v;
  out.gradP = P.g;
  return out;
}

FlowRates FlowEvaluator::with_rates(const Vector3d& x) const {
  FlowRates r;
  r.at = eval(F_, x);
  const FlowPoint p = eval(Fplus_, x), m = eval(Fminus_, x);
  r.dtU = 0.5 * (p.U - m.U);
  r.dtgrad = 0.5 * (p.grad - m.grad);
  r.dtP = 0.5 * (p.P - m.P);
  return r;
}

FlowPoint FlowEvaluator::at_offset(double h, const Vector3d& x) const {
  auto it = offsets_.find(h);
  if (it == offsets_.end()) throw Error(ErrorKind::FieldUnavailable, "time offset was not prepared");
  return eval(it->second, x);
}

FlowProvider FlowEvaluator::provider() const {
  return [this](double t, const Vector3d& x) -> std::optional<FlowJet> {
    if (std::abs(t - t_) > 1e-12 || x[2] < 0 || x[2] > stack_.euler_grid().length()) return std::nullopt;
    const FlowRates r = with_rates(x);
    FlowJet j;
    j.U = r.at.U;
    j.grad = r.at.grad;
    j.dt = r.dtU;
    return j;
  };
}

void HilbertContext::validate() const {
  if (!(epsilon > 0) || !(kappa > 0) || !(delta > 0))
    throw Error(ErrorKind::Config, "scales epsilon, kappa and delta must be positive");
}
double HilbertContext::regime_eps() const { return std::log(epsilon) / (2 * std::log(kappa)); }
double HilbertContext::regime_delta() const { return std::log(delta) / std::log(kappa); }

HilbertKernel::HilbertKernel(std::shared_ptr<const Collision> col, const AijResult& aij)
    : col_(std::move(col)), eta0_(aij.eta0), A_(aij.A) {
  const VelocityGrid& g = grid();
  const int n = g.n();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (A_[i][j].size() != g.size()) throw Error(ErrorKind::IncompleteStack, "A_ij tables missing");
  std::array<Mat, 3> D;
  for (int m = 0; m < 3; ++m) D[m] = g.interp(m).diff_matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int m = 0; m < 3; ++m) {
        VectorXd d = VectorXd::Zero(g.size());
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
              double s = 0;
              for (int l = 0; l < n; ++l) {
                const int src = m == 0 ? g.index(l, b, c) : (m == 1 ? g.index(a, l, c) : g.index(a, b, l));
                const int at = m == 0 ? a : (m == 1 ? b : c);
                s += D[m](at, l) * A_[i][j][src];
              }
              d[g.index(a, b, c)] = s;
            }
        dA_[i][j][m] = d;
      }
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        VectorXd v(g.size());
        for (int q = 0; q < g.size(); ++q) v[q] = g.node(q)[k] * A_[i][j][q];
        PphiA_[k][i][j] = col_->project(v);
      }
}

VectorXd build_f2(const HilbertKernel& K, const HilbertContext& ctx, const FlowPoint& flow) {
  const double P = ctx.pressure ? *ctx.pressure : flow.P;
  VectorXd q = VectorXd::Constant(K.grid().size(), P);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) q -= ctx.kappa * flow.grad(i, j) * K.A(i, j);
  return q;
}

VectorXd RaTerms::sum() const {
  return ns + gamma + divergence + micro_transport + pressure + strain + a_transport + gram_defect;
}

HilbertEvaluator::HilbertEvaluator(const HilbertKernel& K, const ExpansionStack& stack, HilbertContext ctx)
    : K_(K), ctx_((ctx.validate(), ctx)), flow_(stack, ctx.kappa, {-2e-3, -1e-3, 1e-3, 2e-3}), h_t_(1e-3) {}

FlowRates HilbertEvaluator::rates(const Vector3d& x) const {
  FlowRates r = flow_.with_rates(x);
  if (ctx_.pressure) {
    r.at.P = *ctx_.pressure;
    r.at.gradP.setZero();
    r.dtP = 0;
  }
  return r;
}

FlowPoint HilbertEvaluator::shifted(double h, const Vector3d& x) const {
  FlowPoint p = flow_.at_offset(h, x);
  if (ctx_.pressure) {
    p.P = *ctx_.pressure;
    p.gradP.setZero();
  }
  return p;
}

VectorXd HilbertEvaluator::f2(const Vector3d& x) const { return build_f2(K_, ctx_, rates(x).at); }

VectorXd HilbertEvaluator::Ra_direct(const Vector3d& x, const VectorXd* gamma_f2) const {
  const double eps = ctx_.epsilon, kap = ctx_.kappa;
  const VelocityGrid& g = K_.grid();
  const int n = g.size();
  const FlowRates base = rates(x);
  // (mu + eps^2 sqrt(mu) f2)(t', x', xi) / mu0(phi) for the fixed xi = phi + eps U(t, x)
  auto ratio = [&](const FlowPoint& p) {
    VectorXd out(n);
    for (int q = 0; q < n; ++q) {
      const Vector3d& phi = g.node(q);
      const Vector3d xi = phi + eps * base.at.U;
      const Vector3d phi2 = xi - eps * p.U;
      double f2 = p.P;
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
          const double gij = i == j ? p.grad(i, i) : p.grad(i, j) + p.grad(j, i);
          if (gij != 0) f2 -= kap * gij * K_.A_at(i, j, phi2);
        }
      out[q] = std::exp(-0.5 * (phi2.squaredNorm() - phi.squaredNorm())) * (1 + eps * eps * f2);
    }
    return out;
  };
  auto fd = [](const VectorXd& m2, const VectorXd& m1, const VectorXd& p1, const VectorXd& p2, double h) {
    return VectorXd((m2 - 8 * m1 + 8 * p1 - p2) / (12 * h));
  };
  auto spatial = [&](const Vector3d& y) {
    FlowPoint p = flow_.at(y);
    if (ctx_.pressure) p.P = *ctx_.pressure;
    return ratio(p);
  };
  const double h = std::min(2e-3 * flow_.scale(), 0.25 * x[2]);
  if (!(h > 0)) throw Error(ErrorKind::Config, "R_a needs an interior point");
  std::array<VectorXd, 3> dx;
  for (int m = 0; m < 3; ++m) {
    Vector3d e = Vector3d::Zero();
    e[m] = h;
    dx[m] = fd(spatial(x - 2 * e), spatial(x - e), spatial(x + e), spatial(x + 2 * e), h);
  }
  const VectorXd dt = fd(ratio(shifted(-2 * h_t_, x)), ratio(shifted(-h_t_, x)), ratio(shifted(h_t_, x)),
                         ratio(shifted(2 * h_t_, x)), h_t_);
  VectorXd transport = dt;
  for (int q = 0; q < n; ++q) {
    const Vector3d xi = g.node(q) + eps * base.at.U;
    for (int m = 0; m < 3; ++m) transport[q] += xi[m] / eps * dx[m][q];
  }
  const VectorXd f2 = build_f2(K_, ctx_, base.at);
  const VectorXd G = gamma_f2 ? *gamma_f2 : K_.collision().gamma(f2, f2);
  return transport + K_.collision().apply_L(f2) / kap - eps * eps / (2 * kap) * G;
}

RaTerms HilbertEvaluator::Ra_expanded(const Vector3d& x, const VectorXd* gamma_f2) const {
  const double eps = ctx_.epsilon, kap = ctx_.kappa, eta0 = K_.eta0();
  const VelocityGrid& g = K_.grid();
  const int n = g.size();
  const FlowRates r = rates(x);
  const FlowPoint& p = r.at;
  const Matrix3d& G = p.grad;
  const Vector3d DU = r.dtU + G.transpose() * p.U;  // material derivative of U
  Matrix3d Dgrad = r.dtgrad;
  for (int k = 0; k < 3; ++k) Dgrad += p.U[k] * p.hess[k];
  const double DP = r.dtP + p.U.dot(p.gradP);
  const double div = G.trace();
  Vector3d lapU, graddiv;
  for (int m = 0; m < 3; ++m) {
    lapU[m] = p.hess[0](0, m) + p.hess[1](1, m) + p.hess[2](2, m);
    graddiv[m] = p.hess[m].trace();
  }
  const Vector3d visc = eta0 * (lapU + graddiv / 3.0);
  const Vector3d NS = DU + p.gradP - kap * visc;

  RaTerms t;
  t.ns.resize(n);
  t.divergence.resize(n);
  t.pressure.resize(n);
  t.strain = VectorXd::Zero(n);
  t.a_transport = VectorXd::Zero(n);
  t.micro_transport = VectorXd::Zero(n);
  t.gram_defect = VectorXd::Zero(n);
  for (int q = 0; q < n; ++q) {
    const Vector3d& phi = g.node(q);
    const double phiGphi = phi.dot(G * phi);
    t.ns[q] = eps * NS.dot(phi);
    t.divergence[q] = div * phi.squaredNorm() / 3.0;
    t.pressure[q] = eps * eps * (DP + eps * p.P * phi.dot(DU) + p.P * phiGphi);
    t.gram_defect[q] = eps * kap * visc.dot(phi);
    const Vector3d Dphi = -eps * DU - G.transpose() * phi;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double a = K_.A(i, j)[q];
        t.strain[q] -= eps * eps * kap * a * (Dgrad(i, j) + eps * G(i, j) * phi.dot(DU) + G(i, j) * phiGphi);
        double da = 0;
        for (int m = 0; m < 3; ++m) da += K_.dA(i, j, m)[q] * Dphi[m];
        t.a_transport[q] -= eps * eps * kap * G(i, j) * da;
        for (int k = 0; k < 3; ++k) {
          const double hk = p.hess[k](i, j);
          if (hk == 0) continue;
          const double proj = K_.proj_phiA(k, i, j)[q];
          t.micro_transport[q] -= eps * kap * hk * (phi[k] * a - proj);
          t.gram_defect[q] -= eps * kap * hk * proj;
        }
      }
  }
  const VectorXd f2 = build_f2(K_, ctx_, p);
  t.gamma = -(eps * eps / (2 * kap)) * (gamma_f2 ? *gamma_f2 : K_.collision().gamma(f2, f2));
  return t;
}

RaComparison HilbertEvaluator::compare(const Vector3d& x) const {
  RaComparison c;
  const VectorXd f2v = f2(x);
  const VectorXd G = K_.collision().gamma(f2v, f2v);
  c.terms = Ra_expanded(x, &G);
  c.expanded = c.terms.sum();
  c.direct = Ra_direct(x, &G);
  const auto& w = K_.grid().weight_mu();
  c.scale = std::sqrt((w.array() * c.expanded.array().square()).sum());
  const double d = std::sqrt((w.array() * (c.direct - c.expanded).array().square()).sum());
  c.rel_diff = c.scale > 0 ? d / c.scale : d;
  return c;
}

VectorXd HilbertEvaluator::stretching(const Vector3d& x) const {
  const FlowRates r = rates(x);
  const Vector3d DU = r.dtU + r.at.grad.transpose() * r.at.U;
  const VelocityGrid& g = K_.grid();
  VectorXd out(g.size());
  for (int q = 0; q < g.size(); ++q) {
    const Vector3d& phi = g.node(q);
    out[q] = 0.5 * (ctx_.epsilon * phi.dot(DU) + phi.dot(r.at.grad * phi));
  }
  return out;
}

VectorXd HilbertEvaluator::remainder_rhs(const VectorXd& f, const Vector3d& x) const {
  const double eps = ctx_.epsilon, kap = ctx_.kappa, del = ctx_.delta;
  const Collision& C = K_.collision();
  if (f.size() != C.size()) throw Error(ErrorKind::Config, "sample does not live on the collision grid");
  const VectorXd q = f2(x);
  const VectorXd Gqq = C.gamma(q, q);
  VectorXd rhs = -Ra_expanded(x, &Gqq).sum() / (eps * del);
  if (f.cwiseAbs().maxCoeff() > 0) rhs += del / (kap * eps) * C.gamma(f, f) + 2.0 / kap * C.gamma(q, f);
  return rhs;
}

BoundaryDatum build_r(const HilbertKernel& K, const HilbertEvaluator& H, double x1, double x2, int n_split) {
  BoundaryDatum b{VelocityGrid::hermite(n_split, true), {}, {}, 0, 0};
  const HilbertContext& ctx = H.context();
  const FlowPoint p = H.flow().at(Vector3d(x1, x2, 0.0));
  const double P = ctx.pressure ? *ctx.pressure : p.P;
  const int n = b.grid.size();
  b.f2.resize(n);
  for (int q = 0; q < n; ++q) {
    const Vector3d& xi = b.grid.node(q);
    const Vector3d phi = xi - ctx.epsilon * p.U;
    double v = P;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (p.grad(i, j) != 0) v -= ctx.kappa * p.grad(i, j) * K.A_at(i, j, phi);
    // from sqrt(mu0(phi)) to sqrt(mu0(xi))
    b.f2[q] = std::exp(-0.25 * (phi.squaredNorm() - xi.squaredNorm())) * v;
  }
  b.r = b.f2 - boundary_project(b.grid, b.f2);
  b.projection_of_r = boundary_project(b.grid, b.r).cwiseAbs().maxCoeff();
  const auto& w = b.grid.weight_mu();
  double flux = 0, mag = 0;
  for (int q = 0; q < n; ++q) {
    const double x3 = b.grid.node(q)[2];
    if (x3 <= 0) continue;
    flux += w[q] * b.r[q] * x3;
    mag += w[q] * std::abs(b.r[q]) * x3;
  }
  b.orthogonality = mag > 0 ? std::abs(flux) / mag : 0.0;
  return b;
}

namespace {

constexpr char kGammaMagic[8] = {'E', 'P', 'G', 'A', 'M', '0', '0', '1'};
constexpr int kPairs[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};

std::string gamma_table_key(const HilbertKernel& K) {
  std::ostringstream os;
  os.precision(17);
  os << K.collision().config().key() << " eta0 " << K.eta0();
  return os.str();
}

}  // namespace

int GammaTable::pair(int a, int b) {
  if (a > b) std::swap(a, b);
  return a * kBasis - a * (a - 1) / 2 + (b - a);
}

GammaTable::GammaTable(const HilbertKernel& K) {
  const int n = K.grid().size();
  std::vector<VectorXd> basis{VectorXd::Ones(n)};
  for (const auto& ij : kPairs) basis.push_back(K.A(ij[0], ij[1]));
  table_.resize(kBasis * (kBasis + 1) / 2);
  for (int a = 0; a < kBasis; ++a)
    for (int b = a; b < kBasis; ++b) table_[pair(a, b)] = K.collision().gamma(basis[a], basis[b]);
}

GammaTable GammaTable::build_or_load(const HilbertKernel& K, const std::string& cache_dir) {
  const std::string key = gamma_table_key(K);
  std::string path;
  const std::uint64_t n = K.grid().size(), count = kBasis * (kBasis + 1) / 2;
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    std::ostringstream os;
    os << cache_dir << "/gamma_table_" << std::hex << std::hash<std::string>{}(key) << ".bin";
    path = os.str();
    std::ifstream is(path, std::ios::binary);
    char magic[8];
    std::uint64_t klen = 0, nn = 0;
    if (is.read(magic, 8) && std::string(magic, 8) == std::string(kGammaMagic, 8) &&
        is.read(reinterpret_cast<char*>(&klen), 8) && klen < 4096) {
      std::string k(klen, '\0');
      is.read(k.data(), klen);
      is.read(reinterpret_cast<char*>(&nn), 8);
      if (is && k == key && nn == n) {
        GammaTable t;
        t.table_.assign(count, VectorXd(n));
        for (auto& v : t.table_) is.read(reinterpret_cast<char*>(v.data()), 8 * n);
        if (is) return t;
      }
    }
  }
  GammaTable t(K);
  if (!path.empty()) {
    std::ofstream os(path, std::ios::binary);
    const std::uint64_t klen = key.size();
    os.write(kGammaMagic, 8);
    os.write(reinterpret_cast<const char*>(&klen), 8);
    os.write(key.data(), klen);
    os.write(reinterpret_cast<const char*>(&n), 8);
    for (const auto& v : t.table_) os.write(reinterpret_cast<const char*>(v.data()), 8 * n);
  }
  return t;
}

Eigen::Matrix<double, GammaTable::kBasis, 1> GammaTable::coefficients(const HilbertContext& ctx,
                                                                      const FlowPoint& flow) {
  Eigen::Matrix<double, kBasis, 1> c;
  c[0] = ctx.pressure ? *ctx.pressure : flow.P;
  for (int k = 0; k < 6; ++k) {
    const int i = kPairs[k][0], j = kPairs[k][1];
    c[k + 1] = -ctx.kappa * (i == j ? flow.grad(i, i) : flow.grad(i, j) + flow.grad(j, i));
  }
  return c;
}

VectorXd GammaTable::apply(const Eigen::Matrix<double, kBasis, 1>& c) const {
  VectorXd out = VectorXd::Zero(table_.front().size());
  for (int a = 0; a < kBasis; ++a) {
    if (c[a] == 0) continue;
    for (int b = a; b < kBasis; ++b)
      if (c[b] != 0) out += (a == b ? 1.0 : 2.0) * c[a] * c[b] * table_[pair(a, b)];
  }
  return out;
}

}  // namespace ep
