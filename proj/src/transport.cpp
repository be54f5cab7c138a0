#include "ep/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ep/error.hpp"
#include "ep/parallel.hpp"
#include "ep/quadrature.hpp"

namespace ep {

using Eigen::Matrix3d;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr char kSnapshotMagic[8] = {'E', 'P', 'K', 'I', 'N', '0', '0', '1'};

// L2 norm of a space field with the grid weights, restricted to lo <= x3 <= hi.
double region_norm(const LinearTransport& lt, const Vec& v, double lo, double hi) {
  const int R = lt.rows();
  const Vec& x3 = lt.normal().x();
  double s = 0;
  for (int i = 0; i < v.size(); ++i) {
    const double z = x3[i / R];
    if (z < lo || z > hi) continue;
    s += lt.space_weight()[i] * v[i] * v[i];
  }
  return std::sqrt(s);
}

// Divergence of (b1, b2, b3) given as space vectors.
Vec divergence(const LinearTransport& lt, const Vec& b1, const Vec& b2, const Vec& b3) {
  const int R = lt.rows(), J = lt.normal().size();
  Mat B1 = Eigen::Map<const Mat>(b1.data(), R, J), B2 = Eigen::Map<const Mat>(b2.data(), R, J);
  const Mat B3 = Eigen::Map<const Mat>(b3.data(), R, J);
  Mat out = lt.tangential().d1(B1) + lt.tangential().d2(B2);
  out.noalias() += B3 * lt.normal().D().transpose();
  return Eigen::Map<const Vec>(out.data(), out.size());
}

}  // namespace

// ---- characteristics and wall weights ----

Characteristic backward_exit(const Vector3d& x, const Vector3d& xi, double eps) {
  if (x[2] < 0) throw Error(ErrorKind::Config, "exit point below the wall");
  if (!(eps > 0)) throw Error(ErrorKind::Config, "epsilon must be positive");
  Characteristic c;
  if (xi[2] <= 0) return c;
  c.exits = true;
  if (x[2] == 0) {
    c.tb = 0;
    c.xb = x;
    return c;
  }
  const double s = x[2] / xi[2];
  c.tb = eps * s;
  c.xb = x - s * xi;
  c.xb[2] = 0;
  return c;
}

WallWeights wall_weights(double TM, const Vector3d& xi) {
  if (!(TM > 0)) throw Error(ErrorKind::BadTemperature, "wall temperature must be positive");
  const double m0 = mu0(xi), sM = std::sqrt(muM(TM, xi));
  return {m0 / sM, xi[2] < 0 ? sM * -xi[2] : 0.0, std::sqrt(m0) / sM};
}

void TransportConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::Config, "transport: " + m); };
  if (!(epsilon > 0) || !(kappa > 0) || !(delta > 0)) bad("epsilon, kappa and delta must be positive");
  if (!(TM > 0)) throw Error(ErrorKind::BadTemperature, "transport: TM must be positive");
  if (K_par < 1 || K_par > 32) bad("K_par must lie in [1, 32]");
  if (n_normal < 4 || n_normal > 256) bad("n_normal must lie in [4, 256]");
  if (!(x3_max > 0)) bad("x3_max must be positive");
  if (!(stretch >= 0) || stretch > 20) bad("stretch must lie in [0, 20]");
  if (!(dt > 0) || !(t_final > 0)) bad("dt and t_final must be positive");
  if (!(blowup > 0)) bad("blowup ceiling must be positive");
  if (!(max_shift > 0) || max_shift > 1) bad("max_shift must lie in (0, 1]");
}

// ---- normal grid ----

StretchedNormal::StretchedNormal(int n, double L, double beta) : y_(n, 1.0), L_(L), beta_(beta) {
  if (!(L > 0) || !(beta >= 0)) throw Error(ErrorKind::Config, "bad stretched grid");
  const int m = y_.size();
  x_.resize(m);
  Vec dxdy(m);
  for (int j = 0; j < m; ++j) {
    const double y = y_.x()[j];
    if (beta_ > 0) {
      x_[j] = L_ * std::sinh(beta_ * y) / std::sinh(beta_);
      dxdy[j] = L_ * beta_ * std::cosh(beta_ * y) / std::sinh(beta_);
    } else {
      x_[j] = L_ * y;
      dxdy[j] = L_;
    }
  }
  x_[0] = 0;
  x_[m - 1] = L_;
  w_ = y_.w().cwiseProduct(dxdy);
  D_ = dxdy.cwiseInverse().asDiagonal() * y_.D();
}

double StretchedNormal::to_y(double x3) const {
  if (beta_ == 0) return x3 / L_;
  return std::asinh(x3 / L_ * std::sinh(beta_)) / beta_;
}

Eigen::RowVectorXd StretchedNormal::eval_row(double x3) const {
  for (int j = 0; j < size(); ++j)
    if (x3 == x_[j]) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(size());
      r[j] = 1;
      return r;
    }
  return y_.eval_row(std::clamp(to_y(x3), 0.0, 1.0));
}

FlowOnGrid FlowOnGrid::zero(int n_space) {
  FlowOnGrid f;
  f.U = Mat::Zero(n_space, 3);
  f.divU = f.P = f.dtP = f.divUP = f.UgradU = f.cij_term = Vec::Zero(n_space);
  return f;
}

// ---- the linear integrator ----

LinearTransport::LinearTransport(std::shared_ptr<const Collision> col, TransportConfig cfg)
    : col_(std::move(col)), cfg_((cfg.validate(), cfg)), tan_(cfg.K_par),
      cheb_(cfg.n_normal, cfg.x3_max, cfg.stretch) {
  const VelocityGrid& g = velocity();
  const int nv = n_vel(), R = rows(), J = cheb_.size();
  wx_.resize(R * J);
  for (int j = 0; j < J; ++j) wx_.segment(R * j, R).setConstant(tan_.cell() * cheb_.w()[j]);

  sqmuM_.resize(nv);
  w1_.resize(nv);
  w2_.resize(nv);
  w3inv_.resize(nv);
  R_.resize(nv);
  double in_flux = 0;
  for (int q = 0; q < nv; ++q) {
    const Vector3d& xi = g.node(q);
    const WallWeights w = wall_weights(cfg_.TM, xi);
    sqmuM_[q] = std::sqrt(muM(cfg_.TM, xi));
    w1_[q] = w.w1;
    w2_[q] = w.w2;
    w3inv_[q] = w.w3inv;
    R_[q] = sqmuM_[q] / mu0(xi);
    if (xi[2] > 0) in_flux += g.weight()[q] * mu0(xi) * xi[2];
  }
  cmu_ = 1.0 / in_flux;

  // h-frame operators: L_M = R^-1 L R on the reduced collision values p = R h.
  const Mat& L = col_->L();
  const Mat LM = R_.cwiseInverse().asDiagonal() * L * R_.asDiagonal();
  Lt_ = LM.transpose();
  Mat KM = -LM;
  KM.diagonal() += nu();
  Kt_ = KM.transpose();

  // L is self-adjoint for the mu0-weighted sum; diagonalise its symmetric form.
  const Vec sw = g.weight_mu().cwiseSqrt();
  Mat S = sw.asDiagonal() * L * sw.cwiseInverse().asDiagonal();
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::SolverDiverged, "collision spectrum");
  lambda_ = es.eigenvalues();
  V_ = es.eigenvectors();
}

Eigen::Vector3d LinearTransport::position(int s) const {
  const int R = rows();
  const int r = s % R, j = s / R;
  return {tan_.x1(r), tan_.x2(r), cheb_.x()[j]};
}

Mat LinearTransport::apply_K(const Mat& h) const { return h * Kt_; }
Mat LinearTransport::apply_L(const Mat& h) const { return h * Lt_; }

const LinearTransport::Exponential& LinearTransport::exponential(double dt) const {
  for (const auto& e : exp_cache_)
    if (e.dt == dt) return e;
  const double stiff = cfg_.kappa * cfg_.epsilon * cfg_.epsilon;
  const double c = dt / stiff;
  const int nv = n_vel();
  Vec ex(nv), ph(nv);
  for (int k = 0; k < nv; ++k) {
    const double x = c * lambda_[k];
    ex[k] = std::exp(-x);
    ph[k] = std::abs(x) < 1e-10 ? dt : -std::expm1(-x) / (lambda_[k] / stiff);
  }
  const Vec sw = velocity().weight_mu().cwiseSqrt();
  const Vec left_scale = sw.cwiseProduct(R_).cwiseInverse();
  const Mat left = left_scale.asDiagonal() * V_;
  const Mat right = V_.transpose() * sw.cwiseProduct(R_).asDiagonal();
  const Mat E = left * ex.asDiagonal() * right;
  const Mat Phi = left * ph.asDiagonal() * right;
  Exponential e;
  e.dt = dt;
  e.A = (E - Phi / dt).transpose();
  e.B = (Phi / dt).transpose();
  e.Phi = Phi.transpose();
  exp_cache_.push_back(std::move(e));
  return exp_cache_.back();
}

Mat LinearTransport::source_increment(const Mat& source, double dt) const {
  if (source.size() == 0) return Mat::Zero(n_space(), n_vel());
  return source * exponential(dt).Phi;
}

void LinearTransport::advect(const Mat& in, Mat& out, double dt) const {
  const int n = tan_.n(), R = rows(), J = cheb_.size();
  const Periodic& ax = tan_.axis();
  const Vec& x3 = cheb_.x();
  const double L = cheb_.length();
  out.resize(in.rows(), in.cols());
  parallel_for(n_vel(), [&](int q) {
    const Vector3d xi = velocity().node(q);
    const Vector3d d = dt * xi / cfg_.epsilon;
    Mat P1(n, n), P2(n, n);
    for (int i = 0; i < n; ++i) {
      P1.row(i) = ax.eval_row(ax.x()[i] - d[0]);
      P2.row(i) = ax.eval_row(ax.x()[i] - d[1]);
    }
    Eigen::Map<const Mat> X(in.col(q).data(), R, J);
    Mat Xt(R, J);
    for (int j = 0; j < J; ++j) {
      Eigen::Map<const Mat> M(X.col(j).data(), n, n);
      Eigen::Map<Mat> O(Xt.col(j).data(), n, n);
      O.noalias() = P2 * M * P1.transpose();
    }
    Mat N = Mat::Zero(J, J);
    std::vector<int> through_wall;
    for (int j = 0; j < J; ++j) {
      const double dep = x3[j] - d[2];
      if (dep >= 0)
        N.row(j) = cheb_.eval_row(std::min(dep, L));
      else
        through_wall.push_back(j);
    }
    Eigen::Map<Mat> Y(out.col(q).data(), R, J);
    Y.noalias() = Xt * N.transpose();
    // departures behind the wall read the wall values where the path crossed it
    for (int j : through_wall) {
      const double s = x3[j] / xi[2];
      for (int r = 0; r < R; ++r)
        Y(r, j) = tan_.eval_row(tan_.x1(r) - s * xi[0], tan_.x2(r) - s * xi[1]).dot(X.col(0));
    }
  });
}

void LinearTransport::impose_wall(Mat& h, const Mat& wall_r) const {
  const int R = rows();
  const VelocityGrid& g = velocity();
  const Vec out_w = g.weight().cwiseProduct(w2_);
  const Vec m = h.topRows(R) * out_w;
  const double ratio = cfg_.epsilon / cfg_.delta;
  const bool has_r = wall_r.size() > 0;
  if (has_r && (wall_r.rows() != R || wall_r.cols() != n_vel()))
    throw Error(ErrorKind::Config, "wall datum has the wrong shape");
  for (int q = 0; q < n_vel(); ++q) {
    if (g.node(q)[2] <= 0) continue;
    auto col = h.col(q).head(R);
    col = cmu_ * w1_[q] * m;
    if (has_r) col -= ratio * w3inv_[q] * wall_r.col(q);
  }
}

void LinearTransport::step(KineticField& h, const Mat& increment, const Mat& wall_r, double dt) const {
  if (h.frame != Frame::H) throw Error(ErrorKind::Config, "the integrator works in the h frame");
  const Exponential& X = exponential(dt);
  Mat Sh;
  advect(h.data, Sh, dt);
  Mat next = h.data * X.A;
  next.noalias() += Sh * X.B;
  if (increment.size() > 0) next += increment;
  impose_wall(next, wall_r);
  if (!next.allFinite() || next.cwiseAbs().maxCoeff() > cfg_.blowup)
    throw Error(ErrorKind::BlowUp, "kinetic field exceeded the ceiling at t = " + std::to_string(h.t + dt));
  h.data.swap(next);
  h.t += dt;
}

Vec LinearTransport::wall_mass_flux(const Mat& h) const {
  const VelocityGrid& g = velocity();
  Vec w(n_vel());
  for (int q = 0; q < n_vel(); ++q) w[q] = g.weight()[q] * sqmuM_[q] * g.node(q)[2];
  return h.topRows(rows()) * w;
}

double LinearTransport::mass(const Mat& h) const {
  const Vec a = h * velocity().weight().cwiseProduct(sqmuM_);
  return wx_.dot(a);
}

Eigen::RowVectorXd LinearTransport::space_row(const Vector3d& x) const {
  if (x[2] < -1e-12) throw Error(ErrorKind::InterpolationOutOfRange, "point below the wall");
  const Eigen::RowVectorXd t = tan_.eval_row(x[0], x[1]);
  const Eigen::RowVectorXd z = cheb_.eval_row(std::clamp(x[2], 0.0, cheb_.length()));
  const int R = rows();
  Eigen::RowVectorXd row(n_space());
  for (int j = 0; j < z.size(); ++j) row.segment(R * j, R) = z[j] * t;
  return row;
}

double LinearTransport::interpolate(const Mat& h, int q, const Vector3d& x) const {
  if (x[2] < -1e-12) throw Error(ErrorKind::InterpolationOutOfRange, "point below the wall");
  const Eigen::RowVectorXd t = tan_.eval_row(x[0], x[1]);
  const Eigen::RowVectorXd z = cheb_.eval_row(std::clamp(x[2], 0.0, cheb_.length()));
  const int R = rows();
  Eigen::Map<const Mat> X(h.col(q).data(), R, cheb_.size());
  return t * X * z.transpose();
}

KineticField LinearTransport::to_f(const KineticField& h, const FlowOnGrid& flow) const {
  if (h.frame != Frame::H) throw Error(ErrorKind::Config, "to_f expects an h-frame field");
  KineticField f{Frame::F, h.t, h.data};
  for (int s = 0; s < n_space(); ++s) {
    const Vector3d U = flow.U.row(s).transpose();
    for (int q = 0; q < n_vel(); ++q)
      f.data(s, q) *= sqrt_muM_over_sqrt_mu(cfg_.epsilon, cfg_.TM, U, velocity().node(q));
  }
  return f;
}

KineticField LinearTransport::to_h(const KineticField& f, const FlowOnGrid& flow) const {
  if (f.frame != Frame::F) throw Error(ErrorKind::Config, "to_h expects an f-frame field");
  KineticField h{Frame::H, f.t, f.data};
  for (int s = 0; s < n_space(); ++s) {
    const Vector3d U = flow.U.row(s).transpose();
    for (int q = 0; q < n_vel(); ++q)
      h.data(s, q) /= sqrt_muM_over_sqrt_mu(cfg_.epsilon, cfg_.TM, U, velocity().node(q));
  }
  return h;
}

// ---- Duhamel representation ----

double nu_line_integral(const DuhamelSources& src, int q, double t, const Vector3d& x, const Vector3d& xi, double s,
                        double eps) {
  if (s >= t) return 0;
  static const Rule1D gl = gauss_legendre(8);
  const double half = 0.5 * (t - s), mid = 0.5 * (t + s);
  double acc = 0;
  for (std::size_t k = 0; k < gl.size(); ++k) {
    const double tau = mid + half * gl.x[k];
    acc += gl.w[k] * src.nu(q, tau, x - (t - tau) * xi / eps);
  }
  return half * acc;
}

namespace {

struct Leg {
  double Kh = 0, g = 0;  // attenuated integrals over [s_lo, t]
  bool reached = false;  // the attenuation stayed below the cutoff down to s_lo
  double A_end = 0;      // total exponent at s_lo when reached
};

// Backward path from (t, x) with velocity xi down to time s_lo. A0 is the exponent
// already accumulated before this leg.
Leg walk(const LinearTransport& lt, const DuhamelSources& src, int q, double t, const Vector3d& x, double s_lo,
         double A0) {
  static const Rule1D gl = gauss_legendre(8);
  const double eps = lt.config().epsilon;
  const double stiff = lt.config().kappa * eps * eps;
  const Vector3d xi = lt.velocity().node(q);
  auto at = [&](double s) -> Vector3d { return x - (t - s) * xi / eps; };
  Leg out;
  double b = t, Ab = A0;
  while (b > s_lo) {
    if (Ab > src.cutoff) return out;
    const double lam = src.nu(q, b, at(b)) / stiff;
    double a = std::max(s_lo, b - 2.0 / lam);
    for (double k : src.knots)
      if (k < b && k > a) a = k;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t k = 0; k < gl.size(); ++k) {
      const double s = mid + half * gl.x[k];
      const Vector3d y = at(s);
      const double A = Ab + nu_line_integral(src, q, b, at(b), xi, s, eps) / stiff;
      const double w = half * gl.w[k] * std::exp(-A);
      if (src.Kh) out.Kh += w * src.Kh(q, s, y) / stiff;
      if (src.g) out.g += w * src.g(q, s, y);
    }
    Ab += nu_line_integral(src, q, b, at(b), xi, a, eps) / stiff;
    b = a;
  }
  out.reached = Ab <= src.cutoff;
  out.A_end = Ab;
  return out;
}

// I, M and F along a path that never meets the wall between s_lo = 0 and t.
DuhamelTerms free_terms(const LinearTransport& lt, const DuhamelSources& src, int q, double t, const Vector3d& x,
                        double A0) {
  DuhamelTerms d;
  const Leg l = walk(lt, src, q, t, x, 0.0, A0);
  d.M = l.Kh;
  d.F = l.g;
  if (l.reached && src.h0) {
    const Vector3d y = x - t * lt.velocity().node(q) / lt.config().epsilon;
    d.I = std::exp(-l.A_end) * src.h0(q, y);
  }
  return d;
}

}  // namespace

DuhamelTerms duhamel_terms(const LinearTransport& lt, const DuhamelSources& src, double t, const Vector3d& x, int q) {
  if (!src.nu) throw Error(ErrorKind::Config, "Duhamel sources need nu");
  const double eps = lt.config().epsilon;
  const Vector3d xi = lt.velocity().node(q);
  const Characteristic ch = backward_exit(x, xi, eps);
  if (!ch.exits || ch.tb >= t) return free_terms(lt, src, q, t, x, 0.0);

  // one bounce: the path reaches the wall at s_b = t - t_b
  const double sb = t - ch.tb;
  DuhamelTerms d;
  const Leg l = walk(lt, src, q, t, x, sb, 0.0);
  d.M = l.Kh;
  d.F = l.g;
  if (!l.reached) return d;
  const double att = std::exp(-l.A_end);
  if (src.r) d.B = att * lt.w3inv()[q] * src.r(q, sb, ch.xb);
  const VelocityGrid& g = lt.velocity();
  const double pre = lt.c_mu() * lt.w1()[q];
  for (int qs = 0; qs < lt.n_vel(); ++qs) {
    if (g.node(qs)[2] >= 0) continue;
    const double w = pre * g.weight()[qs] * lt.w2()[qs];
    const DuhamelTerms inner = free_terms(lt, src, qs, sb, ch.xb, l.A_end);
    // inner terms already carry the attenuation up to the wall
    d.I += w * inner.I;
    d.M += w * inner.M;
    d.F += w * inner.F;
  }
  return d;
}

double duhamel_apply(DuhamelKind kind, const LinearTransport& lt, const DuhamelSources& src, double t,
                     const Vector3d& x, int q) {
  const DuhamelTerms d = duhamel_terms(lt, src, t, x, q);
  switch (kind) {
    case DuhamelKind::I: return d.I;
    case DuhamelKind::M: return d.M;
    case DuhamelKind::F: return d.F;
    case DuhamelKind::B: return d.B;
  }
  return 0;
}

std::vector<DuhamelSample> default_duhamel_samples(const LinearTransport& lt, double tb_min, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const VelocityGrid& g = lt.velocity();
  const double eps = lt.config().epsilon;
  const double stiff = lt.config().kappa * eps * eps;
  std::vector<DuhamelSample> out;
  for (int k = 0; k < 4; ++k) {
    DuhamelSample s;
    s.x = {2 * kPi * U(rng), 2 * kPi * U(rng), 0.3 + 0.9 * U(rng)};
    s.q = std::min(lt.n_vel() - 1, static_cast<int>(U(rng) * lt.n_vel()));
    out.push_back(s);
  }
  // wall samples: incoming velocities whose path meets the wall inside the attenuation window
  std::vector<int> incoming, reachable;
  for (int q = 0; q < lt.n_vel(); ++q) {
    if (g.node(q)[2] <= 0) continue;
    incoming.push_back(q);
    if (lt.nu()[q] / stiff * tb_min < 0.8 * 36.0) reachable.push_back(q);
  }
  const auto& pool = reachable.empty() ? incoming : reachable;
  for (int k = 0; k < 4; ++k) {
    DuhamelSample s;
    s.q = pool[std::min<std::size_t>(pool.size() - 1, static_cast<std::size_t>(U(rng) * pool.size()))];
    const double tb_max = std::max(tb_min, 0.8 * 36.0 * stiff / lt.nu()[s.q]);
    const double tb = tb_min + (tb_max - tb_min) * U(rng);
    const double x3 = std::min(tb * g.node(s.q)[2] / eps, lt.normal().length());
    s.x = {2 * kPi * U(rng), 2 * kPi * U(rng), x3};
    out.push_back(s);
  }
  return out;
}

// ---- diagnostics ----

NormDiagnostics kinetic_norms(const LinearTransport& lt, const KineticField& f, const KineticField* rate,
                              const FlowOnGrid& flow, const AnalyticLedger& ledger, double rho, int max_order) {
  if (f.frame != Frame::F) throw Error(ErrorKind::Config, "norms expect an f-frame field");
  if (max_order < 0 || max_order > ledger.max_order)
    throw Error(ErrorKind::OrderCap, "norm order outside the ledger range");
  const double eps = lt.config().epsilon, kap = lt.config().kappa;
  const double tau = ledger.tau(f.t);
  if (!(tau > 0)) throw Error(ErrorKind::OrderCap, "analyticity radius exhausted");
  const VelocityGrid& g = lt.velocity();
  const int ns = lt.n_space(), nv = lt.n_vel(), R = lt.rows(), J = lt.normal().size();
  const Vec& om = g.weight();

  // local hydrodynamic basis, orthonormal for the Lebesgue weights, and nu(|phi|)
  Mat Q(nv, 5 * ns), nuloc(ns, nv);
  Vec ew(nv);
  for (int q = 0; q < nv; ++q) ew[q] = std::exp(rho * g.node(q).squaredNorm());
  parallel_for(ns, [&](int s) {
    const Vector3d U = flow.U.row(s).transpose();
    Mat B(nv, 5);
    for (int q = 0; q < nv; ++q) {
      const Vector3d phi = g.node(q) - eps * U;
      const double sm = std::sqrt(mu0(phi));
      B.row(q) << sm, phi[0] * sm, phi[1] * sm, phi[2] * sm, 0.5 * (phi.squaredNorm() - 3) * sm;
      nuloc(s, q) = nu_hard_sphere(phi.norm());
    }
    // Gram-Schmidt in the weighted inner product
    for (int k = 0; k < 5; ++k) {
      for (int l = 0; l < k; ++l) B.col(k) -= (B.col(l).cwiseProduct(om)).dot(B.col(k)) * B.col(l);
      B.col(k) /= std::sqrt(B.col(k).cwiseProduct(om).dot(B.col(k)));
    }
    Q.middleCols(5 * s, 5) = B;
  });

  NormDiagnostics out;
  out.rho = rho;
  double E2 = 0, D2 = 0, H2 = 0, Y2 = 0;
  for (int a0 = 0; a0 < 2; ++a0) {
    if (a0 == 1 && !rate) break;
    const Mat& base = a0 == 0 ? f.data : rate->data;
    Mat row_d = base;  // d_1^{a1} applied
    for (int a1 = 0; a0 + a1 <= max_order; ++a1) {
      if (a1 > 0) {
        Eigen::Map<const Mat> V(row_d.data(), R, J * nv);
        Mat d = lt.tangential().d1(V);
        row_d = Eigen::Map<Mat>(d.data(), ns, nv);
      }
      Mat cur = row_d;
      for (int a2 = 0; a0 + a1 + a2 <= max_order; ++a2) {
        if (a2 > 0) {
          Eigen::Map<const Mat> V(cur.data(), R, J * nv);
          Mat d = lt.tangential().d2(V);
          cur = Eigen::Map<Mat>(d.data(), ns, nv);
        }
        const MultiIndex alpha{a0, a1, a2};
        const double A = coeff(ledger, alpha, f.t);
        double l2 = 0, micro = 0, sup = 0;
        for (int s = 0; s < ns; ++s) {
          const Vec v = cur.row(s).transpose();
          const auto B = Q.middleCols(5 * s, 5);
          const Vec c = B.transpose() * v.cwiseProduct(om);
          const Vec perp = v - B * c;
          const double w = lt.space_weight()[s];
          l2 += w * v.cwiseAbs2().dot(om);
          micro += w * (perp.cwiseAbs2().cwiseProduct(nuloc.row(s).transpose())).dot(om);
          sup = std::max(sup, v.cwiseAbs().cwiseProduct(ew).maxCoeff());
        }
        E2 += A * A * l2;
        D2 += A * A * micro;
        H2 += A * A * sup * sup;
        Y2 += (alpha.abs() + 1) / tau * A * A * l2;
      }
    }
  }
  out.E = std::sqrt(E2);
  out.D = std::sqrt(D2) / (eps * std::sqrt(kap));
  out.H = std::sqrt(H2);
  out.Y = std::sqrt(Y2);
  return out;
}

ConservationReport conservation_check(const LinearTransport& lt, const KineticField& h_prev,
                                      const KineticField& h_next, const FlowOnGrid& flow, double x3_lo,
                                      double x3_hi) {
  if (h_prev.frame != Frame::H || h_next.frame != Frame::H)
    throw Error(ErrorKind::Config, "conservation check expects h-frame fields");
  const double dt = h_next.t - h_prev.t;
  if (!(dt > 0)) throw Error(ErrorKind::Config, "conservation check needs increasing times");
  const double eps = lt.config().epsilon, del = lt.config().delta, kap = lt.config().kappa;
  const VelocityGrid& g = lt.velocity();
  const int nv = lt.n_vel();
  const Vec wm = g.weight().cwiseProduct(lt.sqrt_muM());
  Mat wxi(nv, 3);
  for (int q = 0; q < nv; ++q) wxi.row(q) = wm[q] * g.node(q).transpose();

  auto moments = [&](const Mat& h, Vec& a, Mat& b) {
    a = h * wm;
    b = h * wxi;
    for (int k = 0; k < 3; ++k) b.col(k) -= eps * flow.U.col(k).cwiseProduct(a);
  };
  Vec a0, a1;
  Mat b0, b1;
  moments(h_prev.data, a0, b0);
  moments(h_next.data, a1, b1);
  const Vec am = 0.5 * (a0 + a1);
  const Mat bm = 0.5 * (b0 + b1);
  const Vec lhs = eps * (a1 - a0) / dt + divergence(lt, bm.col(0), bm.col(1), bm.col(2));

  const Vec Ua1 = flow.U.col(0).cwiseProduct(am), Ua2 = flow.U.col(1).cwiseProduct(am),
            Ua3 = flow.U.col(2).cwiseProduct(am);
  const Vec transport = -eps * divergence(lt, Ua1, Ua2, Ua3);
  const Vec dilation = -flow.divU / del;
  const Vec pressure = -(eps * eps / del) * (flow.dtP + flow.divUP);
  const Vec rhs = transport + dilation + pressure;
  const Vec rhs_displayed = transport - flow.divU / (eps * del) - (eps / del) * flow.UgradU + pressure +
                            (kap * eps * eps / del) * flow.cij_term;

  ConservationReport r;
  r.defect = region_norm(lt, lhs - rhs, x3_lo, x3_hi);
  r.defect_full = region_norm(lt, lhs - rhs, 0.0, x3_hi);
  r.defect_displayed = region_norm(lt, lhs - rhs_displayed, x3_lo, x3_hi);
  r.lhs = region_norm(lt, lhs, x3_lo, x3_hi);
  r.scale = std::max({region_norm(lt, transport, x3_lo, x3_hi), region_norm(lt, dilation, x3_lo, x3_hi),
                      region_norm(lt, pressure, x3_lo, x3_hi)});
  return r;
}

StaticConservation conservation_static(const VelocityGrid& g, double eps, double delta, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> Ud(-1.0, 1.0);
  Vector3d U, dtU, gradP;
  Matrix3d G;
  for (int i = 0; i < 3; ++i) {
    U[i] = Ud(rng);
    dtU[i] = Ud(rng);
    gradP[i] = Ud(rng);
    for (int j = 0; j < 3; ++j) G(i, j) = Ud(rng);
  }
  const double P = Ud(rng), dtP = Ud(rng);
  Matrix3d G0 = G;
  G0.diagonal().array() -= G.trace() / 3.0;

  // quadrature of (eps d_t + xi.grad) mu and of the same applied to P mu
  auto moments = [&](const Matrix3d& grad, double& Imu, double& IP) {
    Imu = IP = 0;
    for (int q = 0; q < g.size(); ++q) {
      const Vector3d& xi = g.node(q);
      const Vector3d phi = xi - eps * U;
      const double m = mu0(phi);
      const double dt_mu = eps * dtU.dot(phi) * m;
      const double dx_mu = eps * xi.dot(grad * phi) * m;
      const double op = eps * dt_mu + dx_mu;
      Imu += g.weight()[q] * op;
      IP += g.weight()[q] * ((eps * dtP + xi.dot(gradP)) * m + P * op);
    }
  };
  double Imu, IP;
  moments(G, Imu, IP);
  double UgU = 0;
  for (int i = 0; i < 3; ++i) UgU += U[i] * G(i, i);
  StaticConservation s;
  const double div = G.trace();
  s.mu_defect = std::abs(Imu - eps * div);
  s.pressure_defect = std::abs(IP - eps * (dtP + P * div + U.dot(gradP)));
  s.mu_displayed = std::abs(Imu - (eps * div + eps * eps * UgU));
  double Imu0, IP0;
  moments(G0, Imu0, IP0);
  double UgU0 = 0;
  for (int i = 0; i < 3; ++i) UgU0 += U[i] * G0(i, i);
  // law: -(1/(eps delta)) Imu0, which vanishes; printed: -(eps/delta) sum U_i d_i U_i
  s.law_displayed = std::abs(-Imu0 / (eps * delta) + eps / delta * UgU0);
  return s;
}

TraceReport boundary_trace_check(const VelocityGrid& g, const VectorXd& F) {
  if (F.size() != g.size()) throw Error(ErrorKind::Config, "trace has the wrong size");
  TraceReport t;
  double flux = 0;
  for (int q = 0; q < g.size(); ++q) {
    const double x3 = g.node(q)[2];
    flux += g.weight()[q] * F[q] * x3;
    if (x3 < 0) t.outgoing += g.weight()[q] * F[q] * -x3;
  }
  t.flux = std::abs(flux);
  return t;
}

VectorXd diffuse_fill(const VelocityGrid& g, const VectorXd& F, double incoming_scale) {
  const TraceReport t = boundary_trace_check(g, F);
  VectorXd out = F;
  for (int q = 0; q < g.size(); ++q)
    if (g.node(q)[2] > 0) out[q] = incoming_scale * c_mu() * mu0(g.node(q)) * t.outgoing;
  return out;
}

// ---- driver ----

VectorXd wall_datum(const LinearTransport& lt, const HilbertKernel& K, const HilbertContext& ctx,
                    const FlowPoint& wall_flow) {
  const VelocityGrid& g = lt.velocity();
  const int nv = g.size();
  const double P = ctx.pressure ? *ctx.pressure : wall_flow.P;
  VectorXd pf(nv);
  for (int q = 0; q < nv; ++q) {
    const Vector3d& xi = g.node(q);
    const Vector3d phi = xi - ctx.epsilon * wall_flow.U;
    double v = P;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (wall_flow.grad(i, j) != 0) v -= ctx.kappa * wall_flow.grad(i, j) * K.A_at(i, j, phi);
    pf[q] = std::exp(-0.25 * (phi.squaredNorm() - xi.squaredNorm())) * v;
  }
  double out = 0;
  for (int q = 0; q < nv; ++q)
    if (g.node(q)[2] < 0) out += g.weight_mu()[q] * pf[q] * -g.node(q)[2];
  const double proj = lt.c_mu() * out;
  VectorXd r(nv);
  for (int q = 0; q < nv; ++q) r[q] = g.sqrt_mu0()[q] * (pf[q] - proj);
  return r;
}

TransportProblem hilbert_problem(const LinearTransport& lt, const HilbertEvaluator& H, const HilbertKernel& K,
                                 const GammaTable& gamma) {
  const TransportConfig& cfg = lt.config();
  const HilbertContext& ctx = H.context();
  if (std::abs(ctx.epsilon - cfg.epsilon) > 1e-15 || std::abs(ctx.delta - cfg.delta) > 1e-15 ||
      std::abs(ctx.kappa - cfg.kappa) > 1e-15)
    throw Error(ErrorKind::Config, "Hilbert and transport scales differ");
  const VelocityGrid& g = lt.velocity();
  if (K.grid().size() != g.size()) throw Error(ErrorKind::Config, "Hilbert kernel lives on another grid");
  const int ns = lt.n_space(), nv = lt.n_vel(), R = lt.rows(), n = g.n();
  const double eps = cfg.epsilon;

  Matrix3d cij;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) cij(i, j) = g.weight_mu().dot(K.A(i, j));

  TransportProblem prob;
  prob.flow = FlowOnGrid::zero(ns);
  prob.source.resize(ns, nv);
  parallel_for(ns, [&](int s) {
    const Vector3d x = lt.position(s);
    const FlowRates fr = H.flow().with_rates(x);
    const FlowPoint& p = fr.at;
    const double P = ctx.pressure ? *ctx.pressure : p.P;
    const double dtP = ctx.pressure ? 0.0 : fr.dtP;
    const Vector3d gradP = ctx.pressure ? Vector3d::Zero() : p.gradP;
    const double div = p.grad.trace();
    prob.flow.U.row(s) = p.U.transpose();
    prob.flow.divU[s] = div;
    prob.flow.P[s] = P;
    prob.flow.dtP[s] = dtP;
    prob.flow.divUP[s] = P * div + p.U.dot(gradP);
    double ugu = 0, cg = 0;
    for (int i = 0; i < 3; ++i) ugu += p.U[i] * p.grad(i, i);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) cg += cij(i, j) * p.grad(i, j);
    prob.flow.UgradU[s] = ugu;
    prob.flow.cij_term[s] = cg * div;

    // R_a / mu0(phi) at the nodes phi, moved to phi = xi - eps U per axis
    const VectorXd G = gamma.apply(ctx, p);
    const VectorXd rho = H.Ra_expanded(x, &G).sum();
    std::array<Mat, 3> M;
    for (int k = 0; k < 3; ++k) {
      std::vector<double> t(g.axis(k));
      for (double& v : t) v -= eps * p.U[k];
      M[k] = g.interp(k).eval_matrix(t);
    }
    VectorXd tmp1(nv), tmp2(nv), shifted(nv);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          double v = 0;
          for (int l = 0; l < n; ++l) v += M[2](c, l) * rho[g.index(a, b, l)];
          tmp1[g.index(a, b, c)] = v;
        }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          double v = 0;
          for (int l = 0; l < n; ++l) v += M[1](b, l) * tmp1[g.index(a, l, c)];
          tmp2[g.index(a, b, c)] = v;
        }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          double v = 0;
          for (int l = 0; l < n; ++l) v += M[0](a, l) * tmp2[g.index(l, b, c)];
          shifted[g.index(a, b, c)] = v;
        }
    for (int q = 0; q < nv; ++q) {
      const Vector3d& xi = g.node(q);
      const Vector3d phi = xi - eps * p.U;
      prob.source(s, q) = -mu0(phi) * shifted[q] / (eps * cfg.delta * lt.sqrt_muM()[q]);
    }
  });

  prob.wall_r.resize(R, nv);
  parallel_for(R, [&](int r) {
    const FlowPoint wf = H.flow().at(Vector3d(lt.tangential().x1(r), lt.tangential().x2(r), 0.0));
    prob.wall_r.row(r) = wall_datum(lt, K, ctx, wf).transpose();
  });

  // initial data in the null space of L_M, smooth in space
  prob.h0.frame = Frame::H;
  prob.h0.t = 0;
  prob.h0.data.resize(ns, nv);
  for (int s = 0; s < ns; ++s) {
    const Vector3d x = lt.position(s);
    const double amp = 0.1 * std::cos(x[0]) * std::exp(-x[2]);
    prob.h0.data.row(s) = amp * lt.w1().transpose();
  }
  return prob;
}

std::string TrajectoryResult::csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "step,t,mass,wall_flux,E,D,H,Y,duhamel_residual\n";
  for (const StepRow& r : rows) {
    os << r.step << ',' << r.t << ',' << r.mass << ',' << r.wall_flux << ',' << r.norms.E << ',' << r.norms.D << ','
       << r.norms.H << ',' << r.norms.Y << ',';
    if (r.duhamel) os << *r.duhamel;
    os << '\n';
  }
  return os.str();
}

TrajectoryResult integrate_linear(const LinearTransport& lt, const TransportProblem& prob, double t_final, double dt,
                                  const IntegrateOptions& opt) {
  const TransportConfig& cfg = lt.config();
  if (!(dt > 0) || !(t_final > 0)) throw Error(ErrorKind::Config, "dt and t_final must be positive");
  const long nsteps = std::lround(t_final / dt);
  if (nsteps < 1 || std::abs(nsteps * dt - t_final) > 1e-9 * t_final)
    throw Error(ErrorKind::Config, "t_final must be a whole number of steps");
  double vmax = 0;
  for (const auto& xi : lt.velocity().nodes()) vmax = std::max(vmax, std::abs(xi[2]));
  if (dt * vmax / cfg.epsilon > cfg.max_shift * cfg.x3_max)
    throw Error(ErrorKind::Cfl, "normal displacement per step exceeds the allowed shift");
  const int ns = lt.n_space(), nv = lt.n_vel();
  if (prob.h0.data.rows() != ns || prob.h0.data.cols() != nv)
    throw Error(ErrorKind::Config, "initial data has the wrong shape");
  if (prob.h0.frame != Frame::H) throw Error(ErrorKind::Config, "initial data must be in the h frame");

  KineticField h = prob.h0;
  lt.impose_wall(h.data, prob.wall_r);
  const KineticField h_start = h;
  const Mat inc = lt.source_increment(prob.source, dt);
  const double stiff = cfg.kappa * cfg.epsilon * cfg.epsilon;

  TrajectoryResult res;
  std::optional<KineticField> f_prev;
  double H_run = 0;
  auto record = [&](int step) {
    StepRow row;
    row.step = step;
    row.t = h.t;
    row.mass = lt.mass(h.data);
    row.wall_flux = lt.wall_mass_flux(h.data).cwiseAbs().maxCoeff();
    res.max_wall_flux = std::max(res.max_wall_flux, row.wall_flux);
    if (opt.norms) {
      KineticField f = lt.to_f(h, prob.flow);
      std::optional<KineticField> rate;
      if (f_prev) {
        rate = f;
        rate->data = cfg.epsilon * (f.data - f_prev->data) / dt;
      }
      row.norms = kinetic_norms(lt, f, rate ? &*rate : nullptr, prob.flow, opt.ledger, opt.rho, opt.max_order);
      H_run = std::max(H_run, row.norms.H);
      row.norms.H = H_run;
      f_prev = std::move(f);
    }
    res.rows.push_back(row);
  };

  const bool duhamel = !opt.samples.empty();
  std::deque<std::pair<double, Mat>> snaps;
  const double window = 36.0 * stiff / lt.nu().minCoeff() + 2 * dt;
  if (duhamel) snaps.emplace_back(h.t, lt.apply_K(h.data));
  record(0);
  KineticField prev = h;
  for (long n = 1; n <= nsteps; ++n) {
    prev = h;
    lt.step(h, inc, prob.wall_r, dt);
    h.t = n * dt;
    record(static_cast<int>(n));
    if (duhamel) {
      snaps.emplace_back(h.t, lt.apply_K(h.data));
      while (snaps.size() > 2 && snaps[1].first < h.t - window) snaps.pop_front();
    }
    if (opt.on_step) opt.on_step(h, static_cast<int>(n));
  }
  res.final = h;
  res.conservation = conservation_check(lt, prev, h, prob.flow, opt.conservation_lo, opt.conservation_hi);

  if (duhamel) {
    DuhamelSources src;
    src.nu = [&](int q, double, const Vector3d&) { return lt.nu()[q]; };
    src.Kh = [&](int q, double s, const Vector3d& y) {
      auto hi = std::lower_bound(snaps.begin(), snaps.end(), s,
                                 [](const std::pair<double, Mat>& a, double v) { return a.first < v; });
      if (hi == snaps.begin()) return lt.interpolate(hi->second, q, y);
      if (hi == snaps.end()) return lt.interpolate(snaps.back().second, q, y);
      auto lo = std::prev(hi);
      const double th = (s - lo->first) / (hi->first - lo->first);
      return (1 - th) * lt.interpolate(lo->second, q, y) + th * lt.interpolate(hi->second, q, y);
    };
    if (prob.source.size() > 0) src.g = [&](int q, double, const Vector3d& y) { return lt.interpolate(prob.source, q, y); };
    src.h0 = [&](int q, const Vector3d& y) { return lt.interpolate(h_start.data, q, y); };
    if (prob.wall_r.size() > 0)
      src.r = [&](int q, double, const Vector3d& xw) {
        return lt.tangential().eval_row(xw[0], xw[1]).dot(prob.wall_r.col(q));
      };
    for (const auto& s : snaps) src.knots.push_back(s.first);
    std::vector<double> err(opt.samples.size()), mag(opt.samples.size());
    parallel_for(static_cast<int>(opt.samples.size()), [&](int i) {
      const DuhamelSample& smp = opt.samples[i];
      const double hv = lt.interpolate(h.data, smp.q, smp.x);
      const double mild = duhamel_terms(lt, src, h.t, smp.x, smp.q).total(cfg.epsilon, cfg.delta);
      err[i] = std::abs(hv - mild);
      mag[i] = std::abs(hv);
    });
    const double m = *std::max_element(mag.begin(), mag.end());
    res.duhamel_residual = *std::max_element(err.begin(), err.end()) / (m > 0 ? m : 1.0);
    res.rows.back().duhamel = res.duhamel_residual;
  }
  return res;
}

RefinementStudy refinement_study(const LinearTransport& lt, const TransportProblem& prob, double t_final,
                                 const std::vector<double>& dts, const IntegrateOptions& opt) {
  if (dts.size() < 2) throw Error(ErrorKind::Config, "refinement needs at least two step sizes");
  RefinementStudy st;
  IntegrateOptions o = opt;
  o.norms = false;
  for (double dt : dts) {
    const TrajectoryResult r = integrate_linear(lt, prob, t_final, dt, o);
    st.dt.push_back(dt);
    st.conservation.push_back(r.conservation.defect);
    st.duhamel.push_back(r.duhamel_residual);
  }
  for (std::size_t i = 0; i + 1 < dts.size(); ++i) {
    st.conservation_ratio.push_back(st.conservation[i] / st.conservation[i + 1]);
    if (!o.samples.empty())
      st.duhamel_order.push_back(std::log(st.duhamel[i] / st.duhamel[i + 1]) / std::log(dts[i] / dts[i + 1]));
  }
  return st;
}

void save_snapshot(const KineticField& h, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Config, "cannot write snapshot " + path);
  os.write(kSnapshotMagic, 8);
  const std::int64_t frame = h.frame == Frame::H ? 1 : 0, rows = h.data.rows(), cols = h.data.cols();
  os.write(reinterpret_cast<const char*>(&frame), 8);
  os.write(reinterpret_cast<const char*>(&h.t), 8);
  os.write(reinterpret_cast<const char*>(&rows), 8);
  os.write(reinterpret_cast<const char*>(&cols), 8);
  os.write(reinterpret_cast<const char*>(h.data.data()), 8 * rows * cols);
  if (!os) throw Error(ErrorKind::Config, "short write to snapshot " + path);
}

KineticField load_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Config, "cannot read snapshot " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kSnapshotMagic, 8) != 0) throw Error(ErrorKind::Config, "not a snapshot: " + path);
  std::int64_t frame = 0, rows = 0, cols = 0;
  KineticField h;
  is.read(reinterpret_cast<char*>(&frame), 8);
  is.read(reinterpret_cast<char*>(&h.t), 8);
  is.read(reinterpret_cast<char*>(&rows), 8);
  is.read(reinterpret_cast<char*>(&cols), 8);
  if (!is || rows < 0 || cols < 0 || rows * cols > (1LL << 31)) throw Error(ErrorKind::Config, "corrupt snapshot");
  h.frame = frame == 1 ? Frame::H : Frame::F;
  h.data.resize(rows, cols);
  is.read(reinterpret_cast<char*>(h.data.data()), 8 * rows * cols);
  if (!is) throw Error(ErrorKind::Config, "truncated snapshot " + path);
  return h;
}

}  // namespace ep
