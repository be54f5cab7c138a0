#include "ep/collision.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ep/error.hpp"
#include "ep/parallel.hpp"

namespace ep {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2 * kPi;
const double kNorm3 = std::pow(kTwoPi, -1.5);
const char kCacheMagic[8] = {'E', 'P', 'C', 'O', 'L', 'L', '0', '2'};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Accumulates sum_k w_k * (tensor Lagrange basis at point k) into one operator row.
class RowAccumulator {
 public:
  explicit RowAccumulator(const VelocityGrid& g) : g_(g), n_(g.n()) {}
  void reserve(int k) {
    pts_.reserve(k);
    w_.reserve(k);
  }
  void add(const Eigen::Vector3d& p, double w) {
    pts_.push_back(p);
    w_.push_back(w);
  }
  void flush(double* row) {
    const int K = static_cast<int>(pts_.size());
    if (K == 0) return;
    RowMat A(K, n_), B(K, n_ * n_);
    std::vector<double> ly(n_), lz(n_);
    for (int k = 0; k < K; ++k) {
      g_.interp(0).basis(pts_[k][0], A.row(k).data());
      A.row(k) *= w_[k];
      g_.interp(1).basis(pts_[k][1], ly.data());
      g_.interp(2).basis(pts_[k][2], lz.data());
      double* b = B.row(k).data();
      for (int j = 0; j < n_; ++j)
        for (int c = 0; c < n_; ++c) b[j * n_ + c] = ly[j] * lz[c];
    }
    RowMat R = A.transpose() * B;  // n x n^2, row-major matches grid ordering
    const int N = n_ * n_ * n_;
    for (int i = 0; i < N; ++i) row[i] += R.data()[i];
    pts_.clear();
    w_.clear();
  }

 private:
  const VelocityGrid& g_;
  int n_;
  std::vector<Eigen::Vector3d> pts_;
  std::vector<double> w_;
};

// int_0^inf 2 r (2 pi)^{-3/2} e^{-(a+r)^2/2} dr
double plane_mass(double a) {
  return 2 * kNorm3 * (std::exp(-0.5 * a * a) - a * std::sqrt(kPi / 2) * std::erfc(a / std::sqrt(2.0)));
}

double hermite_prob(int k, double x) {
  double h0 = 1, h1 = x;
  if (k == 0) return 1;
  for (int j = 1; j < k; ++j) {
    const double h2 = x * h1 - j * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

}  // namespace

double nu_hard_sphere(double r) {
  if (r < 1e-6) return 2 * kPi * (2 * std::sqrt(2 / kPi) * (1 + r * r / 6));
  return 2 * kPi * (std::sqrt(2 / kPi) * std::exp(-0.5 * r * r) + (r + 1 / r) * std::erf(r / std::sqrt(2.0)));
}

std::string CollisionConfig::key() const {
  std::ostringstream os;
  os << "hermite n" << n_v << " s" << sphere_theta << "x" << sphere_phi << " r" << radial << " span"
     << radial_span << " g" << gamma_theta << "x" << gamma_phi << "r" << gamma_radial << " epsU0";
  return os.str();
}

Collision::Collision(const CollisionConfig& cfg) : Collision(cfg, true) {}

Collision::Collision(const CollisionConfig& cfg, bool build) : cfg_(cfg), grid_(VelocityGrid::hermite(cfg.n_v)) {
  if (cfg.n_v < 4 || cfg.n_v % 2) throw Error(ErrorKind::Config, "collision n_v must be even and >= 4");
  build_modal();
  if (build) build_tables();
}

void Collision::build_modal() {
  // coefficients in the tensor Hermite basis: c_k = sum_i wmu_i p_i He_k(x_i) / k!
  const int n = grid_.n(), N = size();
  const std::vector<double>& x = grid_.axis(0);
  const Rule1D r = gauss_hermite(n);
  Eigen::MatrixXd M1(n, n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) M1(k, i) = r.w[i] * hermite_prob(k, x[i]) / std::tgamma(k + 1.0);
  modal_.resize(N, N);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
              modal_(grid_.index(a, b, c), grid_.index(i, j, k)) = M1(a, i) * M1(b, j) * M1(c, k);
}

void Collision::plane_basis(double a, const Eigen::Vector3d& e, double* out) const {
  // Gaussian average over the plane {a e + s, s orthogonal to e} of the tensor
  // Hermite polynomial He_k equals He_{|k|}(a) e^k.
  const int n = grid_.n();
  std::vector<double> h(3 * n), p1(n), p2(n), p3(n);
  for (int m = 0; m < 3 * n; ++m) h[m] = hermite_prob(m, a);
  p1[0] = p2[0] = p3[0] = 1;
  for (int k = 1; k < n; ++k) {
    p1[k] = p1[k - 1] * e[0];
    p2[k] = p2[k - 1] * e[1];
    p3[k] = p3[k - 1] * e[2];
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) out[grid_.index(i, j, k)] = h[i + j + k] * p1[i] * p2[j] * p3[k];
}

void Collision::build_tables() {
  const int N = size();
  nu_.resize(N);
  for (int i = 0; i < N; ++i) nu_[i] = nu_hard_sphere(grid_.node(i).norm());
  Eigen::MatrixXd Lraw = Eigen::MatrixXd::Zero(N, N);
  K1_ = Eigen::MatrixXd::Zero(N, N);
  const SphereRule sph = sphere_product(cfg_.sphere_theta, cfg_.sphere_phi);
  const Rule1D rad = gauss_legendre(cfg_.radial, 0.0, 1.0);

  // rows are written into transposed storage so each task owns a contiguous column
  Eigen::MatrixXd LT = Eigen::MatrixXd::Zero(N, N), K1T = Eigen::MatrixXd::Zero(N, N);
  parallel_for(N, [&](int i) {
    const Eigen::Vector3d phi = grid_.node(i);
    const Eigen::Matrix3d F = frame_along(phi);
    RowAccumulator line_k1(grid_), line(grid_);
    Eigen::VectorXd plane = Eigen::VectorXd::Zero(N);
    Eigen::VectorXd hb(N);
    for (std::size_t d = 0; d < sph.dir.size(); ++d) {
      const Eigen::Vector3d e = F * sph.dir[d];
      const double we = sph.w[d];
      const double a = phi.dot(e);
      const Eigen::Vector3d perp = phi - a * e;
      const double R = std::max(0.0, -a) + cfg_.radial_span;
      const double gperp = std::exp(-0.5 * perp.squaredNorm());
      for (std::size_t k = 0; k < rad.size(); ++k) {
        const double r = R * rad.x[k], wr = R * rad.w[k];
        const double ga = std::exp(-0.5 * (a + r) * (a + r));
        const Eigen::Vector3d pt = phi + r * e;
        const double w1 = we * wr * kTwoPi * r * r * r * kNorm3 * ga * gperp;
        const double w21 = we * wr * 2 * r * ga / std::sqrt(kTwoPi);
        line_k1.add(pt, w1);
        line.add(pt, w1 - w21);
      }
      plane_basis(a, e, hb.data());
      plane -= (we * plane_mass(a) * kTwoPi) * hb;
    }
    line_k1.flush(K1T.col(i).data());
    line.flush(LT.col(i).data());
    LT.col(i) += modal_.transpose() * plane;
    LT(i, i) += nu_[i];
  });
  Lraw = LT.transpose();
  K1_ = K1T.transpose();
  Lraw_ = Lraw;
  const Eigen::VectorXd& w = grid_.weight_mu();
  // Symmetrise in the mu0-weighted inner product, then remove the residual
  // quadrature leakage into the collision invariants.
  Eigen::MatrixXd WL = w.asDiagonal() * Lraw;
  raw_asym_ = (WL - WL.transpose()).cwiseAbs().maxCoeff() / WL.cwiseAbs().maxCoeff();
  Eigen::MatrixXd S = 0.5 * (WL + WL.transpose());
  Eigen::MatrixXd Q(N, 5);
  {
    const auto inv = invariants();
    for (int k = 0; k < 5; ++k) Q.col(k) = inv[k];
    // weighted Gram-Schmidt
    for (int k = 0; k < 5; ++k) {
      for (int j = 0; j < k; ++j) Q.col(k) -= (Q.col(j).cwiseProduct(w)).dot(Q.col(k)) * Q.col(j);
      Q.col(k) /= std::sqrt((Q.col(k).cwiseProduct(w)).dot(Q.col(k)));
    }
  }
  // Pi = I - Q Q^T W ; symmetric form W Pi^T ... written as Pi^T S Pi
  Eigen::MatrixXd WQ = w.asDiagonal() * Q;
  Eigen::MatrixXd SP = S - (S * Q) * WQ.transpose();
  Eigen::MatrixXd PSP = SP - WQ * (Q.transpose() * SP);
  PSP = 0.5 * (PSP + PSP.transpose());
  L_ = w.cwiseInverse().asDiagonal() * PSP;
  sym_shift_ = 0;
  {
    // relative size of the correction in the weighted operator norm (power iteration proxy: Frobenius)
    Eigen::MatrixXd D = (PSP - WL);
    const Eigen::VectorXd sw = w.cwiseSqrt().cwiseInverse();
    D = sw.asDiagonal() * D * sw.asDiagonal();
    Eigen::MatrixXd R = sw.asDiagonal() * WL * sw.asDiagonal();
    sym_shift_ = D.norm() / R.norm();
  }
}

double Collision::inner(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
  return (grid_.weight_mu().array() * p.array() * q.array()).sum();
}

std::array<Eigen::VectorXd, 5> Collision::invariants() const {
  const int N = size();
  std::array<Eigen::VectorXd, 5> v;
  for (auto& x : v) x.resize(N);
  for (int i = 0; i < N; ++i) {
    const auto& p = grid_.node(i);
    v[0][i] = 1;
    v[1][i] = p[0];
    v[2][i] = p[1];
    v[3][i] = p[2];
    v[4][i] = p.squaredNorm();
  }
  return v;
}

MomentTriple Collision::moments(const Eigen::VectorXd& p) const {
  MomentTriple m;
  const auto& w = grid_.weight_mu();
  for (int i = 0; i < size(); ++i) {
    const auto& x = grid_.node(i);
    const double f = w[i] * p[i];
    m.a += f;
    m.b += f * x;
    m.c += f * (x.squaredNorm() - 3) / 3;
  }
  return m;
}

Eigen::VectorXd Collision::hydro(const MomentTriple& m) const {
  Eigen::VectorXd r(size());
  for (int i = 0; i < size(); ++i) {
    const auto& x = grid_.node(i);
    r[i] = m.a + m.b.dot(x) + m.c * (x.squaredNorm() - 3) / 2;
  }
  return r;
}

Eigen::VectorXd boundary_project(const VelocityGrid& g, const Eigen::VectorXd& p) {
  double s = 0;
  const auto& w = g.weight_mu();
  for (int i = 0; i < g.size(); ++i)
    if (g.node(i)[2] < 0) s += w[i] * p[i] * std::abs(g.node(i)[2]);
  return Eigen::VectorXd::Constant(g.size(), c_mu() * s);
}

namespace {

// Sample points used by the bilinear term at one grid node: for each direction a
// block of plane points followed by the line points.
struct GammaStencil {
  std::vector<Eigen::Vector3d> pts;   // line points, n_line per direction
  std::vector<double> a;              // offset of each direction
  std::vector<Eigen::Vector3d> dir;
  std::vector<double> gain_w, loss_w; // per line point
  int n_dir = 0, n_line = 0;
};

GammaStencil gamma_stencil(const Eigen::Vector3d& phi, const CollisionConfig& cfg, const SphereRule& sph,
                           const Rule1D& rad) {
  GammaStencil st;
  st.n_dir = static_cast<int>(sph.dir.size());
  st.n_line = static_cast<int>(rad.size());
  const Eigen::Matrix3d F = frame_along(phi);
  st.pts.reserve(st.n_dir * st.n_line);
  for (int d = 0; d < st.n_dir; ++d) {
    const Eigen::Vector3d e = F * sph.dir[d];
    const double we = sph.w[d];
    const double a = phi.dot(e);
    st.a.push_back(a);
    st.dir.push_back(e);
    const Eigen::Vector3d perp = phi - a * e;
    const double R = std::max(0.0, -a) + cfg.radial_span;
    const double gperp = std::exp(-0.5 * perp.squaredNorm());
    for (std::size_t k = 0; k < rad.size(); ++k) {
      const double r = R * rad.x[k], wr = R * rad.w[k];
      const double ga = std::exp(-0.5 * (a + r) * (a + r));
      st.pts.push_back(phi + r * e);
      // the plane average carries a factor 2 pi
      st.gain_w.push_back(we * wr * 2 * r * kNorm3 * ga * kTwoPi);
      st.loss_w.push_back(we * wr * kTwoPi * r * r * r * kNorm3 * ga * gperp);
    }
  }
  return st;
}

// Values of several nodal functions at many points: one GEMM over the last axis.
// F holds the functions as columns; returns (points x functions).
Eigen::MatrixXd interpolate_many(const VelocityGrid& g, const std::vector<Eigen::Vector3d>& pts,
                                 const Eigen::MatrixXd& F) {
  const int n = g.n(), K = static_cast<int>(pts.size()), m = static_cast<int>(F.cols());
  RowMat Lx(K, n), Ly(K, n), Lz(K, n);
  for (int k = 0; k < K; ++k) {
    g.interp(0).basis(pts[k][0], Lx.row(k).data());
    g.interp(1).basis(pts[k][1], Ly.row(k).data());
    g.interp(2).basis(pts[k][2], Lz.row(k).data());
  }
  // C(c, f*n*n + a*n + b) = F(index(a,b,c), f)
  Eigen::MatrixXd C(n, m * n * n);
  for (int f = 0; f < m; ++f)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) C(c, f * n * n + a * n + b) = F(g.index(a, b, c), f);
  const RowMat T = Lz * C;
  Eigen::MatrixXd out(K, m);
  for (int k = 0; k < K; ++k)
    for (int f = 0; f < m; ++f) {
      const double* t = T.row(k).data() + f * n * n;
      double s = 0;
      for (int a = 0; a < n; ++a) {
        double sa = 0;
        for (int b = 0; b < n; ++b) sa += Ly(k, b) * t[a * n + b];
        s += Lx(k, a) * sa;
      }
      out(k, f) = s;
    }
  return out;
}

}  // namespace

Eigen::VectorXd Collision::gamma(const Eigen::VectorXd& p, const Eigen::VectorXd& q, int refine) const {
  if (refine < 1) throw Error(ErrorKind::Config, "gamma refinement factor must be at least 1");
  const int N = size();
  Eigen::VectorXd out(N);
  const SphereRule sph = sphere_product(refine * cfg_.gamma_theta, refine * cfg_.gamma_phi);
  const Rule1D rad = gauss_legendre(refine * cfg_.gamma_radial, 0.0, 1.0);
  const double box = grid_.box();
  Eigen::MatrixXd PQ(N, 2);
  PQ.col(0) = p;
  PQ.col(1) = q;
  const Eigen::VectorXd cp = modal_ * p, cq = modal_ * q;
  std::vector<long> oor(N, 0);
  parallel_for(N, [&](int i) {
    const GammaStencil st = gamma_stencil(grid_.node(i), cfg_, sph, rad);
    for (const auto& x : st.pts)
      if (x.cwiseAbs().maxCoeff() > box) ++oor[i];
    const Eigen::MatrixXd V = interpolate_many(grid_, st.pts, PQ);
    Eigen::VectorXd hb(N);
    double gain = 0, loss_q = 0, loss_p = 0;
    for (int d = 0, k = 0; d < st.n_dir; ++d) {
      plane_basis(st.a[d], st.dir[d], hb.data());
      const double Ppl = hb.dot(cp), Qpl = hb.dot(cq);
      for (int r = 0; r < st.n_line; ++r, ++k) {
        gain += st.gain_w[k] * (V(k, 0) * Qpl + V(k, 1) * Ppl);
        loss_q += st.loss_w[k] * V(k, 1);
        loss_p += st.loss_w[k] * V(k, 0);
      }
    }
    out[i] = gain - p[i] * loss_q - q[i] * loss_p;
  });
  long t = 0;
  for (long c : oor) t += c;
  gamma_oor_ = t;
  return out;
}

Eigen::MatrixXd Collision::gamma_matrix(const Eigen::VectorXd& p) const {
  const int N = size();
  const SphereRule sph = sphere_product(cfg_.gamma_theta, cfg_.gamma_phi);
  const Rule1D rad = gauss_legendre(cfg_.gamma_radial, 0.0, 1.0);
  Eigen::MatrixXd GT = Eigen::MatrixXd::Zero(N, N);
  Eigen::MatrixXd P1(N, 1);
  P1.col(0) = p;
  const Eigen::VectorXd cp = modal_ * p;
  parallel_for(N, [&](int i) {
    const GammaStencil st = gamma_stencil(grid_.node(i), cfg_, sph, rad);
    const Eigen::MatrixXd V = interpolate_many(grid_, st.pts, P1);
    RowAccumulator acc(grid_);
    acc.reserve(static_cast<int>(st.pts.size()));
    Eigen::VectorXd hb(N), plane = Eigen::VectorXd::Zero(N);
    double loss_p = 0;
    for (int d = 0, k = 0; d < st.n_dir; ++d) {
      plane_basis(st.a[d], st.dir[d], hb.data());
      const double Ppl = hb.dot(cp);
      double line_p = 0;
      for (int r = 0; r < st.n_line; ++r, ++k) {
        line_p += st.gain_w[k] * V(k, 0);
        loss_p += st.loss_w[k] * V(k, 0);
        acc.add(st.pts[k], st.gain_w[k] * Ppl - p[i] * st.loss_w[k]);
      }
      plane += line_p * hb;
    }
    acc.flush(GT.col(i).data());
    GT.col(i) += modal_.transpose() * plane;
    GT(i, i) -= loss_p;
  });
  return GT.transpose();
}

AijResult Collision::solve_Aij() const {
  const int N = size();
  AijResult res;
  const auto inv = invariants();
  // orthonormal basis of the null space in the weighted inner product
  std::vector<Eigen::VectorXd> basis;
  for (const auto& v : inv) {
    Eigen::VectorXd u = v;
    for (const auto& b : basis) u -= inner(u, b) * b;
    u /= norm(u);
    basis.push_back(u);
  }
  auto proj_out = [&](Eigen::VectorXd& x) {
    for (const auto& b : basis) x -= inner(x, b) * b;
  };
  double worst_res = 0;
  int total_it = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd src(N);
      for (int k = 0; k < N; ++k) {
        const auto& x = grid_.node(k);
        src[k] = x[i] * x[j] - (i == j ? x.squaredNorm() / 3 : 0.0);
      }
      res.Ahat[i][j] = src;
      Eigen::VectorXd pr = src;
      proj_out(pr);
      const double nc = norm(src - pr) / norm(src);
      res.null_component = std::max(res.null_component, nc);
      if (nc > 1e-6)
        throw Error(ErrorKind::NullComponent, "source has a collision-invariant component");
      // conjugate gradients in the weighted inner product
      Eigen::VectorXd x = Eigen::VectorXd::Zero(N), r = pr, d = r;
      double rr = inner(r, r);
      const double b0 = std::sqrt(rr);
      int it = 0;
      while (std::sqrt(rr) > cfg_.cg_tol * b0 && it < cfg_.cg_max_iter) {
        Eigen::VectorXd Ad = L_ * d;
        proj_out(Ad);
        const double alpha = rr / inner(d, Ad);
        x += alpha * d;
        r -= alpha * Ad;
        proj_out(r);
        proj_out(x);
        const double rn = inner(r, r);
        d = r + (rn / rr) * d;
        proj_out(d);
        rr = rn;
        ++it;
      }
      total_it += it;
      // true residual
      Eigen::VectorXd tr = L_ * x - pr;
      proj_out(tr);
      const double rel = norm(tr) / b0;
      worst_res = std::max(worst_res, rel);
      if (rel > 10 * cfg_.cg_tol)
        throw Error(ErrorKind::SolverDiverged, "CG did not reach tolerance for A_ij");
      res.A[i][j] = x;
    }
  res.iterations = total_it;
  res.final_residual = worst_res;
  double num = 0, den = 0;
  for (int k = 0; k < 3; ++k)
    for (int m = 0; m < 3; ++m)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double g = inner(res.Ahat[k][m], res.A[i][j]);
          res.gram(3 * k + m, 3 * i + j) = g;
          const double T = (k == i && m == j) + (k == j && m == i) - (2.0 / 3) * (k == m && i == j);
          num += g * T;
          den += T * T;
        }
  res.eta0 = num / den;
  double worst = 0;
  for (int k = 0; k < 3; ++k)
    for (int m = 0; m < 3; ++m)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double T = (k == i && m == j) + (k == j && m == i) - (2.0 / 3) * (k == m && i == j);
          worst = std::max(worst, std::abs(res.gram(3 * k + m, 3 * i + j) - res.eta0 * T));
        }
  res.gram_fit_residual = worst / std::abs(res.eta0);
  const double g12 = res.gram(1, 1), g21 = res.gram(3, 3), g13 = res.gram(2, 2);
  const double gmax = std::max({g12, g21, g13}), gmin = std::min({g12, g21, g13});
  res.isotropy_spread = (gmax - gmin) / std::abs(gmax);
  // integral of A_ij d(phi) = sum w_leb sqrt(mu0) a
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < N; ++k) s += grid_.weight()[k] * grid_.sqrt_mu0()[k] * res.A[i][j][k];
      res.c(i, j) = s;
    }
  return res;
}

void Collision::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Config, "cannot write collision cache " + path);
  os.write(kCacheMagic, 8);
  const std::string key = cfg_.key();
  const std::uint64_t klen = key.size(), N = size();
  os.write(reinterpret_cast<const char*>(&klen), 8);
  os.write(key.data(), key.size());
  os.write(reinterpret_cast<const char*>(&N), 8);
  os.write(reinterpret_cast<const char*>(&raw_asym_), 8);
  os.write(reinterpret_cast<const char*>(&sym_shift_), 8);
  os.write(reinterpret_cast<const char*>(nu_.data()), 8 * N);
  os.write(reinterpret_cast<const char*>(L_.data()), 8 * N * N);
  os.write(reinterpret_cast<const char*>(K1_.data()), 8 * N * N);
  os.write(reinterpret_cast<const char*>(Lraw_.data()), 8 * N * N);
}

std::shared_ptr<Collision> Collision::load(const std::string& path, const CollisionConfig& cfg) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return nullptr;
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kCacheMagic, 8)) return nullptr;
  std::uint64_t klen = 0, N = 0;
  is.read(reinterpret_cast<char*>(&klen), 8);
  if (!is || klen > 4096) return nullptr;
  std::string key(klen, '\0');
  is.read(key.data(), klen);
  if (key != cfg.key()) return nullptr;
  std::shared_ptr<Collision> c(new Collision(cfg, false));
  is.read(reinterpret_cast<char*>(&N), 8);
  if (static_cast<int>(N) != c->size()) return nullptr;
  is.read(reinterpret_cast<char*>(&c->raw_asym_), 8);
  is.read(reinterpret_cast<char*>(&c->sym_shift_), 8);
  c->nu_.resize(N);
  c->L_.resize(N, N);
  c->K1_.resize(N, N);
  c->Lraw_.resize(N, N);
  is.read(reinterpret_cast<char*>(c->nu_.data()), 8 * N);
  is.read(reinterpret_cast<char*>(c->L_.data()), 8 * N * N);
  is.read(reinterpret_cast<char*>(c->K1_.data()), 8 * N * N);
  is.read(reinterpret_cast<char*>(c->Lraw_.data()), 8 * N * N);
  if (!is) return nullptr;
  return c;
}

std::shared_ptr<const Collision> Collision::build_or_load(const CollisionConfig& cfg) {
  std::string path;
  if (!cfg.cache_dir.empty()) {
    std::filesystem::create_directories(cfg.cache_dir);
    const std::size_t h = std::hash<std::string>{}(cfg.key());
    std::ostringstream os;
    os << cfg.cache_dir << "/collision_" << std::hex << h << ".bin";
    path = os.str();
    if (auto c = load(path, cfg)) return c;
  }
  auto c = std::make_shared<Collision>(cfg);
  if (!path.empty()) c->save(path);
  return c;
}

Eigen::VectorXd random_reduced(const VelocityGrid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<std::array<int, 3>> idx;
  std::vector<double> coef;
  for (int d = 0; d <= 4; ++d)
    for (int i = 0; i <= d; ++i)
      for (int j = 0; i + j <= d; ++j) {
        idx.push_back({i, j, d - i - j});
        coef.push_back(U(rng));
      }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(g.size());
  for (int k = 0; k < g.size(); ++k) {
    const auto& x = g.node(k);
    double s = 0;
    for (std::size_t m = 0; m < idx.size(); ++m) {
      const auto& a = idx[m];
      const double fac = std::sqrt(std::tgamma(a[0] + 1.0) * std::tgamma(a[1] + 1.0) * std::tgamma(a[2] + 1.0));
      s += coef[m] * hermite_prob(a[0], x[0]) * hermite_prob(a[1], x[1]) * hermite_prob(a[2], x[2]) / fac;
    }
    p[k] = s;
  }
  return p;
}

GapReport spectral_gap(const Collision& c, int draws, unsigned seed) {
  GapReport g;
  g.draws = draws;
  g.min_form = 1e300;
  g.gap_constant = 1e300;
  for (int d = 0; d < draws; ++d) {
    const Eigen::VectorXd p = random_reduced(c.grid(), seed + 7919u * d);
    const double form = c.inner(c.apply_L(p), p);
    const Eigen::VectorXd q = p - c.project(p);
    const double nq = c.inner(q.cwiseProduct(c.nu()), q);
    g.min_form = std::min(g.min_form, form / c.inner(p, p));
    g.gap_constant = std::min(g.gap_constant, form / nq);
  }
  return g;
}

GainSplit k2_direct(const Eigen::Vector3d& xi, const KineticFn& f, const GainQuadrature& q) {
  const Rule1D rad = gauss_legendre(q.radial, 0.0, 1.0);
  const SphereRule sig = sphere_product(q.sphere_theta, q.sphere_phi);
  // hemisphere-split rule for omega around the relative direction
  const Rule1D ct = gauss_legendre(q.omega_theta, 0.0, 1.0);
  const double R = xi.norm() + 13.0;
  const double sm_xi = std::sqrt(mu0(xi));
  double post = 0, star = 0;
  for (std::size_t s = 0; s < sig.dir.size(); ++s) {
    const Eigen::Vector3d sigma = sig.dir[s];
    const Eigen::Matrix3d F = frame_along(sigma);
    for (std::size_t k = 0; k < rad.size(); ++k) {
      const double rho = R * rad.x[k], wr = R * rad.w[k];
      const Eigen::Vector3d eta = xi + rho * sigma;
      const double base = sig.w[s] * wr * rho * rho * std::sqrt(mu0(eta));
      if (base == 0) continue;
      for (int hemi = 0; hemi < 2; ++hemi)
        for (int a = 0; a < q.omega_theta; ++a) {
          const double c = hemi ? -ct.x[a] : ct.x[a];
          const double st = std::sqrt(std::max(0.0, 1 - c * c));
          for (int b = 0; b < q.omega_phi; ++b) {
            const double ph = kTwoPi * (b + 0.5) / q.omega_phi;
            const Eigen::Vector3d om = F * Eigen::Vector3d(st * std::cos(ph), st * std::sin(ph), c);
            const double wo = ct.w[a] * kTwoPi / q.omega_phi;
            const double un = (xi - eta).dot(om);
            const Eigen::Vector3d xp = xi - un * om, ep = eta + un * om;
            const double B = std::abs(un);
            const double wgt = base * wo * B;
            post += wgt * std::sqrt(mu0(xp)) * f(ep);
            star += wgt * std::sqrt(mu0(ep)) * f(xp);
          }
        }
    }
  }
  (void)sm_xi;
  return {post + star, post, star};
}

double k2_kernel_constant() { return std::sqrt(2 / kPi) / kPi; }

double k2_kernel_route(const Eigen::Vector3d& xi, const KineticFn& f, const GainQuadrature& q) {
  const Rule1D rad = gauss_legendre(q.radial, 0.0, 1.0);
  const SphereRule sig = sphere_product(q.sphere_theta, q.sphere_phi);
  const Rule1D tr = gauss_legendre(24, -9.0, 9.0);
  const double R = xi.norm() + 13.0;
  double total = 0;
  for (std::size_t s = 0; s < sig.dir.size(); ++s) {
    const Eigen::Vector3d sigma = sig.dir[s];
    const Eigen::Matrix3d F = frame_along(sigma);
    for (std::size_t k = 0; k < rad.size(); ++k) {
      const double rho = R * rad.x[k], wr = R * rad.w[k];
      const Eigen::Vector3d V = rho * sigma;
      const Eigen::Vector3d zpar = xi.dot(sigma) * sigma + 0.5 * V;
      const Eigen::Vector3d zperp = xi - xi.dot(sigma) * sigma;
      // transverse integral over the plane orthogonal to V
      double tsum = 0;
      for (std::size_t u = 0; u < tr.size(); ++u)
        for (std::size_t v = 0; v < tr.size(); ++v) {
          const Eigen::Vector3d y = tr.x[u] * F.col(0) + tr.x[v] * F.col(1);
          tsum += tr.w[u] * tr.w[v] * std::exp(-0.5 * (zperp + y).squaredNorm());
        }
      const double kern = std::exp(-rho * rho / 8 - 0.5 * zpar.squaredNorm()) * tsum;
      // dV = rho^2 d rho d sigma, kernel carries 1/|V|
      total += sig.w[s] * wr * rho * kern * f(xi + V);
    }
  }
  return k2_kernel_constant() * total;
}

double kernel_k1(const Eigen::Vector3d& xi, const Eigen::Vector3d& eta) {
  return kTwoPi * (xi - eta).norm() * std::sqrt(mu0(xi) * mu0(eta));
}

double kernel_k2(const Eigen::Vector3d& xi, const Eigen::Vector3d& eta) {
  const Eigen::Vector3d V = eta - xi;
  const double r = V.norm();
  const double proj = (eta.squaredNorm() - xi.squaredNorm());
  return 2 * std::sqrt(2 / kPi) / r * std::exp(-r * r / 8 - proj * proj / (8 * r * r));
}

KernelBoundReport lm_kernel_check(double eps, double TM, const Eigen::Vector3d& U, double C_cap, int samples,
                                  unsigned seed) {
  if (!(TM > 0.5 && TM < 1.0)) throw Error(ErrorKind::BadTemperature, "T_M must lie in (1/2, 1)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-6.0, 6.0), len(0.02, 8.0), un(-1.0, 1.0);
  struct Pair {
    double dist, val;
  };
  std::vector<Pair> pairs;
  KernelBoundReport rep;
  rep.samples = samples;
  rep.nu_ratio_min = 1e300;
  rep.nu_ratio_max = 0;
  rep.nuM_min = 1e300;
  for (int s = 0; s < samples; ++s) {
    const Eigen::Vector3d xi(box(rng), box(rng), box(rng));
    Eigen::Vector3d dir(un(rng), un(rng), un(rng));
    if (dir.norm() < 1e-3) dir = Eigen::Vector3d(0, 0, 1);
    const Eigen::Vector3d eta = xi + len(rng) * dir.normalized();
    const Eigen::Vector3d phi = xi - eps * U, phs = eta - eps * U;
    const double k = kernel_k2(phi, phs) - kernel_k1(phi, phs);
    const double conj = sqrt_muM_over_sqrt_mu(eps, TM, U, eta) / sqrt_muM_over_sqrt_mu(eps, TM, U, xi);
    pairs.push_back({(xi - eta).norm(), std::abs(k * conj)});
    const double nuM = nu_hard_sphere(phi.norm()), nu0 = nu_hard_sphere(xi.norm());
    rep.nuM_min = std::min(rep.nuM_min, nuM);
    rep.nu_ratio_min = std::min(rep.nu_ratio_min, nuM / nu0);
    rep.nu_ratio_max = std::max(rep.nu_ratio_max, nuM / nu0);
  }
  auto constant_for = [&](double rho) {
    double C = 0;
    for (const auto& p : pairs) C = std::max(C, p.val * p.dist * std::exp(rho * p.dist * p.dist));
    return C;
  };
  rep.rho0 = 0;
  rep.C = constant_for(0);
  for (int k = 1; k <= 400; ++k) {
    const double rho = 0.25 * k / 400.0;
    const double C = constant_for(rho);
    if (C > C_cap) break;
    rep.rho0 = rho;
    rep.C = C;
  }
  if (rep.rho0 <= 0) throw Error(ErrorKind::BoundViolated, "no Gaussian kernel bound fits under the cap");
  return rep;
}

OrthogonalityReport moment_orthogonality_check(const VelocityGrid& g) {
  OrthogonalityReport r{0, 0, 0, 0};
  for (int i = 0; i < g.size(); ++i) {
    const double s = g.node(i).squaredNorm(), w = g.weight_mu()[i];
    r.a10_full += w * s * (s - 3) * (s - 10);
    r.a5_full += w * s * (s - 3) * (s - 5);
    r.b10_short += w * s * (s - 10);
    r.b5_short += w * s * (s - 5);
  }
  return r;
}

}  // namespace ep
