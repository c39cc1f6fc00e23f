#include "sheetspace/twistor.hpp"

#include <cmath>

#include "sheetspace/parallel.hpp"
#include "sheetspace/random_fields.hpp"

namespace sheetspace {

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cplx = std::complex<double>;

VectorXd pack_point(const TwistorPoint& p) {
  const int n = static_cast<int>(p.x.size());
  VectorXd y(3 * n);
  y.segment(0, n) = p.x;
  y.segment(n, n) = p.u;
  y.segment(2 * n, n) = p.v;
  return y;
}

TwistorPoint unpack_point(const VectorXd& y, double sign) {
  const int n = static_cast<int>(y.size()) / 3;
  TwistorPoint p;
  p.x = y.segment(0, n);
  p.u = y.segment(n, n);
  p.v = y.segment(2 * n, n);
  p.sign = sign;
  return p;
}

// x-derivatives of the inverse metric by central differences
void dginv(const MetricSpace& m, const VectorXd& x, std::vector<MatrixXd>& out) {
  const int n = m.dim();
  out.resize(static_cast<std::size_t>(n));
  if (m.kind() == MetricSpace::Kind::euclidean || m.kind() == MetricSpace::Kind::minkowski) {
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = MatrixXd::Zero(n, n);
    return;
  }
  const double h = m.fd_step();
  VectorXd xp = x;
  MatrixXd gp(n, n), gm(n, n);
  for (int j = 0; j < n; ++j) {
    xp(j) = x(j) + h;
    m.inverse_metric_at(xp.data(), gp);
    xp(j) = x(j) - h;
    m.inverse_metric_at(xp.data(), gm);
    xp(j) = x(j);
    out[static_cast<std::size_t>(j)] = (gp - gm) / (2.0 * h);
  }
}

// gradients of the two null constraints c1 = <u,v>, c2 = <u,u> - <v,v>
// as rows over chart coordinates (x, u, v)
MatrixXd null_jacobian(const MetricSpace& m, const TwistorPoint& p) {
  const int n = m.dim();
  MatrixXd ginv;
  m.inverse_metric_at(p.x.data(), ginv);
  std::vector<MatrixXd> dg;
  dginv(m, p.x, dg);
  MatrixXd jac = MatrixXd::Zero(2, 3 * n);
  for (int j = 0; j < n; ++j) {
    const MatrixXd& dgj = dg[static_cast<std::size_t>(j)];
    jac(0, j) = p.u.dot(dgj * p.v);
    jac(1, j) = p.u.dot(dgj * p.u) - p.v.dot(dgj * p.v);
  }
  jac.block(0, n, 1, n) = (ginv * p.v).transpose();
  jac.block(0, 2 * n, 1, n) = (ginv * p.u).transpose();
  jac.block(1, n, 1, n) = 2.0 * (ginv * p.u).transpose();
  jac.block(1, 2 * n, 1, n) = -2.0 * (ginv * p.v).transpose();
  return jac;
}

// gradient of the gauge scale constraint c3 = <u,u> - sign
VectorXd scale_gradient(const MetricSpace& m, const TwistorPoint& p) {
  const int n = m.dim();
  MatrixXd ginv;
  m.inverse_metric_at(p.x.data(), ginv);
  std::vector<MatrixXd> dg;
  dginv(m, p.x, dg);
  VectorXd g = VectorXd::Zero(3 * n);
  for (int j = 0; j < n; ++j)
    g(j) = p.u.dot(dg[static_cast<std::size_t>(j)] * p.u);
  g.segment(n, n) = 2.0 * (ginv * p.u);
  return g;
}

// gradient of the gauge phase constraint c4 = <u, v_ref> with the reference
// metric and covector frozen
VectorXd phase_gradient(const MatrixXd& ginv_ref, const VectorXd& v_ref) {
  const int n = static_cast<int>(v_ref.size());
  VectorXd g = VectorXd::Zero(3 * n);
  g.segment(n, n) = ginv_ref * v_ref;
  return g;
}

// d theta evaluated on two chart tangents: theta = sum_j (u_j + i v_j) dx^j
cplx dtheta(const VectorXd& a, const VectorXd& b, int n) {
  cplx s = 0.0;
  for (int j = 0; j < n; ++j) {
    const cplx pa(a(n + j), a(2 * n + j));
    const cplx pb(b(n + j), b(2 * n + j));
    s += pa * b(j) - pb * a(j);
  }
  return s;
}

cplx theta_of(const TwistorPoint& p, const double* xpart) {
  cplx s = 0.0;
  const int n = static_cast<int>(p.x.size());
  for (int j = 0; j < n; ++j) s += cplx(p.u(j), p.v(j)) * xpart[j];
  return s;
}

// closest in-plane rotation of (u, v) to (ru, rv) under the definite pairing
// sign * ginv; returns the angle
double procrustes_angle(const MatrixXd& ginv, double sign, const VectorXd& u,
                        const VectorXd& v, const VectorXd& ru, const VectorXd& rv) {
  const double a00 = sign * ru.dot(ginv * u);
  const double a01 = sign * ru.dot(ginv * v);
  const double a10 = sign * rv.dot(ginv * u);
  const double a11 = sign * rv.dot(ginv * v);
  return std::atan2(a10 - a01, a00 + a11);
}

// symmetric 2x2 inverse square root (positive definite input)
void inv_sqrt_2x2(double a, double b, double c, double out[3]) {
  const double tau = std::sqrt(a * c - b * b);
  const double t = std::sqrt(a + c + 2.0 * tau);
  // sqrt(N) = (N + tau I)/t; invert it
  const double sa = (a + tau) / t, sb = b / t, sc = (c + tau) / t;
  const double det = sa * sc - sb * sb;
  out[0] = sc / det;
  out[1] = -sb / det;
  out[2] = sa / det;
}

}  // namespace

TwistorPoint gauge_fix(const MetricSpace& m, VectorXd x, VectorXd u, VectorXd v) {
  MatrixXd ginv;
  m.inverse_metric_at(x.data(), ginv);
  const double guu = u.dot(ginv * u);
  const double guv = u.dot(ginv * v);
  const double gvv = v.dot(ginv * v);
  if (guu * gvv - guv * guv <= 1e-12 * (u.squaredNorm() * v.squaredNorm()))
    throw TwistorError("covector pair does not span a definite plane");
  const double sign = guu > 0 ? 1.0 : -1.0;
  auto q = [&](const VectorXd& a, const VectorXd& b) { return sign * a.dot(ginv * b); };
  u /= std::sqrt(q(u, u));
  VectorXd r = v - q(v, u) * u;
  v = r / std::sqrt(q(r, r));
  // orientation-preserving sign fix: first nonzero component of u positive
  const double scale = u.lpNorm<Eigen::Infinity>();
  for (int i = 0; i < u.size(); ++i) {
    if (std::fabs(u(i)) > 1e-12 * scale) {
      if (u(i) < 0) {
        u = -u;
        v = -v;
      }
      break;
    }
  }
  TwistorPoint p;
  p.x = std::move(x);
  p.u = std::move(u);
  p.v = std::move(v);
  p.sign = sign;
  return p;
}

TwistorPoint align_to(const MetricSpace& m, const TwistorPoint& p, const TwistorPoint& ref) {
  MatrixXd ginv;
  m.inverse_metric_at(p.x.data(), ginv);
  const double sign = ref.sign;
  // polar orthonormalization of the pair at its own base point
  const double a = sign * p.u.dot(ginv * p.u);
  const double b = sign * p.u.dot(ginv * p.v);
  const double c = sign * p.v.dot(ginv * p.v);
  double w[3];
  inv_sqrt_2x2(a, b, c, w);
  VectorXd u = w[0] * p.u + w[1] * p.v;
  VectorXd v = w[1] * p.u + w[2] * p.v;
  const double ang = procrustes_angle(ginv, sign, u, v, ref.u, ref.v);
  const double cs = std::cos(ang), sn = std::sin(ang);
  TwistorPoint out;
  out.x = p.x;
  out.u = cs * u + sn * v;
  out.v = -sn * u + cs * v;
  out.sign = sign;
  return out;
}

TwistorPoint plane_to_null(const MetricSpace& m, const VectorXd& x, const VectorXd& a,
                           const VectorXd& b) {
  MatrixXd g;
  m.metric_at(x.data(), g);
  const double gaa = a.dot(g * a);
  const double gab = a.dot(g * b);
  const double gbb = b.dot(g * b);
  if (gaa * gbb - gab * gab <= 1e-12 * (a.squaredNorm() * b.squaredNorm()))
    throw TwistorError("tangent plane is not definite");
  return gauge_fix(m, x, g * a, g * b);
}

std::pair<VectorXd, VectorXd> null_to_plane(const MetricSpace& m, const TwistorPoint& p) {
  MatrixXd ginv;
  m.inverse_metric_at(p.x.data(), ginv);
  return {ginv * p.u, ginv * p.v};
}

CrBasis cr_basis(const MetricSpace& m, const TwistorPoint& p) {
  const int n = m.dim();
  const int N = 3 * n;
  CrBasis out;

  const MatrixXd j2 = null_jacobian(m, p);
  Eigen::JacobiSVD<MatrixXd> j2svd(j2, Eigen::ComputeFullV);
  const MatrixXd nullspace = j2svd.matrixV().rightCols(N - 2);

  // d theta on the null-constraint tangent space
  MatrixXcd w(N - 2, N - 2);
  for (int aa = 0; aa < N - 2; ++aa)
    for (int bb = 0; bb < N - 2; ++bb)
      w(aa, bb) = dtheta(nullspace.col(aa), nullspace.col(bb), n);

  Eigen::JacobiSVD<MatrixXcd> wsvd(w, Eigen::ComputeFullV);
  const auto& sv = wsvd.singularValues();
  const double cutoff = 1e-8 * std::max(sv(0), 1e-30);
  int nullity = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) < cutoff) ++nullity;
  if (nullity != n)
    throw TwistorError("rank deviation: d theta kernel has dimension " +
                       std::to_string(nullity) + ", expected " + std::to_string(n));
  MatrixXcd kernel = nullspace * wsvd.matrixV().rightCols(n);

  // project along the scale/phase orbit directions onto the gauge slice
  MatrixXd ginv0;
  m.inverse_metric_at(p.x.data(), ginv0);
  VectorXd e_dir = VectorXd::Zero(N), f_dir = VectorXd::Zero(N);
  e_dir.segment(n, n) = p.u;
  e_dir.segment(2 * n, n) = p.v;
  f_dir.segment(n, n) = p.v;
  f_dir.segment(2 * n, n) = -p.u;
  const VectorXd g3 = scale_gradient(m, p);
  const VectorXd g4 = phase_gradient(ginv0, p.v);
  Eigen::Matrix2d orbit;
  orbit << g3.dot(e_dir), g3.dot(f_dir), g4.dot(e_dir), g4.dot(f_dir);
  const Eigen::Matrix2d orbit_inv = orbit.inverse();
  for (int i = 0; i < n; ++i) {
    const cplx r3 = g3.cast<cplx>().dot(kernel.col(i));
    const cplx r4 = g4.cast<cplx>().dot(kernel.col(i));
    const cplx alpha = orbit_inv(0, 0) * r3 + orbit_inv(0, 1) * r4;
    const cplx beta = orbit_inv(1, 0) * r3 + orbit_inv(1, 1) * r4;
    kernel.col(i) -= alpha * e_dir.cast<cplx>() + beta * f_dir.cast<cplx>();
  }

  // the projected kernel has rank n-1 (the complexified orbit dies)
  Eigen::JacobiSVD<MatrixXcd> ksvd(kernel, Eigen::ComputeThinU);
  const auto& ksv = ksvd.singularValues();
  int krank = 0;
  for (int i = 0; i < ksv.size(); ++i)
    if (ksv(i) > 1e-8 * std::max(ksv(0), 1e-30)) ++krank;
  if (krank != n - 1)
    throw TwistorError("rank deviation: projected CR distribution has rank " +
                       std::to_string(krank) + ", expected " + std::to_string(n - 1));
  out.d_basis = ksvd.matrixU().leftCols(n - 1);

  // no real vectors: real and imaginary parts independent per element
  for (int i = 0; i < n - 1; ++i) {
    MatrixXd ri(N, 2);
    ri.col(0) = out.d_basis.col(i).real();
    ri.col(1) = out.d_basis.col(i).imag();
    Eigen::JacobiSVD<MatrixXd> risvd(ri);
    if (risvd.singularValues()(1) <= 1e-6)
      throw TwistorError("CR distribution contains a real direction");
  }

  // H = real span of Re/Im of the distribution
  MatrixXd reim(N, 2 * (n - 1));
  for (int i = 0; i < n - 1; ++i) {
    reim.col(2 * i) = out.d_basis.col(i).real();
    reim.col(2 * i + 1) = out.d_basis.col(i).imag();
  }
  Eigen::JacobiSVD<MatrixXd> hsvd(reim, Eigen::ComputeThinU);
  int hrank = 0;
  for (int i = 0; i < hsvd.singularValues().size(); ++i)
    if (hsvd.singularValues()(i) > 1e-8 * std::max(hsvd.singularValues()(0), 1e-30))
      ++hrank;
  if (hrank != 2 * n - 2)
    throw TwistorError("rank deviation: H has rank " + std::to_string(hrank) +
                       ", expected " + std::to_string(2 * n - 2));
  out.h_basis = hsvd.matrixU().leftCols(2 * n - 2);

  // tangent space of the gauge slice (all four constraints)
  MatrixXd j4(4, N);
  j4.topRows(2) = j2;
  j4.row(2) = g3.transpose();
  j4.row(3) = g4.transpose();
  Eigen::JacobiSVD<MatrixXd> j4svd(j4, Eigen::ComputeFullV);
  out.slice_basis = j4svd.matrixV().rightCols(N - 4);

  // quotient: complement of H inside the slice
  MatrixXd q = out.slice_basis - out.h_basis * (out.h_basis.transpose() * out.slice_basis);
  Eigen::JacobiSVD<MatrixXd> qsvd(q, Eigen::ComputeThinU);
  int qrank = 0;
  for (int i = 0; i < qsvd.singularValues().size(); ++i)
    if (qsvd.singularValues()(i) > 1e-8 * std::max(qsvd.singularValues()(0), 1e-30))
      ++qrank;
  if (qrank != n - 2)
    throw TwistorError("rank deviation: quotient has rank " + std::to_string(qrank) +
                       ", expected " + std::to_string(n - 2));
  out.quotient_basis = qsvd.matrixU().leftCols(n - 2);

  // J on H: every element of the distribution is h - i J h
  MatrixXd cols = out.h_basis.transpose() * reim;  // (2n-2) x (2n-2)
  MatrixXd images(N, 2 * (n - 1));
  for (int i = 0; i < n - 1; ++i) {
    images.col(2 * i) = -out.d_basis.col(i).imag();  // J(Re) = -Im
    images.col(2 * i + 1) = out.d_basis.col(i).real();
  }
  out.j_on_h = (out.h_basis.transpose() * images) * cols.inverse();

  out.dim_total = N - 4;
  out.rank_h = 2 * n - 2;
  out.rank_d = n - 1;
  out.codim = n - 2;
  return out;
}

Eigen::VectorXd sheet_tangent(const TwistorSheet& ts, std::size_t p, int d) {
  const ParamDomain& dom = ts.domain;
  const double h = dom.spacing(d);
  int mi[8];
  dom.unflatten(p, mi);
  const auto& ax = dom.axis(d);
  auto packed = [&](std::size_t q) {
    return pack_point(align_to(*ts.metric, ts.points[q], ts.points[p]));
  };
  if (ax.periodic || (mi[d] > 0 && mi[d] < ax.count - 1)) {
    return (packed(dom.neighbor(p, d, +1)) - packed(dom.neighbor(p, d, -1))) / (2.0 * h);
  }
  if (mi[d] == 0) {
    return (-3.0 * pack_point(ts.points[p]) + 4.0 * packed(dom.neighbor(p, d, +1)) -
            packed(dom.neighbor(p, d, +2))) /
           (2.0 * h);
  }
  return (3.0 * pack_point(ts.points[p]) - 4.0 * packed(dom.neighbor(p, d, -1)) +
          packed(dom.neighbor(p, d, -2))) /
         (2.0 * h);
}

namespace {

void check_transversality(const TwistorSheet& ts) {
  const int n = ts.n;
  const int k = ts.domain.dim();
  const std::size_t nv = ts.vertex_count();
  std::vector<std::string> errors(nv);
  parallel_for(nv, [&](std::size_t p) {
    try {
      CrBasis cr = cr_basis(*ts.metric, ts.points[p]);
      MatrixXd mat(3 * n, k + 2 * n - 2);
      for (int d = 0; d < k; ++d) {
        VectorXd t = sheet_tangent(ts, p, d);
        mat.col(d) = t / t.norm();
      }
      mat.rightCols(2 * n - 2) = cr.h_basis;
      Eigen::JacobiSVD<MatrixXd> svd(mat);
      if (svd.singularValues()(svd.singularValues().size() - 1) <= 1e-6)
        errors[p] = "sheet is not transverse to the CR tangent space at vertex " +
                    std::to_string(p);
    } catch (const std::exception& e) {
      errors[p] = std::string(e.what()) + " at vertex " + std::to_string(p);
    }
  });
  for (std::size_t p = 0; p < nv; ++p)
    if (!errors[p].empty()) throw TwistorError(errors[p]);
}

}  // namespace

TwistorSheet gauss_lift(const DiscreteSheet& s) {
  TwistorSheet ts;
  ts.domain = s.domain;
  ts.metric = s.metric;
  ts.n = s.n;
  ts.points.resize(s.vertex_count());
  const std::size_t nv = s.vertex_count();
  std::vector<std::string> errors(nv);
  parallel_for(nv, [&](std::size_t p) {
    try {
      Eigen::Map<const VectorXd> x(s.vertex(p), s.n);
      Eigen::Map<const VectorXd> f1(s.frame.at(p, 0), s.n);
      Eigen::Map<const VectorXd> f2(s.frame.at(p, 1), s.n);
      ts.points[p] = plane_to_null(*s.metric, x, f1, f2);
    } catch (const std::exception& e) {
      errors[p] = std::string(e.what()) + " at vertex " + std::to_string(p);
    }
  });
  for (std::size_t p = 0; p < nv; ++p)
    if (!errors[p].empty()) throw TwistorError(errors[p]);
  ts.lifted = true;
  check_transversality(ts);
  return ts;
}

TwistorSheet shifted_plane_sheet(const DiscreteSheet& s, int axis, int offset) {
  TwistorSheet ts;
  ts.domain = s.domain;
  ts.metric = s.metric;
  ts.n = s.n;
  ts.points.resize(s.vertex_count());
  for (std::size_t p = 0; p < s.vertex_count(); ++p) {
    std::size_t q = s.domain.neighbor(p, axis, offset);
    if (q == ParamDomain::npos) q = p;  // clamp at non-periodic ends
    Eigen::Map<const VectorXd> x(s.vertex(p), s.n);
    MatrixXd g;
    s.metric->metric_at(s.vertex(q), g);
    Eigen::Map<const VectorXd> f1(s.frame.at(q, 0), s.n), f2(s.frame.at(q, 1), s.n);
    ts.points[p] = gauge_fix(*s.metric, x, g * f1, g * f2);
  }
  ts.lifted = false;
  check_transversality(ts);
  return ts;
}

std::complex<double> theta_eval(const TwistorSheet& ts, std::size_t p, int d) {
  const ParamDomain& dom = ts.domain;
  const int n = ts.n;
  const double h = dom.spacing(d);
  int mi[8];
  dom.unflatten(p, mi);
  const auto& ax = dom.axis(d);
  auto xat = [&](int step) -> const VectorXd& {
    return ts.points[dom.neighbor(p, d, step)].x;
  };
  VectorXd tx(n);
  const int i = mi[d], c = ax.count;
  if (ax.periodic || (i >= 2 && i <= c - 3)) {
    tx = (-xat(+2) + 8.0 * xat(+1) - 8.0 * xat(-1) + xat(-2)) / (12.0 * h);
  } else if (i <= 1) {
    const int o = -i;  // shift the 5-point one-sided stencil to fit
    static const double c0[5] = {-25.0, 48.0, -36.0, 16.0, -3.0};
    static const double c1[5] = {-3.0, -10.0, 18.0, -6.0, 1.0};
    const double* cf = (o == 0) ? c0 : c1;
    tx.setZero();
    for (int j = 0; j < 5; ++j) tx += cf[j] * ts.points[dom.neighbor(p, d, j - (o ? 1 : 0))].x;
    tx /= 12.0 * h;
  } else {
    const int o = c - 1 - i;
    static const double c0[5] = {25.0, -48.0, 36.0, -16.0, 3.0};
    static const double c1[5] = {3.0, 10.0, -18.0, 6.0, -1.0};
    const double* cf = (o == 0) ? c0 : c1;
    tx.setZero();
    for (int j = 0; j < 5; ++j)
      tx += cf[j] * ts.points[dom.neighbor(p, d, -(j - (o ? 1 : 0)))].x;
    tx /= 12.0 * h;
  }
  return theta_of(ts.points[p], tx.data());
}

double theta_residual(const TwistorSheet& ts) {
  return blocked_max(ts.vertex_count(), [&](std::size_t p) {
    double worst = 0.0;
    for (int d = 0; d < ts.domain.dim(); ++d)
      worst = std::max(worst, std::abs(theta_eval(ts, p, d)));
    return worst;
  });
}

double theta_map_residual(const TwistorSheet& ts, const std::vector<std::string>& maps,
                          double delta) {
  if (static_cast<int>(maps.size()) != ts.n)
    throw TwistorError("map must have one expression per ambient coordinate");
  const auto names = ts.domain.axis_names();
  std::vector<Expression::Compiled> comp;
  comp.reserve(maps.size());
  for (const auto& src : maps) comp.push_back(Expression::parse(src).compile(names));
  const std::size_t nv = ts.vertex_count();
  std::vector<double> sq(nv), wt(nv);
  parallel_for(nv, [&](std::size_t p) {
    double sp[8];
    ts.domain.param_at(p, sp);
    double worst = 0.0;
    for (int d = 0; d < ts.domain.dim(); ++d) {
      const double sv = sp[d];
      VectorXd tx(ts.n);
      for (int i = 0; i < ts.n; ++i) {
        sp[d] = sv + delta;
        const double fp = comp[static_cast<std::size_t>(i)].eval(sp);
        sp[d] = sv - delta;
        const double fm = comp[static_cast<std::size_t>(i)].eval(sp);
        sp[d] = sv;
        tx(i) = (fp - fm) / (2.0 * delta);
      }
      worst = std::max(worst, std::abs(theta_of(ts.points[p], tx.data())));
    }
    wt[p] = ts.domain.quad_weight(p);
    sq[p] = wt[p] * worst * worst;
  });
  const double num = blocked_sum(nv, [&](std::size_t p) { return sq[p]; });
  const double den = blocked_sum(nv, [&](std::size_t p) { return wt[p]; });
  return std::sqrt(num / den);
}

ConnectingField lift_connecting_field(const DiscreteSheet& s, const TwistorSheet& ts,
                                      const NormalField& w, double eps) {
  const DiscreteSheet sp = perturb(s, w, eps);
  const DiscreteSheet sm = perturb(s, w, -eps);
  ConnectingField out;
  out.n = s.n;
  out.values.assign(s.vertex_count() * static_cast<std::size_t>(3 * s.n), 0.0);
  parallel_for(s.vertex_count(), [&](std::size_t p) {
    Eigen::Map<const VectorXd> xp(sp.vertex(p), s.n), xm(sm.vertex(p), s.n);
    Eigen::Map<const VectorXd> p1(sp.frame.at(p, 0), s.n), p2(sp.frame.at(p, 1), s.n);
    Eigen::Map<const VectorXd> m1(sm.frame.at(p, 0), s.n), m2(sm.frame.at(p, 1), s.n);
    TwistorPoint tp = align_to(*s.metric, plane_to_null(*s.metric, xp, p1, p2), ts.points[p]);
    TwistorPoint tm = align_to(*s.metric, plane_to_null(*s.metric, xm, m1, m2), ts.points[p]);
    const VectorXd diff = (pack_point(tp) - pack_point(tm)) / (2.0 * eps);
    for (int i = 0; i < 3 * s.n; ++i) out.at(p)[i] = diff(i);
  });
  return out;
}

ConnectingField synthetic_vertical_field(const DiscreteSheet& s, const TwistorSheet& ts) {
  (void)ts;
  ConnectingField out;
  out.n = s.n;
  out.values.assign(s.vertex_count() * static_cast<std::size_t>(3 * s.n), 0.0);
  for (std::size_t p = 0; p < s.vertex_count(); ++p) {
    MatrixXd g;
    s.metric->metric_at(s.vertex(p), g);
    Eigen::Map<const VectorXd> t1(s.tangent(p, 0), s.n);
    VectorXd q = g * t1;
    q /= q.norm();
    for (int i = 0; i < s.n; ++i) out.at(p)[s.n + i] = q(i);
  }
  return out;
}

double legendrian_residual(const TwistorSheet& ts, const ConnectingField& v) {
  const int n = ts.n;
  const ParamDomain& dom = ts.domain;
  return blocked_max(ts.vertex_count(), [&](std::size_t p) {
    MatrixXd ginv;
    ts.metric->inverse_metric_at(ts.points[p].x.data(), ginv);
    // theta(v) at a stencil vertex, evaluated in p's gauge: rotate the point
    // and transport the field's covector components by the same angle
    auto f_at = [&](std::size_t q) -> cplx {
      if (q == p) return theta_of(ts.points[p], v.at(p));
      MatrixXd gq;
      ts.metric->inverse_metric_at(ts.points[q].x.data(), gq);
      const TwistorPoint& pq = ts.points[q];
      const double ang =
          procrustes_angle(gq, pq.sign, pq.u, pq.v, ts.points[p].u, ts.points[p].v);
      const double cs = std::cos(ang), sn = std::sin(ang);
      TwistorPoint rot;
      rot.x = pq.x;
      rot.u = cs * pq.u + sn * pq.v;
      rot.v = -sn * pq.u + cs * pq.v;
      rot.sign = pq.sign;
      // transported x-part of the field is unchanged; theta only reads it
      return theta_of(rot, v.at(q));
    };
    double worst = 0.0;
    int mi[8];
    dom.unflatten(p, mi);
    for (int d = 0; d < dom.dim(); ++d) {
      const double h = dom.spacing(d);
      const auto& ax = dom.axis(d);
      cplx df;
      if (ax.periodic || (mi[d] > 0 && mi[d] < ax.count - 1)) {
        df = (f_at(dom.neighbor(p, d, +1)) - f_at(dom.neighbor(p, d, -1))) / (2.0 * h);
      } else if (mi[d] == 0) {
        df = (-3.0 * f_at(p) + 4.0 * f_at(dom.neighbor(p, d, +1)) -
              f_at(dom.neighbor(p, d, +2))) /
             (2.0 * h);
      } else {
        df = (3.0 * f_at(p) - 4.0 * f_at(dom.neighbor(p, d, -1)) +
              f_at(dom.neighbor(p, d, -2))) /
             (2.0 * h);
      }
      Eigen::Map<const VectorXd> vp(v.at(p), 3 * n);
      const VectorXd t = sheet_tangent(ts, p, d);
      const cplx term1 = dtheta(vp, t, n);
      worst = std::max(worst, std::abs(term1 + df));
    }
    return worst;
  });
}

namespace {

// local frame of the CR distribution near a center point, in the center's
// gauge; evaluation retracts the query point onto the constraint set
struct LocalFrame {
  const MetricSpace* m;
  TwistorPoint center;
  MatrixXd ginv0;
  MatrixXcd z0;  // orthonormal basis at the center

  MatrixXcd eval(const VectorXd& y) const {
    const int n = m->dim();
    TwistorPoint q = unpack_point(y, center.sign);
    // retract: polar orthonormalization at q's own base point
    MatrixXd ginv;
    m->inverse_metric_at(q.x.data(), ginv);
    const double a = center.sign * q.u.dot(ginv * q.u);
    const double b = center.sign * q.u.dot(ginv * q.v);
    const double c = center.sign * q.v.dot(ginv * q.v);
    double w[3];
    inv_sqrt_2x2(a, b, c, w);
    VectorXd u = w[0] * q.u + w[1] * q.v;
    VectorXd v = w[1] * q.u + w[2] * q.v;
    // same gauge: rotate so that <u, v_center> vanishes, nearest angle
    const double cc = u.dot(ginv0 * center.v);
    const double dd = v.dot(ginv0 * center.v);
    double ang = std::atan2(-cc, dd);
    if (ang > M_PI / 2) ang -= M_PI;
    if (ang < -M_PI / 2) ang += M_PI;
    TwistorPoint r;
    r.x = q.x;
    r.u = std::cos(ang) * u + std::sin(ang) * v;
    r.v = -std::sin(ang) * u + std::cos(ang) * v;
    r.sign = center.sign;

    // kernel of d theta at the retracted point, projected to the gauge slice
    // anchored at the center
    const int N = 3 * n;
    const MatrixXd j2 = null_jacobian(*m, r);
    Eigen::JacobiSVD<MatrixXd> j2svd(j2, Eigen::ComputeFullV);
    const MatrixXd nullspace = j2svd.matrixV().rightCols(N - 2);
    MatrixXcd wmat(N - 2, N - 2);
    for (int aa = 0; aa < N - 2; ++aa)
      for (int bb = 0; bb < N - 2; ++bb)
        wmat(aa, bb) = dtheta(nullspace.col(aa), nullspace.col(bb), n);
    Eigen::JacobiSVD<MatrixXcd> wsvd(wmat, Eigen::ComputeFullV);
    MatrixXcd kernel = nullspace * wsvd.matrixV().rightCols(n);

    VectorXd e_dir = VectorXd::Zero(N), f_dir = VectorXd::Zero(N);
    e_dir.segment(n, n) = r.u;
    e_dir.segment(2 * n, n) = r.v;
    f_dir.segment(n, n) = r.v;
    f_dir.segment(2 * n, n) = -r.u;
    const VectorXd g3 = scale_gradient(*m, r);
    const VectorXd g4 = phase_gradient(ginv0, center.v);
    Eigen::Matrix2d orbit;
    orbit << g3.dot(e_dir), g3.dot(f_dir), g4.dot(e_dir), g4.dot(f_dir);
    const Eigen::Matrix2d oi = orbit.inverse();
    for (int i = 0; i < n; ++i) {
      const cplx r3 = g3.cast<cplx>().dot(kernel.col(i));
      const cplx r4 = g4.cast<cplx>().dot(kernel.col(i));
      kernel.col(i) -= (oi(0, 0) * r3 + oi(0, 1) * r4) * e_dir.cast<cplx>() +
                       (oi(1, 0) * r3 + oi(1, 1) * r4) * f_dir.cast<cplx>();
    }
    Eigen::JacobiSVD<MatrixXcd> ksvd(kernel, Eigen::ComputeThinU);
    MatrixXcd qbasis = ksvd.matrixU().leftCols(m->dim() - 1);

    // align to the center frame by complex least squares
    MatrixXcd out(N, m->dim() - 1);
    for (int i = 0; i < m->dim() - 1; ++i) {
      VectorXcd proj = qbasis * (qbasis.adjoint() * z0.col(i));
      if (proj.norm() < 0.5 * z0.col(i).norm())
        throw TwistorError("CR frame turned discontinuously across the neighborhood");
      out.col(i) = proj;
    }
    return out;
  }
};

}  // namespace

LeviResult levi_form(const MetricSpace& m, const TwistorPoint& p, double eps) {
  const int n = m.dim();
  const int N = 3 * n;
  const int nd = n - 1;

  CrBasis cr = cr_basis(m, p);
  LocalFrame frame;
  frame.m = &m;
  frame.center = p;
  m.inverse_metric_at(p.x.data(), frame.ginv0);
  frame.z0 = cr.d_basis;

  auto run = [&](double step) -> LeviResult {
    const VectorXd y0 = pack_point(p);
    // real fields: Re and Im of each distribution frame element
    const int nreal = 2 * nd;
    MatrixXd f0(N, nreal);
    for (int i = 0; i < nd; ++i) {
      f0.col(2 * i) = cr.d_basis.col(i).real();
      f0.col(2 * i + 1) = cr.d_basis.col(i).imag();
    }
    // frame at the 2*nreal perturbed points
    std::vector<MatrixXd> fplus(static_cast<std::size_t>(nreal)),
        fminus(static_cast<std::size_t>(nreal));
    for (int a = 0; a < nreal; ++a) {
      auto split = [&](const MatrixXcd& z) {
        MatrixXd f(N, nreal);
        for (int i = 0; i < nd; ++i) {
          f.col(2 * i) = z.col(i).real();
          f.col(2 * i + 1) = z.col(i).imag();
        }
        return f;
      };
      fplus[static_cast<std::size_t>(a)] = split(frame.eval(y0 + step * f0.col(a)));
      fminus[static_cast<std::size_t>(a)] = split(frame.eval(y0 - step * f0.col(a)));
    }
    auto bracket = [&](int a, int b) -> VectorXd {
      const VectorXd da_b = (fplus[static_cast<std::size_t>(a)].col(b) -
                             fminus[static_cast<std::size_t>(a)].col(b)) /
                            (2.0 * step);
      const VectorXd db_a = (fplus[static_cast<std::size_t>(b)].col(a) -
                             fminus[static_cast<std::size_t>(b)].col(a)) /
                            (2.0 * step);
      return da_b - db_a;
    };
    // complex brackets [Z_i, conj(Z_j)]; reduce modulo H (complexified)
    LeviResult res;
    res.image_components.resize(n - 2, 2 * nd * nd);
    int col = 0;
    for (int i = 0; i < nd; ++i)
      for (int j = 0; j < nd; ++j) {
        const VectorXd re =
            bracket(2 * i, 2 * j) + bracket(2 * i + 1, 2 * j + 1);
        const VectorXd im =
            bracket(2 * i + 1, 2 * j) - bracket(2 * i, 2 * j + 1);
        res.image_components.col(col++) = cr.quotient_basis.transpose() * re;
        res.image_components.col(col++) = cr.quotient_basis.transpose() * im;
      }
    Eigen::JacobiSVD<MatrixXd> svd(res.image_components);
    res.sigma_min = svd.singularValues()(svd.singularValues().size() - 1);
    return res;
  };

  try {
    return run(eps);
  } catch (const TwistorError&) {
    return run(eps / 2.0);  // re-gauge once with a smaller step
  }
}

ObservableResult observable_and_derivative(const TwistorSheet& ts, const ChartForm& gamma,
                                           const ConnectingField& w, double eps) {
  const int n = ts.n;
  const int N = 3 * n;
  const ParamDomain& dom = ts.domain;
  const int k = dom.dim();
  if (gamma.chart_dim() != N)
    throw TwistorError("observable form must live on the bundle chart");
  if (gamma.degree() != k)
    throw TwistorError("observable form degree must match the sheet dimension");

  // field difference along an axis, components transported to p's gauge
  auto field_diff = [&](std::size_t p, int d) -> VectorXd {
    auto transported = [&](std::size_t q) -> VectorXd {
      Eigen::Map<const VectorXd> vq(w.at(q), N);
      if (q == p) return vq;
      MatrixXd gq;
      ts.metric->inverse_metric_at(ts.points[q].x.data(), gq);
      const TwistorPoint& pq = ts.points[q];
      const double ang =
          procrustes_angle(gq, pq.sign, pq.u, pq.v, ts.points[p].u, ts.points[p].v);
      const double cs = std::cos(ang), sn = std::sin(ang);
      VectorXd out(N);
      out.segment(0, n) = vq.segment(0, n);
      out.segment(n, n) = cs * vq.segment(n, n) + sn * vq.segment(2 * n, n);
      out.segment(2 * n, n) = -sn * vq.segment(n, n) + cs * vq.segment(2 * n, n);
      return out;
    };
    const double h = dom.spacing(d);
    int mi[8];
    dom.unflatten(p, mi);
    const auto& ax = dom.axis(d);
    if (ax.periodic || (mi[d] > 0 && mi[d] < ax.count - 1))
      return (transported(dom.neighbor(p, d, +1)) - transported(dom.neighbor(p, d, -1))) /
             (2.0 * h);
    if (mi[d] == 0)
      return (-3.0 * transported(p) + 4.0 * transported(dom.neighbor(p, d, +1)) -
              transported(dom.neighbor(p, d, +2))) /
             (2.0 * h);
    return (3.0 * transported(p) - 4.0 * transported(dom.neighbor(p, d, -1)) +
            transported(dom.neighbor(p, d, -2))) /
           (2.0 * h);
  };

  ObservableResult res;
  const std::size_t nv = ts.vertex_count();
  std::vector<double> val(nv), vp(nv), vm(nv), interior(nv);
  parallel_for(nv, [&](std::size_t p) {
    const VectorXd y = pack_point(ts.points[p]);
    Eigen::Map<const VectorXd> wp(w.at(p), N);
    std::vector<VectorXd> tans(static_cast<std::size_t>(k));
    std::vector<VectorXd> dw(static_cast<std::size_t>(k));
    for (int d = 0; d < k; ++d) {
      tans[static_cast<std::size_t>(d)] = sheet_tangent(ts, p, d);
      dw[static_cast<std::size_t>(d)] = field_diff(p, d);
    }
    const double wq = dom.quad_weight(p);
    std::vector<Eigen::VectorXd> args(tans.begin(), tans.end());
    val[p] = wq * gamma.value(y.data(), args);
    std::vector<Eigen::VectorXd> argsp(static_cast<std::size_t>(k)),
        argsm(static_cast<std::size_t>(k));
    for (int d = 0; d < k; ++d) {
      argsp[static_cast<std::size_t>(d)] =
          tans[static_cast<std::size_t>(d)] + eps * dw[static_cast<std::size_t>(d)];
      argsm[static_cast<std::size_t>(d)] =
          tans[static_cast<std::size_t>(d)] - eps * dw[static_cast<std::size_t>(d)];
    }
    const VectorXd yp = y + eps * wp, ym = y - eps * wp;
    vp[p] = wq * gamma.value(yp.data(), argsp);
    vm[p] = wq * gamma.value(ym.data(), argsm);
    // interior term of the first variation: w contracted into d gamma
    std::vector<Eigen::VectorXd> dargs;
    dargs.reserve(static_cast<std::size_t>(k) + 1);
    dargs.emplace_back(wp);
    for (int d = 0; d < k; ++d) dargs.push_back(tans[static_cast<std::size_t>(d)]);
    interior[p] = wq * gamma.d_value(y.data(), dargs, ts.metric->fd_step());
  });
  res.value = blocked_sum(nv, [&](std::size_t p) { return val[p]; });
  const double fplus = blocked_sum(nv, [&](std::size_t p) { return vp[p]; });
  const double fminus = blocked_sum(nv, [&](std::size_t p) { return vm[p]; });
  res.fd_derivative = (fplus - fminus) / (2.0 * eps);

  double formula = blocked_sum(nv, [&](std::size_t p) { return interior[p]; });

  // boundary term: faces of the non-periodic axes with induced orientation
  for (int d = 0; d < k; ++d) {
    const auto& ax = dom.axis(d);
    if (ax.periodic) continue;
    for (int side = 0; side < 2; ++side) {
      const double orient = (side == 1 ? 1.0 : -1.0) * ((d % 2 == 0) ? 1.0 : -1.0);
      double face_sum = 0.0;
      for (std::size_t p = 0; p < nv; ++p) {
        int mi[8];
        dom.unflatten(p, mi);
        if (mi[d] != (side == 1 ? ax.count - 1 : 0)) continue;
        const VectorXd y = pack_point(ts.points[p]);
        Eigen::Map<const VectorXd> wp(w.at(p), N);
        std::vector<Eigen::VectorXd> args;
        args.reserve(static_cast<std::size_t>(k));
        args.emplace_back(wp);
        for (int dd = 0; dd < k; ++dd) {
          if (dd == d) continue;
          args.push_back(sheet_tangent(ts, p, dd));
        }
        face_sum += dom.quad_weight_excluding(p, d) * gamma.value(y.data(), args);
      }
      formula += orient * face_sum;
    }
  }
  res.formula_derivative = formula;
  res.residual = std::fabs(res.fd_derivative - formula);
  return res;
}

TwistorPoint random_twistor_point(const MetricSpace& m, std::uint64_t seed) {
  NormalDeviates rng(seed);
  const int n = m.dim();
  for (int attempt = 0; attempt < 200; ++attempt) {
    VectorXd x(n);
    for (int i = 0; i < n; ++i) {
      const auto& [lo, hi] = m.box()[static_cast<std::size_t>(i)];
      x(i) = lo + (hi - lo) * rng.uniform();
    }
    VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) a(i) = rng.next();
    for (int i = 0; i < n; ++i) b(i) = rng.next();
    MatrixXd g;
    m.metric_at(x.data(), g);
    const double gaa = a.dot(g * a), gab = a.dot(g * b), gbb = b.dot(g * b);
    if (gaa * gbb - gab * gab > 0.05 * a.squaredNorm() * b.squaredNorm())
      return plane_to_null(m, x, a, b);
  }
  throw TwistorError("failed to sample a definite plane in the chart box");
}

}  // namespace sheetspace
