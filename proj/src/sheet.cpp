#include "sheetspace/sheet.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "sheetspace/parallel.hpp"

namespace sheetspace {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Central difference of the vertex array along axis d; second-order one-sided
// stencils at non-periodic ends.
void tangent_at(const ParamDomain& dom, const std::vector<double>& xs, int n,
                std::size_t p, int d, double* out) {
  const double h = dom.spacing(d);
  int mi[8];
  dom.unflatten(p, mi);
  const auto& ax = dom.axis(d);
  auto vert = [&](std::size_t q) { return xs.data() + q * static_cast<std::size_t>(n); };
  if (ax.periodic || (mi[d] > 0 && mi[d] < ax.count - 1)) {
    const double* xp = vert(dom.neighbor(p, d, +1));
    const double* xm = vert(dom.neighbor(p, d, -1));
    for (int i = 0; i < n; ++i) out[i] = (xp[i] - xm[i]) / (2.0 * h);
  } else if (mi[d] == 0) {
    const double* x0 = vert(p);
    const double* x1 = vert(dom.neighbor(p, d, +1));
    const double* x2 = vert(dom.neighbor(p, d, +2));
    for (int i = 0; i < n; ++i) out[i] = (-3.0 * x0[i] + 4.0 * x1[i] - x2[i]) / (2.0 * h);
  } else {
    const double* x0 = vert(p);
    const double* x1 = vert(dom.neighbor(p, d, -1));
    const double* x2 = vert(dom.neighbor(p, d, -2));
    for (int i = 0; i < n; ++i) out[i] = (3.0 * x0[i] - 4.0 * x1[i] + x2[i]) / (2.0 * h);
  }
}

}  // namespace

double NormalField::sup_norm() const {
  double m = 0.0;
  const std::size_t v = vertex_count();
  for (std::size_t p = 0; p < v; ++p)
    for (int i = 0; i < n; ++i) m = std::max(m, std::fabs(at(p)[i]));
  return m;
}

NormalField zero_field(const DiscreteSheet& s, bool boundary_zero) {
  NormalField f;
  f.n = s.n;
  f.boundary_zero = boundary_zero;
  f.values.assign(s.vertex_count() * static_cast<std::size_t>(s.n), 0.0);
  return f;
}

DiscreteSheet build_sheet(const MetricSpace& m, const ParamDomain& domain,
                          const std::vector<std::string>& map_exprs) {
  const int n = m.dim();
  if (static_cast<int>(map_exprs.size()) != n)
    throw SheetError("chart map must have one expression per ambient coordinate (" +
                     std::to_string(n) + "), got " + std::to_string(map_exprs.size()));
  if (domain.dim() != n - 2)
    throw SheetError("parameter count must be n-2 = " + std::to_string(n - 2));

  const auto names = domain.axis_names();
  std::vector<Expression::Compiled> maps;
  maps.reserve(map_exprs.size());
  for (const auto& src : map_exprs)
    maps.push_back(Expression::parse(src).compile(names));

  const std::size_t nv = domain.vertex_count();
  std::vector<double> xs(nv * static_cast<std::size_t>(n));
  parallel_for(nv, [&](std::size_t p) {
    double s[8];
    domain.param_at(p, s);
    for (int i = 0; i < n; ++i)
      xs[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] =
          maps[static_cast<std::size_t>(i)].eval(s);
  });
  return sheet_from_vertices(m, domain, std::move(xs));
}

DiscreteSheet sheet_from_vertices(const MetricSpace& m, const ParamDomain& domain,
                                  std::vector<double> vertices) {
  const int n = m.dim();
  const int k = domain.dim();
  if (k != n - 2) throw SheetError("parameter count must be n-2");
  const std::size_t nv = domain.vertex_count();
  if (vertices.size() != nv * static_cast<std::size_t>(n))
    throw SheetError("vertex array size mismatch");

  DiscreteSheet sh;
  sh.domain = domain;
  sh.metric = &m;
  sh.n = n;
  sh.vertices = std::move(vertices);
  sh.tangents.assign(nv * static_cast<std::size_t>(k) * static_cast<std::size_t>(n), 0.0);
  sh.induced_det.assign(nv, 0.0);
  sh.dvol.assign(nv, 0.0);
  sh.weights.assign(nv, 0.0);
  sh.boundary.assign(nv, 0);
  sh.frame.n = n;
  sh.frame.f.assign(nv * 2 * static_cast<std::size_t>(n), 0.0);

  // Per-vertex pass: tangents, induced metric, raw normal frame. Failures are
  // recorded and the smallest failing vertex reported, so runs are
  // deterministic under any thread count.
  std::vector<std::int8_t> sigma(nv, 0);
  std::vector<std::string> errors(nv);
  parallel_for(nv, [&](std::size_t p) {
    double* tan = sh.tangents.data() + p * static_cast<std::size_t>(k * n);
    for (int d = 0; d < k; ++d)
      tangent_at(domain, sh.vertices, n, p, d, tan + static_cast<std::size_t>(d * n));

    const double* x = sh.vertex(p);
    sh.weights[p] = domain.quad_weight(p);
    sh.boundary[p] = domain.is_boundary(p) ? 1 : 0;

    Eigen::Map<const MatrixXd> tmat(tan, n, k);  // columns are tangents
    Eigen::JacobiSVD<MatrixXd> tsvd(tmat, Eigen::ComputeThinU);
    if (tsvd.singularValues()(k - 1) <= 1e-8 * std::max(1.0, tsvd.singularValues()(0))) {
      int rank = 0;
      for (int i = 0; i < k; ++i)
        if (tsvd.singularValues()(i) > 1e-8 * std::max(1.0, tsvd.singularValues()(0))) ++rank;
      errors[p] = "degenerate tangents at vertex " + std::to_string(p) + " (rank " +
                  std::to_string(rank) + " < " + std::to_string(k) + ")";
      return;
    }

    MatrixXd g;
    try {
      m.metric_at(x, g);
    } catch (const std::exception& e) {
      errors[p] = std::string(e.what()) + " at vertex " + std::to_string(p);
      return;
    }

    MatrixXd gram(k, k);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        gram(a, b) = (tmat.col(a).transpose() * g * tmat.col(b))(0, 0);
    const double det = gram.determinant();
    sh.induced_det[p] = det;
    if (std::fabs(det) <= 1e-10) {
      errors[p] = "induced metric degenerate at vertex " + std::to_string(p) +
                  " (|det| = " + std::to_string(std::fabs(det)) + ")";
      return;
    }
    sh.dvol[p] = std::sqrt(std::fabs(det));

    // normal plane: null space of the k x n pairing matrix rows (g e_i)^T
    MatrixXd pairing = (g * tmat).transpose();
    Eigen::JacobiSVD<MatrixXd> psvd(pairing, Eigen::ComputeFullV);
    VectorXd y1 = psvd.matrixV().col(n - 2);
    VectorXd y2 = psvd.matrixV().col(n - 1);

    const double n11 = (y1.transpose() * g * y1)(0, 0);
    const double n12 = (y1.transpose() * g * y2)(0, 0);
    const double n22 = (y2.transpose() * g * y2)(0, 0);
    const double ndet = n11 * n22 - n12 * n12;
    if (ndet <= 1e-12) {
      const char* signs = (ndet < -1e-12) ? "(+,-)" : "(0,?)";
      errors[p] = "normal plane not definite at vertex " + std::to_string(p) +
                  ": eigenvalue signs " + signs;
      return;
    }
    const double sg = (n11 + n22) > 0 ? 1.0 : -1.0;
    sigma[p] = static_cast<std::int8_t>(sg);

    // Gram-Schmidt under the definite form sigma*g
    auto q = [&](const VectorXd& a, const VectorXd& b) {
      return sg * (a.transpose() * g * b)(0, 0);
    };
    VectorXd f1 = y1 / std::sqrt(q(y1, y1));
    VectorXd r = y2 - q(y2, f1) * f1;
    VectorXd f2 = r / std::sqrt(q(r, r));

    // orientation: (e_1..e_k, f1, f2) positive in the chart
    MatrixXd full(n, n);
    full.leftCols(k) = tmat;
    full.col(k) = f1;
    full.col(k + 1) = f2;
    if (full.determinant() < 0.0) f2 = -f2;

    double* fp = sh.frame.at(p, 0);
    for (int i = 0; i < n; ++i) fp[i] = f1(i);
    fp = sh.frame.at(p, 1);
    for (int i = 0; i < n; ++i) fp[i] = f2(i);
  });

  for (std::size_t p = 0; p < nv; ++p)
    if (!errors[p].empty()) throw SheetError(errors[p], p);
  for (std::size_t p = 1; p < nv; ++p)
    if (sigma[p] != sigma[0])
      throw SheetError("normal metric definiteness flips sign between vertices 0 and " +
                           std::to_string(p),
                       p);
  sh.frame.sigma = static_cast<double>(sigma[0]);

  // Gauge pass: align each frame to an already-processed grid neighbor by the
  // closest in-plane rotation. Fields are stored ambiently, so this only
  // affects frame continuity, never computed quantities.
  {
    MatrixXd g;
    int mi[8];
    for (std::size_t p = 1; p < nv; ++p) {
      domain.unflatten(p, mi);
      int d = -1;
      for (int dd = k - 1; dd >= 0; --dd)
        if (mi[dd] > 0) {
          d = dd;
          break;
        }
      if (d < 0) continue;
      const std::size_t ref = domain.neighbor(p, d, -1);
      m.metric_at(sh.vertex(p), g);
      Eigen::Map<VectorXd> f1(sh.frame.at(p, 0), n), f2(sh.frame.at(p, 1), n);
      Eigen::Map<const VectorXd> r1(sh.frame.at(ref, 0), n), r2(sh.frame.at(ref, 1), n);
      const double sg = sh.frame.sigma;
      const double a00 = sg * (f1.transpose() * g * r1)(0, 0);
      const double a01 = sg * (f1.transpose() * g * r2)(0, 0);
      const double a10 = sg * (f2.transpose() * g * r1)(0, 0);
      const double a11 = sg * (f2.transpose() * g * r2)(0, 0);
      const double c0 = a00 + a11, s0 = a10 - a01;
      const double rr = std::hypot(c0, s0);
      if (rr < 1e-12) continue;
      const double c = c0 / rr, s = s0 / rr;
      VectorXd nf1 = c * f1 + s * f2;
      VectorXd nf2 = -s * f1 + c * f2;
      f1 = nf1;
      f2 = nf2;
    }
  }
  return sh;
}

NormalField rotate_J(const DiscreteSheet& s, const NormalField& v) {
  const std::size_t nv = s.vertex_count();
  const int n = s.n;
  const double sg = s.frame.sigma;
  NormalField out = zero_field(s, v.boundary_zero);
  std::vector<std::string> errors(nv);
  parallel_for(nv, [&](std::size_t p) {
    Eigen::MatrixXd g;
    s.metric->metric_at(s.vertex(p), g);
    Eigen::Map<const Eigen::VectorXd> vp(v.at(p), n);
    Eigen::Map<const Eigen::VectorXd> f1(s.frame.at(p, 0), n), f2(s.frame.at(p, 1), n);
    // re-check that the input is normal-valued
    double scale = std::max(1.0, vp.lpNorm<Eigen::Infinity>());
    for (int d = 0; d < s.k(); ++d) {
      Eigen::Map<const Eigen::VectorXd> t(s.tangent(p, d), n);
      if (std::fabs((vp.transpose() * g * t)(0, 0)) > 1e-8 * scale * std::max(1.0, t.norm())) {
        errors[p] = "field has a tangential component at vertex " + std::to_string(p);
        return;
      }
    }
    const double a = sg * (vp.transpose() * g * f1)(0, 0);
    const double b = sg * (vp.transpose() * g * f2)(0, 0);
    double* o = out.at(p);
    for (int i = 0; i < n; ++i) o[i] = -b * f1(i) + a * f2(i);
  });
  for (std::size_t p = 0; p < nv; ++p)
    if (!errors[p].empty()) throw SheetError(errors[p], p);
  if (v.boundary_zero)
    for (std::size_t p = 0; p < nv; ++p)
      if (s.boundary[p])
        for (int i = 0; i < n; ++i) out.at(p)[i] = 0.0;
  return out;
}

double integrate(const DiscreteSheet& s, std::span<const double> field) {
  if (field.size() != s.vertex_count())
    throw SheetError("integrand must have one value per vertex");
  return blocked_sum(s.vertex_count(),
                     [&](std::size_t p) { return s.weights[p] * s.dvol[p] * field[p]; });
}

double sheet_area(const DiscreteSheet& s) {
  return blocked_sum(s.vertex_count(),
                     [&](std::size_t p) { return s.weights[p] * s.dvol[p]; });
}

DiscreteSheet perturb(const DiscreteSheet& s, const NormalField& v, double eps) {
  const std::size_t nv = s.vertex_count();
  if (v.vertex_count() != nv) throw SheetError("field grid mismatch");
  std::vector<double> xs(s.vertices.size());
  parallel_for(nv, [&](std::size_t p) {
    const double* x = s.vertex(p);
    const double* vp = v.at(p);
    double* o = xs.data() + p * static_cast<std::size_t>(s.n);
    for (int i = 0; i < s.n; ++i) o[i] = x[i] + eps * vp[i];
  });
  return sheet_from_vertices(*s.metric, s.domain, std::move(xs));
}

NormalField project_normal(const DiscreteSheet& s, std::span<const double> ambient) {
  const std::size_t nv = s.vertex_count();
  const int n = s.n;
  if (ambient.size() != nv * static_cast<std::size_t>(n))
    throw SheetError("ambient field size mismatch");
  NormalField out = zero_field(s, false);
  const double sg = s.frame.sigma;
  parallel_for(nv, [&](std::size_t p) {
    Eigen::MatrixXd g;
    s.metric->metric_at(s.vertex(p), g);
    Eigen::Map<const Eigen::VectorXd> w(ambient.data() + p * static_cast<std::size_t>(n), n);
    Eigen::Map<const Eigen::VectorXd> f1(s.frame.at(p, 0), n), f2(s.frame.at(p, 1), n);
    const double a = sg * (w.transpose() * g * f1)(0, 0);
    const double b = sg * (w.transpose() * g * f2)(0, 0);
    double* o = out.at(p);
    for (int i = 0; i < n; ++i) o[i] = a * f1(i) + b * f2(i);
  });
  return out;
}

double tangential_residual(const DiscreteSheet& s, const NormalField& v) {
  return blocked_max(s.vertex_count(), [&](std::size_t p) {
    Eigen::MatrixXd g;
    s.metric->metric_at(s.vertex(p), g);
    Eigen::Map<const Eigen::VectorXd> vp(v.at(p), s.n);
    double r = 0.0;
    for (int d = 0; d < s.k(); ++d) {
      Eigen::Map<const Eigen::VectorXd> t(s.tangent(p, d), s.n);
      r = std::max(r, std::fabs((vp.transpose() * g * t)(0, 0)));
    }
    return r;
  });
}


double dvol_at(const MetricSpace& m, const ParamDomain& dom,
               const std::vector<double>& vertices, int n, std::size_t p) {
  const int k = dom.dim();
  if (n > 8 || k > 2) throw SheetError("dvol_at supports n <= 8, k <= 2");
  double tan[2][8];
  for (int d = 0; d < k; ++d) tangent_at(dom, vertices, n, p, d, tan[d]);
  double g[64];
  m.metric_at_raw(vertices.data() + p * static_cast<std::size_t>(n), g);
  double gram[2][2];
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) sum += tan[a][i] * g[i * n + j] * tan[b][j];
      gram[a][b] = sum;
      gram[b][a] = sum;
    }
  const double det = (k == 1) ? gram[0][0]
                              : gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
  return std::sqrt(std::fabs(det));
}

}  // namespace sheetspace

