#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "doctest.h"
#include "sheetspace/kaehler.hpp"
#include "sheetspace/random_fields.hpp"
#include "sheetspace/twistor.hpp"

using namespace sheetspace;

namespace {

constexpr double kPi = 3.14159265358979323846;

DiscreteSheet minkowski_cylinder(const MetricSpace& m, int nt, int ns) {
  ParamDomain dom({{"t", 0.0, 1.0, nt, false}, {"s", 0.0, 2 * kPi, ns, true}});
  return build_sheet(m, dom, {"t", "cos(s)", "sin(s)", "0"});
}

// Frobenius distance between the orthogonal projectors onto two spans;
// of the order of the largest principal angle between the planes.
double plane_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qa(a), qb(b);
  Eigen::MatrixXd ua = qa.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd ub = qb.householderQ() * Eigen::MatrixXd::Identity(b.rows(), b.cols());
  return (ua * ua.transpose() - ub * ub.transpose()).norm();
}

}  // namespace

TEST_CASE("plane/null covector correspondence") {
  auto m = MetricSpace::minkowski(4);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4);

  SUBCASE("coordinate plane span{e2,e3} maps to (dx2, dx3)") {
    Eigen::VectorXd a = Eigen::VectorXd::Unit(4, 2), b = Eigen::VectorXd::Unit(4, 3);
    TwistorPoint p = plane_to_null(m, x, a, b);
    CHECK(p.sign == 1.0);
    CHECK(p.u(2) == doctest::Approx(1.0));
    CHECK(p.v(3) == doctest::Approx(1.0));
    CHECK(std::fabs(p.u(0)) + std::fabs(p.u(1)) + std::fabs(p.u(3)) < 1e-12);
  }

  SUBCASE("gauge invariants hold and u+iv is null") {
    for (int t = 0; t < 100; ++t) {
      TwistorPoint p = random_twistor_point(m, trial_seed(17, t));
      Eigen::MatrixXd ginv;
      m.inverse_metric_at(p.x.data(), ginv);
      const double guv = p.u.dot(ginv * p.v);
      const double guu = p.u.dot(ginv * p.u);
      const double gvv = p.v.dot(ginv * p.v);
      CHECK(std::fabs(guv) < 1e-9);
      CHECK(std::fabs(guu - gvv) < 1e-9);
      CHECK(std::fabs(std::fabs(guu) - 1.0) < 1e-9);
    }
  }

  SUBCASE("round trip reproduces the plane") {
    for (int t = 0; t < 100; ++t) {
      TwistorPoint p = random_twistor_point(m, trial_seed(18, t));
      auto [a, b] = null_to_plane(m, p);
      TwistorPoint p2 = plane_to_null(m, p.x, a, b);
      Eigen::MatrixXd s1(4, 2), s2(4, 2);
      s1.col(0) = p.u;
      s1.col(1) = p.v;
      s2.col(0) = p2.u;
      s2.col(1) = p2.v;
      CHECK(plane_distance(s1, s2) < 1e-9);
    }
  }

  SUBCASE("lightlike planes are rejected") {
    Eigen::VectorXd a(4), b(4);
    a << 1, 1, 0, 0;  // null direction
    b << 0, 0, 1, 0;
    CHECK_THROWS_AS(plane_to_null(m, x, a, b), TwistorError);
  }
}

TEST_CASE("CR data dimensions at random points") {
  SUBCASE("n = 4 lorentzian") {
    auto m = MetricSpace::minkowski(4);
    for (int t = 0; t < 50; ++t) {
      TwistorPoint p = random_twistor_point(m, trial_seed(21, t));
      CrBasis cr = cr_basis(m, p);
      CHECK(cr.dim_total == 8);
      CHECK(cr.rank_h == 6);
      CHECK(cr.rank_d == 3);
      CHECK(cr.codim == 2);
    }
  }
  SUBCASE("n = 3 riemannian") {
    auto m = MetricSpace::euclidean(3);
    for (int t = 0; t < 50; ++t) {
      TwistorPoint p = random_twistor_point(m, trial_seed(22, t));
      CrBasis cr = cr_basis(m, p);
      CHECK(cr.dim_total == 5);
      CHECK(cr.rank_h == 4);
      CHECK(cr.rank_d == 2);
      CHECK(cr.codim == 1);
    }
  }
  SUBCASE("curved metric keeps the same ranks") {
    auto m = MetricSpace::conformal("1+0.2*x1^2", MetricSpace::minkowski(4));
    for (int t = 0; t < 10; ++t) {
      TwistorPoint p = random_twistor_point(m, trial_seed(23, t));
      CrBasis cr = cr_basis(m, p);
      CHECK(cr.rank_d == 3);
    }
  }
}

TEST_CASE("J on H squares to -1 and preserves the vertical subspace") {
  auto m = MetricSpace::minkowski(4);
  for (int t = 0; t < 20; ++t) {
    TwistorPoint p = random_twistor_point(m, trial_seed(31, t));
    CrBasis cr = cr_basis(m, p);
    const int hr = cr.rank_h;
    Eigen::MatrixXd jj = cr.j_on_h * cr.j_on_h + Eigen::MatrixXd::Identity(hr, hr);
    CHECK(jj.norm() < 1e-9);

    // vertical subspace of H: x-part zero
    Eigen::MatrixXd xpart = cr.h_basis.topRows(4);  // x components in h-coords
    Eigen::JacobiSVD<Eigen::MatrixXd> xsvd(xpart, Eigen::ComputeFullV);
    // kernel of the x-part extraction = vertical directions inside H
    int xrank = 0;
    for (int i = 0; i < xsvd.singularValues().size(); ++i)
      if (xsvd.singularValues()(i) > 1e-9) ++xrank;
    CHECK(xrank == 2);  // horizontal motions span the raised plane
    Eigen::MatrixXd vert = xsvd.matrixV().rightCols(hr - xrank);
    Eigen::MatrixXd jvert = cr.j_on_h * vert;
    CHECK((xpart * jvert).norm() < 1e-8);  // J(vertical) stays vertical

    // horizontal action: the x-part of J h stays inside the raised plane
    auto [a, b] = null_to_plane(m, p);
    Eigen::MatrixXd plane(4, 2);
    plane.col(0) = a;
    plane.col(1) = b;
    Eigen::MatrixXd pproj = plane * (plane.transpose() * plane).inverse() * plane.transpose();
    Eigen::MatrixXd jx = xpart * cr.j_on_h;  // x-parts of J(h-basis)
    CHECK((jx - pproj * jx).norm() < 1e-8);
  }
}

TEST_CASE("gauss lift") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 32);
  TwistorSheet ts = gauss_lift(sh);
  CHECK(ts.lifted);

  SUBCASE("lift at s=0 carries the lowered normal plane") {
    // normal plane span{(0,1,0,0),(0,0,0,1)}; lowering with the flat metric
    // leaves spatial components unchanged
    const TwistorPoint& p = ts.points[0];
    Eigen::MatrixXd span(4, 2), expect(4, 2);
    span.col(0) = p.u;
    span.col(1) = p.v;
    expect.setZero();
    expect(1, 0) = 1.0;
    expect(3, 1) = 1.0;
    CHECK(plane_distance(span, expect) < 1e-9);
  }

  SUBCASE("null_to_plane recovers the normal planes") {
    for (std::size_t p = 0; p < ts.vertex_count(); p += 17) {
      auto [a, b] = null_to_plane(m, ts.points[p]);
      Eigen::MatrixXd got(4, 2), want(4, 2);
      got.col(0) = a;
      got.col(1) = b;
      want.col(0) = Eigen::Map<const Eigen::VectorXd>(sh.frame.at(p, 0), 4);
      want.col(1) = Eigen::Map<const Eigen::VectorXd>(sh.frame.at(p, 1), 4);
      CHECK(plane_distance(got, want) < 1e-9);
    }
  }

  SUBCASE("euclidean circle lifts into the five-dimensional bundle") {
    auto me = MetricSpace::euclidean(3);
    ParamDomain dom({{"s", 0.0, 2 * kPi, 64, true}});
    auto c = build_sheet(me, dom, {"cos(s)", "sin(s)", "0"});
    TwistorSheet tc = gauss_lift(c);
    CrBasis cr = cr_basis(me, tc.points[0]);
    CHECK(cr.dim_total == 5);
  }
}

TEST_CASE("theta annihilation separates lifts from non-lifts") {
  auto m = MetricSpace::minkowski(4);
  // flared cylinder; the plain one annihilates theta identically because
  // every difference stencil of the circle map is exactly tangent
  const std::vector<std::string> maps = {"t", "(1+0.1*t^3)*cos(s)",
                                         "(1+0.1*t^3)*sin(s)", "0.1*t^2+0.05*t^3"};

  SUBCASE("lift residual decays at slope >= 2 under grid refinement") {
    std::vector<double> hs, res;
    for (int nn : {16, 32, 64}) {
      ParamDomain dom({{"t", 0.0, 1.0, nn, false}, {"s", 0.0, 2 * kPi, nn, true}});
      auto sh = build_sheet(m, dom, maps);
      TwistorSheet ts = gauss_lift(sh);
      hs.push_back(1.0 / nn);
      res.push_back(theta_map_residual(ts, maps));
    }
    CAPTURE(res[0]);
    CAPTURE(res[2]);
    const double slope = fit_loglog_slope(hs, res);
    CHECK(slope >= 2.0);
    CHECK(slope < 3.0);
  }

  SUBCASE("the plain cylinder lift annihilates its grid tangents exactly") {
    auto sh = minkowski_cylinder(m, 16, 32);
    TwistorSheet ts = gauss_lift(sh);
    CHECK(theta_residual(ts) < 1e-10);
  }

  SUBCASE("rotated plane field keeps the residual above 0.1") {
    ParamDomain dom({{"t", 0.0, 1.0, 16, false}, {"s", 0.0, 2 * kPi, 32, true}});
    auto sh = build_sheet(m, dom, maps);
    // normal planes borrowed from a quarter turn away: theta picks up
    // |sin(offset angle)| ~ 0.7 on the angular tangents
    TwistorSheet syn = shifted_plane_sheet(sh, 1, 4);
    CHECK(!syn.lifted);
    CHECK(theta_map_residual(syn, maps) > 0.1);
    CHECK(theta_residual(syn) > 0.1);
  }
}

TEST_CASE("legendrian residual discriminates lifted fields") {
  auto m = MetricSpace::minkowski(4);

  SUBCASE("lifted connecting fields satisfy the tangency identity") {
    std::vector<double> eps = {1e-2, 5e-3, 2.5e-3};
    const int grids[3] = {16, 32, 64};
    std::vector<double> res;
    for (int i = 0; i < 3; ++i) {
      auto sh = minkowski_cylinder(m, grids[i], grids[i]);
      TwistorSheet ts = gauss_lift(sh);
      NormalField w = smooth_normal_field(sh, trial_seed(42, 5));
      ConnectingField v = lift_connecting_field(sh, ts, w, eps[static_cast<std::size_t>(i)]);
      res.push_back(legendrian_residual(ts, v));
    }
    CAPTURE(res[0]);
    CAPTURE(res[1]);
    CAPTURE(res[2]);
    const double slope = fit_loglog_slope(eps, res);
    CHECK(slope >= 1.0);
    CHECK(res.back() < res.front());
  }

  SUBCASE("synthetic vertical field stays above 1e-2") {
    auto sh = minkowski_cylinder(m, 16, 32);
    TwistorSheet ts = gauss_lift(sh);
    ConnectingField v = synthetic_vertical_field(sh, ts);
    CHECK(legendrian_residual(ts, v) > 1e-2);
  }

  SUBCASE("zero field gives zero residual") {
    auto sh = minkowski_cylinder(m, 16, 32);
    TwistorSheet ts = gauss_lift(sh);
    ConnectingField z;
    z.n = 4;
    z.values.assign(sh.vertex_count() * 12, 0.0);
    CHECK(legendrian_residual(ts, z) == 0.0);
  }
}

TEST_CASE("levi form is surjective at random points") {
  SUBCASE("flat lorentzian") {
    auto m = MetricSpace::minkowski(4);
    for (int t = 0; t < 20; ++t) {
      TwistorPoint p = random_twistor_point(m, trial_seed(51, t));
      LeviResult l1 = levi_form(m, p, 1e-3);
      LeviResult l2 = levi_form(m, p, 5e-4);
      CHECK(l1.sigma_min > 0.0);
      CHECK(l1.image_components.rows() == 2);
      CHECK(std::fabs(l1.sigma_min - l2.sigma_min) < 0.1 * l1.sigma_min);
    }
  }
  SUBCASE("flat riemannian") {
    auto m = MetricSpace::euclidean(3);
    for (int t = 0; t < 20; ++t) {
      TwistorPoint p = random_twistor_point(m, trial_seed(52, t));
      LeviResult l1 = levi_form(m, p, 1e-3);
      LeviResult l2 = levi_form(m, p, 5e-4);
      CHECK(l1.sigma_min > 0.0);
      CHECK(l1.image_components.rows() == 1);
      CHECK(std::fabs(l1.sigma_min - l2.sigma_min) < 0.1 * l1.sigma_min);
    }
  }
}

TEST_CASE("observables and the first-variation formula") {
  SUBCASE("closed form on a closed sheet: derivative vanishes to rounding") {
    auto m = MetricSpace::euclidean(4);
    ParamDomain dom({{"a", 0.0, 2 * kPi, 32, true}, {"b", 0.0, 2 * kPi, 32, true}});
    auto torus = build_sheet(m, dom, {"cos(a)", "sin(a)", "0.5*cos(b)", "0.5*sin(b)"});
    TwistorSheet ts = gauss_lift(torus);
    ChartForm gamma(std::vector<std::string>{
                        "x0", "x1", "x2", "x3", "u0", "u1", "u2", "u3",
                        "v0", "v1", "v2", "v3"},
                    2);
    gamma.add_term("1", {"x1", "x2"});
    NormalField w = smooth_normal_field(torus, trial_seed(61, 0));
    ConnectingField cf = lift_connecting_field(torus, ts, w, 1e-3);
    ObservableResult r = observable_and_derivative(ts, gamma, cf, 1e-3);
    CHECK(std::fabs(r.fd_derivative) < 1e-8);
    CHECK(r.residual < 1e-8);
  }

  SUBCASE("torus lift with x0 dx1^dx2: slope-2 residual decay in the step") {
    // fully periodic, so summation by parts is exact and the central
    // difference's eps^2 truncation is the whole residual
    auto m = MetricSpace::euclidean(4);
    ParamDomain dom({{"a", 0.0, 2 * kPi, 64, true}, {"b", 0.0, 2 * kPi, 64, true}});
    auto torus = build_sheet(m, dom, {"cos(a)", "sin(a)", "0.5*cos(b)", "0.5*sin(b)"});
    TwistorSheet ts = gauss_lift(torus);
    ChartForm gamma(std::vector<std::string>{
                        "x0", "x1", "x2", "x3", "u0", "u1", "u2", "u3",
                        "v0", "v1", "v2", "v3"},
                    2);
    gamma.add_term("x0", {"x1", "x2"});
    std::vector<double> eps = {1e-2, 5e-3, 2.5e-3};
    NormalField w = smooth_normal_field(torus, trial_seed(62, 0));
    std::vector<double> res;
    for (double e : eps) {
      ConnectingField cf = lift_connecting_field(torus, ts, w, e);
      ObservableResult r = observable_and_derivative(ts, gamma, cf, e);
      res.push_back(r.residual);
    }
    CAPTURE(res[0]);
    CAPTURE(res[1]);
    CAPTURE(res[2]);
    const double slope = fit_loglog_slope(eps, res);
    CHECK(slope > 1.7);
    CHECK(slope < 2.3);
  }

  SUBCASE("cylinder lift exercises the boundary term; residual decays") {
    // the boundary defect of the discrete first variation is localized in
    // the one-sided stencil rows, so the joint sweep decays faster than
    // second order
    auto m = MetricSpace::minkowski(4);
    ChartForm gamma(std::vector<std::string>{
                        "x0", "x1", "x2", "x3", "u0", "u1", "u2", "u3",
                        "v0", "v1", "v2", "v3"},
                    2);
    gamma.add_term("x0", {"x1", "x2"});
    std::vector<double> eps = {1e-2, 5e-3, 2.5e-3};
    const int grids[3] = {16, 32, 64};
    std::vector<double> res;
    for (int i = 0; i < 3; ++i) {
      auto sh = minkowski_cylinder(m, grids[i], grids[i]);
      TwistorSheet ts = gauss_lift(sh);
      NormalField w = smooth_normal_field(sh, trial_seed(62, 0));
      ConnectingField cf = lift_connecting_field(sh, ts, w, eps[static_cast<std::size_t>(i)]);
      ObservableResult r =
          observable_and_derivative(ts, gamma, cf, eps[static_cast<std::size_t>(i)]);
      res.push_back(r.residual);
    }
    CAPTURE(res[0]);
    CAPTURE(res[2]);
    CHECK(fit_loglog_slope(eps, res) > 1.7);
    CHECK(res[2] < res[1]);
    CHECK(res[1] < res[0]);
  }

  SUBCASE("zero field gives exactly zero derivative") {
    auto m = MetricSpace::minkowski(4);
    auto sh = minkowski_cylinder(m, 16, 32);
    TwistorSheet ts = gauss_lift(sh);
    ChartForm gamma(std::vector<std::string>{
                        "x0", "x1", "x2", "x3", "u0", "u1", "u2", "u3",
                        "v0", "v1", "v2", "v3"},
                    2);
    gamma.add_term("x0", {"x1", "x2"});
    ConnectingField z;
    z.n = 4;
    z.values.assign(sh.vertex_count() * 12, 0.0);
    ObservableResult r = observable_and_derivative(ts, gamma, z, 1e-3);
    CHECK(r.fd_derivative == 0.0);
  }
}
