#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "sheetspace/kaehler.hpp"
#include "sheetspace/random_fields.hpp"
#include "sheetspace/sheet.hpp"

using namespace sheetspace;

namespace {

constexpr double kPi = 3.14159265358979323846;

ParamDomain cylinder_domain(int nt, int ns) {
  return ParamDomain({{"t", 0.0, 1.0, nt, false}, {"s", 0.0, 2 * kPi, ns, true}});
}

DiscreteSheet minkowski_cylinder(const MetricSpace& m, int nt, int ns) {
  return build_sheet(m, cylinder_domain(nt, ns), {"t", "cos(s)", "sin(s)", "0"});
}

ParamDomain circle_domain(int ns) {
  return ParamDomain({{"s", 0.0, 2 * kPi, ns, true}});
}

}  // namespace

TEST_CASE("minkowski cylinder builds with induced metric diag(-1,1)") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 32, 64);
  const std::size_t nv = sh.vertex_count();
  // oracle: direct evaluation of g on the discrete tangents; the analytic
  // values are g(e_t,e_t) = -1, g(e_s,e_s) = 1 up to O(h^2)
  for (std::size_t p = 0; p < nv; p += 7) {
    const double* x = sh.vertex(p);
    double gtt = m.inner(x, sh.tangent(p, 0), sh.tangent(p, 0));
    double gss = m.inner(x, sh.tangent(p, 1), sh.tangent(p, 1));
    double gts = m.inner(x, sh.tangent(p, 0), sh.tangent(p, 1));
    CHECK(gtt == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(gss == doctest::Approx(1.0).epsilon(0.01));
    CHECK(gts == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(sh.induced_det[p] < 0.0);
  }
  CHECK(sh.frame.sigma == 1.0);
}

TEST_CASE("euclidean circle builds as a closed curve") {
  auto m = MetricSpace::euclidean(3);
  auto sh = build_sheet(m, circle_domain(256), {"cos(s)", "sin(s)", "0"});
  CHECK(sh.frame.sigma == 1.0);
  for (std::size_t p = 0; p < sh.vertex_count(); ++p) CHECK(sh.boundary[p] == 0);
  CHECK(sheet_area(sh) == doctest::Approx(2 * kPi).epsilon(1e-3));
}

TEST_CASE("degenerate tangents are rejected") {
  auto m = MetricSpace::minkowski(4);
  // map independent of s: the s-tangent vanishes identically
  CHECK_THROWS_AS(build_sheet(m, cylinder_domain(16, 16), {"t", "t", "0", "0"}),
                  SheetError);
}

TEST_CASE("sheets crossing the light cone are rejected with a definiteness error") {
  auto m = MetricSpace::minkowski(4);
  // tilted cylinder: the tangent plane touches the light cone where
  // 0.75 = sin^2(s), and is spacelike near s = 0 (indefinite normal plane)
  try {
    build_sheet(m, cylinder_domain(16, 64), {"0.5*t", "t", "cos(s)", "sin(s)"});
    FAIL("expected a world-sheet violation");
  } catch (const SheetError& e) {
    CHECK(std::string(e.what()).find("definite") != std::string::npos);
  }
}

TEST_CASE("normal frame at s=0 spans the expected plane") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 64);
  // vertex (t index 0, s index 0): normal plane = span{(0,1,0,0),(0,0,0,1)}
  // oracle: the frame must annihilate both tangents and have no x0/x2 parts
  const double* f1 = sh.frame.at(0, 0);
  const double* f2 = sh.frame.at(0, 1);
  for (const double* f : {f1, f2}) {
    CHECK(std::fabs(f[0]) < 1e-9);
    CHECK(std::fabs(f[2]) < 1e-9);
  }

  SUBCASE("euclidean circle at s=0: normal plane span{(1,0,0),(0,0,1)}") {
    auto me = MetricSpace::euclidean(3);
    auto c = build_sheet(me, circle_domain(64), {"cos(s)", "sin(s)", "0"});
    CHECK(std::fabs(c.frame.at(0, 0)[1]) < 1e-9);
    CHECK(std::fabs(c.frame.at(0, 1)[1]) < 1e-9);
    CHECK(c.frame.sigma == 1.0);
  }
}

TEST_CASE("frame invariants hold everywhere") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 32);
  const double sg = sh.frame.sigma;
  for (std::size_t p = 0; p < sh.vertex_count(); ++p) {
    const double* x = sh.vertex(p);
    Eigen::Map<const Eigen::VectorXd> f1(sh.frame.at(p, 0), 4), f2(sh.frame.at(p, 1), 4);
    CHECK(sg * m.inner(x, f1, f1) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sg * m.inner(x, f2, f2) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(m.inner(x, f1, f2) == doctest::Approx(0.0).epsilon(1e-10));
    for (int d = 0; d < 2; ++d) {
      Eigen::Map<const Eigen::VectorXd> t(sh.tangent(p, d), 4);
      CHECK(std::fabs(m.inner(x, f1, t)) < 1e-9);
      CHECK(std::fabs(m.inner(x, f2, t)) < 1e-9);
    }
    // orientation: det[e_t, e_s, f1, f2] > 0
    Eigen::MatrixXd full(4, 4);
    full.col(0) = Eigen::Map<const Eigen::VectorXd>(sh.tangent(p, 0), 4);
    full.col(1) = Eigen::Map<const Eigen::VectorXd>(sh.tangent(p, 1), 4);
    full.col(2) = f1;
    full.col(3) = f2;
    CHECK(full.determinant() > 0.0);
  }
}

TEST_CASE("frames vary continuously along grid lines") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 64);
  const auto& dom = sh.domain;
  for (std::size_t p = 0; p < sh.vertex_count(); ++p) {
    for (int d = 0; d < 2; ++d) {
      std::size_t q = dom.neighbor(p, d, 1);
      if (q == ParamDomain::npos) continue;
      for (int a = 0; a < 2; ++a) {
        double diff = 0.0;
        for (int i = 0; i < 4; ++i) {
          double c = sh.frame.at(p, a)[i] - sh.frame.at(q, a)[i];
          diff += c * c;
        }
        CHECK(std::sqrt(diff) < 0.3);  // ~ one grid step of rotation at most
      }
    }
  }
}

TEST_CASE("J squares to -1 and preserves g") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 32);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    NormalField v = random_normal_field(sh, trial_seed(5, static_cast<std::uint64_t>(trial)));
    NormalField jv = rotate_J(sh, v);
    NormalField jjv = rotate_J(sh, jv);
    for (std::size_t p = 0; p < sh.vertex_count(); ++p)
      for (int i = 0; i < 4; ++i)
        CHECK(jjv.at(p)[i] + v.at(p)[i] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("g(Jv, Jw) = g(v, w) pointwise on random pairs") {
    for (int trial = 0; trial < 100; ++trial) {
      NormalField v = random_normal_field(sh, trial_seed(7, 2 * trial));
      NormalField w = random_normal_field(sh, trial_seed(7, 2 * trial + 1));
      NormalField jv = rotate_J(sh, v);
      NormalField jw = rotate_J(sh, w);
      for (std::size_t p = 0; p < sh.vertex_count(); p += 37) {
        const double* x = sh.vertex(p);
        double a = m.inner(x, v.at(p), w.at(p));
        double b = m.inner(x, jv.at(p), jw.at(p));
        CHECK(std::fabs(a - b) < 1e-12);
      }
    }
  }
  SUBCASE("v = f1 maps to f2") {
    NormalField v = zero_field(sh, false);
    for (std::size_t p = 0; p < sh.vertex_count(); ++p)
      for (int i = 0; i < 4; ++i) v.at(p)[i] = sh.frame.at(p, 0)[i];
    NormalField jv = rotate_J(sh, v);
    for (std::size_t p = 0; p < sh.vertex_count(); ++p)
      for (int i = 0; i < 4; ++i)
        CHECK(jv.at(p)[i] == doctest::Approx(sh.frame.at(p, 1)[i]).epsilon(1e-10));
  }
}

TEST_CASE("quadrature: values and refinement slope") {
  auto m = MetricSpace::minkowski(4);
  SUBCASE("unit cylinder area is 2 pi") {
    auto sh = minkowski_cylinder(m, 64, 64);
    CHECK(sheet_area(sh) == doctest::Approx(2 * kPi).epsilon(2e-3));
    std::vector<double> zero(sh.vertex_count(), 0.0);
    CHECK(integrate(sh, zero) == 0.0);
  }
  SUBCASE("smooth integrand converges at slope 2") {
    std::vector<double> eps, res;
    for (int ngrid : {16, 32, 64}) {
      auto sh = minkowski_cylinder(m, ngrid, ngrid);
      std::vector<double> f(sh.vertex_count());
      for (std::size_t p = 0; p < sh.vertex_count(); ++p) {
        double sp[2];
        sh.domain.param_at(p, sp);
        f[p] = std::exp(sp[0]) * (2.0 + std::cos(sp[1]));
      }
      // analytic value: int_0^1 e^t dt * int_0^2pi (2 + cos s) ds = (e-1) 4pi
      double want = (std::exp(1.0) - 1.0) * 4 * kPi;
      eps.push_back(1.0 / ngrid);
      res.push_back(std::fabs(integrate(sh, f) - want));
    }
    double slope = fit_loglog_slope(eps, res);
    CHECK(slope == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("perturb") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 32);

  SUBCASE("zero step returns bit-identical vertices") {
    NormalField v = random_normal_field(sh, 42);
    auto sh2 = perturb(sh, v, 0.0);
    for (std::size_t i = 0; i < sh.vertices.size(); ++i)
      CHECK(sh.vertices[i] == sh2.vertices[i]);
  }

  SUBCASE("radial perturbation scales the cylinder") {
    auto fine = minkowski_cylinder(m, 16, 64);
    // radial normal field (0, cos s, sin s, 0)
    NormalField v = zero_field(fine, false);
    for (std::size_t p = 0; p < fine.vertex_count(); ++p) {
      double sp[2];
      fine.domain.param_at(p, sp);
      v.at(p)[1] = std::cos(sp[1]);
      v.at(p)[2] = std::sin(sp[1]);
    }
    CHECK(tangential_residual(fine, v) < 1e-9);
    auto grown = perturb(fine, v, 0.1);
    CHECK(sheet_area(grown) == doctest::Approx(2 * kPi * 1.1).epsilon(3e-3));

    // collapsing the radius past zero violates the world-sheet condition
    CHECK_THROWS_AS(perturb(fine, v, -1.0), SheetError);
  }

  SUBCASE("boundary vertices stay put under boundary-zero fields") {
    NormalField v = random_normal_field(sh, 9);
    auto moved = perturb(sh, v, 0.05);
    for (std::size_t p = 0; p < sh.vertex_count(); ++p)
      if (sh.boundary[p])
        for (int i = 0; i < 4; ++i)
          CHECK(moved.vertex(p)[i] == sh.vertex(p)[i]);
  }
}

TEST_CASE("project_normal") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 32);

  SUBCASE("normal input is unchanged") {
    NormalField v = random_normal_field(sh, 1);
    NormalField pv = project_normal(sh, v.values);
    for (std::size_t i = 0; i < v.values.size(); ++i)
      CHECK(pv.values[i] == doctest::Approx(v.values[i]).epsilon(1e-12));
  }

  SUBCASE("tangent input projects to zero") {
    std::vector<double> w(sh.vertices.size());
    for (std::size_t p = 0; p < sh.vertex_count(); ++p)
      for (int i = 0; i < 4; ++i)
        w[p * 4 + static_cast<std::size_t>(i)] = sh.tangent(p, 0)[i];
    NormalField pv = project_normal(sh, w);
    CHECK(pv.sup_norm() < 1e-9);
  }

  SUBCASE("constant e3 projects to the f-component of magnitude 1") {
    // oracle: explicit frame at each s from the orthogonality conditions;
    // e3 = (0,0,0,1) is already normal, so the projection returns it
    std::vector<double> w(sh.vertices.size(), 0.0);
    for (std::size_t p = 0; p < sh.vertex_count(); ++p)
      w[p * 4 + 3] = 1.0;
    NormalField pv = project_normal(sh, w);
    for (std::size_t p = 0; p < sh.vertex_count(); ++p) {
      CHECK(pv.at(p)[3] == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(std::fabs(pv.at(p)[1]) < 1e-9);
    }
  }
}

TEST_CASE("random fields are smooth, boundary-zero and normal") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 32);
  NormalField v = random_normal_field(sh, 42);
  CHECK(v.boundary_zero);
  CHECK(tangential_residual(sh, v) < 1e-9);
  for (std::size_t p = 0; p < sh.vertex_count(); ++p)
    if (sh.boundary[p])
      for (int i = 0; i < 4; ++i) CHECK(v.at(p)[i] == 0.0);
  // deterministic under the same seed
  NormalField v2 = random_normal_field(sh, 42);
  for (std::size_t i = 0; i < v.values.size(); ++i) CHECK(v.values[i] == v2.values[i]);
}

TEST_CASE("frame gauge does not leak into computed quantities") {
  auto m = MetricSpace::minkowski(4);
  auto sh = minkowski_cylinder(m, 16, 32);
  NormalField v = random_normal_field(sh, 21);
  NormalField w = random_normal_field(sh, 22);
  const double h0 = metric_h(sh, v, w);
  const double o0 = form_omega(sh, v, w);
  NormalField jv0 = rotate_J(sh, v);

  // rotate the stored frame in-plane by a position-dependent angle
  DiscreteSheet rotated = sh;
  for (std::size_t p = 0; p < sh.vertex_count(); ++p) {
    double ang = 0.3 + 0.01 * static_cast<double>(p % 17);
    double c = std::cos(ang), s = std::sin(ang);
    for (int i = 0; i < 4; ++i) {
      double f1 = sh.frame.at(p, 0)[i], f2 = sh.frame.at(p, 1)[i];
      rotated.frame.at(p, 0)[i] = c * f1 + s * f2;
      rotated.frame.at(p, 1)[i] = -s * f1 + c * f2;
    }
  }
  CHECK(metric_h(rotated, v, w) == doctest::Approx(h0).epsilon(1e-12));
  CHECK(form_omega(rotated, v, w) == doctest::Approx(o0).epsilon(1e-12));
  NormalField jv1 = rotate_J(rotated, v);
  for (std::size_t i = 0; i < jv0.values.size(); ++i)
    CHECK(jv1.values[i] == doctest::Approx(jv0.values[i]).epsilon(1e-10));
}
