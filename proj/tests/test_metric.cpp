#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "sheetspace/metric.hpp"

using sheetspace::MetricError;
using sheetspace::MetricSpace;

namespace {

Eigen::VectorXd basis(int n, int i) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e(i) = 1.0;
  return e;
}

std::vector<Eigen::VectorXd> random_vectors(std::mt19937_64& rng, int n, int count) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < count; ++c) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = u(rng);
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("builtin metrics") {
  auto mink = MetricSpace::minkowski(4);
  double x[4] = {0.3, -0.2, 0.7, 1.1};
  Eigen::MatrixXd g = mink.metric_at(x);
  CHECK(g(0, 0) == -1.0);
  CHECK(g(1, 1) == 1.0);
  CHECK(g(0, 1) == 0.0);

  auto eu = MetricSpace::euclidean(3);
  double y[3] = {0, 0, 0};
  CHECK(eu.metric_at(y).isIdentity(0.0));

  auto conf = MetricSpace::conformal("exp(2*x1)", MetricSpace::minkowski(4));
  double origin[4] = {0, 0, 0, 0};
  Eigen::MatrixXd gc = conf.metric_at(origin);
  CHECK(gc(0, 0) == doctest::Approx(-1.0));
  CHECK(gc(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("inner products") {
  auto mink = MetricSpace::minkowski(4);
  double x[4] = {0, 0, 0, 0};
  CHECK(mink.inner(x, basis(4, 0), basis(4, 0)) == -1.0);
  CHECK(mink.inner(x, basis(4, 0), basis(4, 1)) == 0.0);

  auto eu = MetricSpace::euclidean(3);
  Eigen::VectorXd v(3);
  v << 1, 2, 2;
  double y[3] = {0, 0, 0};
  CHECK(eu.inner(y, v, v) == doctest::Approx(9.0));
}

TEST_CASE("inner equals the matrix contraction to 0 ulp") {
  auto conf = MetricSpace::conformal("exp(x1)", MetricSpace::minkowski(4));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    double x[4] = {u(rng), u(rng), u(rng), u(rng)};
    auto vs = random_vectors(rng, 4, 2);
    Eigen::MatrixXd g = conf.metric_at(x);
    double want = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) want += vs[0](i) * g(i, j) * vs[1](j);
    CHECK(conf.inner(x, vs[0], vs[1]) == want);
  }
}

TEST_CASE("volume form") {
  auto mink = MetricSpace::minkowski(4);
  double x[4] = {0.5, 0.1, -0.3, 0.2};
  std::vector<Eigen::VectorXd> std_basis = {basis(4, 0), basis(4, 1), basis(4, 2),
                                            basis(4, 3)};
  CHECK(mink.volume_form(x, std_basis) == doctest::Approx(1.0));

  SUBCASE("antisymmetry under transpositions, repeated arguments vanish") {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 100; ++t) {
      auto vs = random_vectors(rng, 4, 4);
      double base = mink.volume_form(x, vs);
      int i = static_cast<int>(rng() % 4), j = static_cast<int>(rng() % 4);
      if (i == j) j = (j + 1) % 4;
      std::swap(vs[static_cast<std::size_t>(i)], vs[static_cast<std::size_t>(j)]);
      CHECK(mink.volume_form(x, vs) == doctest::Approx(-base).epsilon(1e-12));
      vs[static_cast<std::size_t>(i)] = vs[static_cast<std::size_t>(j)];
      CHECK(mink.volume_form(x, vs) == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
}

// The conformal builtin scales lengths by the factor: g = factor^2 * base.
// Oracle: direct determinant evaluation of the assembled matrix.
TEST_CASE("conformal determinant exponent confirmed by direct evaluation") {
  auto conf = MetricSpace::conformal("exp(2*x1)", MetricSpace::minkowski(4));
  double x[4] = {0.0, 0.5, 0.0, 0.0};
  Eigen::MatrixXd g = conf.metric_at(x);
  const double det = g.determinant();
  // det(e^{4 x1} eta) = -e^{16 x1}
  CHECK(det == doctest::Approx(-std::exp(16 * 0.5)).epsilon(1e-12));
  std::vector<Eigen::VectorXd> std_basis = {basis(4, 0), basis(4, 1), basis(4, 2),
                                            basis(4, 3)};
  // sqrt|det| = e^{8 x1} = e^4 at x1 = 0.5
  CHECK(conf.volume_form(x, std_basis) ==
        doctest::Approx(std::exp(4.0)).epsilon(1e-12));
  CHECK(conf.volume_form(x, std_basis) == doctest::Approx(54.598150033).epsilon(1e-9));
}

TEST_CASE("conformal rescaling laws on random factors and points") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  const char* factors[] = {"exp(x1)", "1+x2^2", "exp(x0*x1)"};
  for (const char* fsrc : factors) {
    auto base = MetricSpace::minkowski(4);
    auto conf = MetricSpace::conformal(fsrc, MetricSpace::minkowski(4));
    auto fac = sheetspace::Expression::parse(fsrc);
    for (int t = 0; t < 20; ++t) {
      double x[4] = {u(rng), u(rng), u(rng), u(rng)};
      auto vs = random_vectors(rng, 4, 4);
      double f = fac.eval({{"x0", x[0]}, {"x1", x[1]}, {"x2", x[2]}, {"x3", x[3]}});
      // inner scales by factor^2, the volume form by factor^n
      CHECK(conf.inner(x, vs[0], vs[1]) ==
            doctest::Approx(f * f * base.inner(x, vs[0], vs[1])).epsilon(1e-12));
      CHECK(conf.volume_form(x, vs) ==
            doctest::Approx(std::pow(std::fabs(f), 4) * base.volume_form(x, vs))
                .epsilon(1e-11));
    }
  }
}

TEST_CASE("custom metrics validate structure and signature") {
  auto m = MetricSpace::custom(
      3, {{"1", "0", "0"}, {"0", "1", "0"}, {"0", "0", "1"}}, {0, 3});
  double x[3] = {0, 0, 0};
  m.check_signature_at(x);

  // declared signature is checked against eigenvalue sign counts at samples
  auto wrong = MetricSpace::custom(
      3, {{"1", "0", "0"}, {"0", "1", "0"}, {"0", "0", "1"}}, {1, 2});
  CHECK_THROWS_AS(wrong.check_signature_at(x), MetricError);

  // structural symmetry of the entry matrix is required at construction
  CHECK_THROWS_AS(MetricSpace::custom(3,
                                      {{"1", "x0", "0"}, {"x1", "1", "0"}, {"0", "0", "1"}},
                                      {0, 3}),
                  MetricError);
}

TEST_CASE("degeneracy is detected") {
  auto m = MetricSpace::custom(
      3, {{"x0", "0", "0"}, {"0", "1", "0"}, {"0", "0", "1"}}, {0, 3});
  double x[3] = {0.0, 0, 0};
  CHECK_THROWS_AS(m.abs_det_at(x), MetricError);
  double x2[3] = {1.0, 0, 0};
  CHECK(m.abs_det_at(x2) == doctest::Approx(1.0));
}
