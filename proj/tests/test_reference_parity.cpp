#include <cmath>

#include "doctest.h"
#include "sheetspace/flows.hpp"
#include "sheetspace/kaehler.hpp"
#include "sheetspace/random_fields.hpp"
#include "sheetspace/reference.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace sheetspace;

namespace {
constexpr double kPi = 3.14159265358979323846;

DiscreteSheet test_sheet() {
  auto* m = new MetricSpace(MetricSpace::minkowski(4));  // leaked on purpose: test fixture
  ParamDomain dom({{"t", 0.0, 1.0, 24, false}, {"s", 0.0, 2 * kPi, 24, true}});
  return build_sheet(*m, dom, {"t", "(1+0.1*t^2)*cos(s)", "(1+0.1*t^2)*sin(s)", "0.1*t"});
}
}  // namespace

TEST_CASE("parallel kernels match the serial reference") {
  auto sh = test_sheet();

  SUBCASE("quadrature") {
    std::vector<double> f(sh.vertex_count());
    for (std::size_t p = 0; p < f.size(); ++p) f[p] = std::sin(0.37 * static_cast<double>(p));
    const double fast = integrate(sh, f);
    const double ref = reference::integrate(sh, f);
    CHECK(fast == doctest::Approx(ref).epsilon(1e-13));
    CHECK(sheet_area(sh) == doctest::Approx(reference::sheet_area(sh)).epsilon(1e-13));
  }

  SUBCASE("projection") {
    NormalField v = random_normal_field(sh, 5);
    NormalField a = project_normal(sh, v.values);
    NormalField b = reference::project_normal(sh, v.values);
    for (std::size_t i = 0; i < a.values.size(); ++i)
      CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-13));
  }

  SUBCASE("area gradient: stencil revaluation vs full revaluation") {
    NormalField fast = h_gradient_area(sh);
    NormalField full = reference::h_gradient_area(sh);
    double worst = 0.0;
    for (std::size_t i = 0; i < fast.values.size(); ++i)
      worst = std::max(worst, std::fabs(fast.values[i] - full.values[i]));
    // identical up to rounding of the cancelled far-field quadrature terms
    CHECK(worst < 1e-8);
  }
}

#ifdef _OPENMP
TEST_CASE("results are bit-identical across thread counts") {
  const int saved = omp_get_max_threads();
  auto sh = test_sheet();
  std::vector<double> f(sh.vertex_count());
  for (std::size_t p = 0; p < f.size(); ++p) f[p] = std::cos(0.11 * static_cast<double>(p));

  omp_set_num_threads(1);
  const double i1 = integrate(sh, f);
  NormalField g1 = h_gradient_area(sh);
  omp_set_num_threads(4);
  const double i4 = integrate(sh, f);
  NormalField g4 = h_gradient_area(sh);
  omp_set_num_threads(saved);

  CHECK(i1 == i4);  // blocked reduction: exact equality
  for (std::size_t i = 0; i < g1.values.size(); ++i) CHECK(g1.values[i] == g4.values[i]);
}
#endif
