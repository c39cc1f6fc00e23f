#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sheetspace/chart_forms.hpp"
#include "sheetspace/sheet.hpp"

namespace sheetspace {

// Finite-difference sweep parameters shared by the residual checks.
struct SweepSpec {
  std::vector<double> eps{1e-2, 5e-3, 2.5e-3};
  int trials = 3;
  std::uint64_t seed = 42;
  double expected_slope = 2.0;
  double slope_tol = 0.3;

  void validate() const;
};

// L2 inner product of normal fields. The integrand carries the definiteness
// sign of the normal plane, so h is positive definite for either sign.
double metric_h(const DiscreteSheet& s, const NormalField& v, const NormalField& w);

// Fiber-integrated 2-form: omega(v, w) = sum_p W_p * Omega(w(p), v(p), e_1..e_k).
// The volume form already carries sqrt|det g|; no induced density enters.
double form_omega(const DiscreteSheet& s, const NormalField& v, const NormalField& w);
double form_omega_raw(const DiscreteSheet& s, std::span<const double> v,
                      std::span<const double> w);

// max over seeded trials of |h(v,w) - omega(Jv, w)|; pointwise-algebraic, so
// the result is quadrature-free.
double compatibility_residual(const DiscreteSheet& s, int trials, std::uint64_t seed);

// max over seeded trials of |omega(Jv,Jw) - omega(v,w)|.
double j_invariance_residual(const DiscreteSheet& s, int trials, std::uint64_t seed);

// |d omega(u,v,w)| with the projection extension scheme: a field's value on a
// nearby sheet is the normal projection of its frozen ambient values, and all
// derivatives and brackets are central differences of step eps on the shared
// parameter grid.
double d_omega_residual(const DiscreteSheet& s, const NormalField& u,
                        const NormalField& v, const NormalField& w, double eps);

// Sup norm over vertices of the torsion
//   tau(v,w) = J[v,w] - [v,Jw] - [Jv,w] - J[Jv,Jw]
// evaluated with the same extension scheme; brackets are projected back to
// the normal plane, so tau is returned as a normal field's sup norm.
double nijenhuis_residual(const DiscreteSheet& s, const NormalField& v,
                          const NormalField& w, double eps);

// lambda(v) = sum_p W_p * Upsilon(v(p), e_1..e_k); a primitive of omega when
// d Upsilon equals the ambient volume form.
double potential_lambda(const DiscreteSheet& s, const NormalField& v,
                        const ChartForm& upsilon);

// max over sampled chart points of |d Upsilon(e_0..e_{n-1}) - sqrt|det g||.
double d_upsilon_residual(const MetricSpace& m, const ChartForm& upsilon,
                          int npoints, std::uint64_t seed);

// |D_v[lambda(w~)] - D_w[lambda(v~)] - omega(v,w)|
double d_lambda_residual(const DiscreteSheet& s, const NormalField& v,
                         const NormalField& w, const ChartForm& upsilon, double eps);

// Least-squares slope of log(res) against log(eps).
double fit_loglog_slope(std::span<const double> eps, std::span<const double> res);

}  // namespace sheetspace
