#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sheetspace/chart_forms.hpp"
#include "sheetspace/sheet.hpp"

namespace sheetspace {

class TwistorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A point of the bundle of oriented definite 2-planes in the cotangent
// spaces, stored as a gauge-fixed covector pair: <u,v> = 0, <u,u> = <v,v> =
// sign (inner products through the inverse metric), first nonzero component
// of u positive. The complex covector u+iv is null.
struct TwistorPoint {
  Eigen::VectorXd x, u, v;
  double sign = 1.0;
};

// Chart coordinates on the bundle are (x, u, v) in R^{3n}; helpers pack and
// unpack tangent vectors in that order.
inline int bundle_dim(int n) { return 3 * n; }

// Scale/rotate/reflect (u,v) onto the gauge slice. Throws if the pair is not
// a definite plane representative.
TwistorPoint gauge_fix(const MetricSpace& m, Eigen::VectorXd x, Eigen::VectorXd u,
                       Eigen::VectorXd v);

// Orthonormalize the pair at p's own base point, then rotate it in-plane to
// the representative closest to ref. Used to difference neighboring points in
// a single local trivialization.
TwistorPoint align_to(const MetricSpace& m, const TwistorPoint& p,
                      const TwistorPoint& ref);

// Oriented definite tangent plane span(a,b) -> gauge-fixed covector pair, and
// back. Round trips reproduce the plane.
TwistorPoint plane_to_null(const MetricSpace& m, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& a, const Eigen::VectorXd& b);
std::pair<Eigen::VectorXd, Eigen::VectorXd> null_to_plane(const MetricSpace& m,
                                                          const TwistorPoint& p);

// CR data at a point, from the kernel of d theta on the null-constraint
// tangent space, projected onto the gauge slice along the scale and phase
// orbit directions.
struct CrBasis {
  Eigen::MatrixXcd d_basis;        // 3n x (n-1)
  Eigen::MatrixXd h_basis;         // 3n x (2n-2), orthonormal
  Eigen::MatrixXd slice_basis;     // 3n x (3n-4), orthonormal
  Eigen::MatrixXd quotient_basis;  // 3n x (n-2), orthonormal, normal to H in the slice
  Eigen::MatrixXd j_on_h;          // (2n-2) x (2n-2) in h_basis coordinates
  int dim_total = 0;               // 3n-4
  int rank_h = 0;                  // 2n-2
  int rank_d = 0;                  // n-1
  int codim = 0;                   // n-2
};
CrBasis cr_basis(const MetricSpace& m, const TwistorPoint& p);

// Sampled sheet in the bundle chart.
struct TwistorSheet {
  ParamDomain domain;
  const MetricSpace* metric = nullptr;
  int n = 0;
  std::vector<TwistorPoint> points;
  bool lifted = false;

  std::size_t vertex_count() const { return domain.vertex_count(); }
};

// Tangent of the sheet along axis d at vertex p, in chart coordinates, with
// grid neighbors rotated into p's gauge before differencing.
Eigen::VectorXd sheet_tangent(const TwistorSheet& ts, std::size_t p, int d);

// Lift of a world-sheet: per-vertex normal plane, lowered and gauge fixed.
// Validates transversality (sheet tangents complement H).
TwistorSheet gauss_lift(const DiscreteSheet& s);

// Sheet over the same base points whose plane at each vertex is the normal
// plane of the vertex `offset` grid steps away along the given axis. Stays
// transverse to H everywhere but annihilates theta nowhere; used as the
// non-lift discriminator.
TwistorSheet shifted_plane_sheet(const DiscreteSheet& s, int axis, int offset);

// theta on a sheet tangent: (u+iv) applied to the x-part. The x-tangent is
// differenced at fourth order so the residual resolves the second-order
// accuracy of the plane field itself (the discrete lift annihilates its own
// second-order tangents identically).
std::complex<double> theta_eval(const TwistorSheet& ts, std::size_t p, int d);
// sup over vertices and directions of |theta(tangent)|
double theta_residual(const TwistorSheet& ts);

// Quadrature-mean |theta| against tangents of the parametrization itself
// (fine-step differences of the map, independent of the grid); isolates the
// plane field's own discretization error.
double theta_map_residual(const TwistorSheet& ts, const std::vector<std::string>& maps,
                          double delta = 1e-6);

// Per-vertex tangent vectors of the bundle chart (values in R^{3n}).
struct ConnectingField {
  int n = 0;
  std::vector<double> values;  // V x 3n
  const double* at(std::size_t p) const {
    return values.data() + p * static_cast<std::size_t>(3 * n);
  }
  double* at(std::size_t p) { return values.data() + p * static_cast<std::size_t>(3 * n); }
};

// Pushforward of a normal field through the lift, by central differences of
// the lifts of the perturbed sheets, each aligned to the center lift.
ConnectingField lift_connecting_field(const DiscreteSheet& s, const TwistorSheet& ts,
                                      const NormalField& w, double eps);

// Vertical field (0, lowered unit first tangent, 0): lies in H and in the
// gauge slice but is not tangent to any lift; keeps the Legendrian residual
// bounded below.
ConnectingField synthetic_vertical_field(const DiscreteSheet& s, const TwistorSheet& ts);

// sup over vertices of max over directions of
//   | d theta(v, t_d) + D_d[theta(v)] |
// evaluated per vertex in that vertex's gauge.
double legendrian_residual(const TwistorSheet& ts, const ConnectingField& v);

struct LeviResult {
  Eigen::MatrixXd image_components;  // (n-2) x (2 (n-1)^2)
  double sigma_min = 0.0;
};
// Levi map at a point: finite-difference brackets [Z_i, conj Z_j] of an
// aligned local frame of the CR distribution, reduced modulo H; sigma_min is
// the smallest singular value of the assembled map onto the quotient.
LeviResult levi_form(const MetricSpace& m, const TwistorPoint& p, double eps);

struct ObservableResult {
  double value = 0.0;
  double fd_derivative = 0.0;
  double formula_derivative = 0.0;
  double residual = 0.0;
};
// Integral of gamma over the sheet, its finite-difference derivative along
// the flow of w, and the first-variation formula
//   w f = int_S (w . d gamma) + int_{dS} (w . gamma).
ObservableResult observable_and_derivative(const TwistorSheet& ts, const ChartForm& gamma,
                                           const ConnectingField& w, double eps);

// Random gauge-fixed point with a definite plane, sampled in the metric's
// chart box. Deterministic in the seed.
TwistorPoint random_twistor_point(const MetricSpace& m, std::uint64_t seed);

}  // namespace sheetspace
