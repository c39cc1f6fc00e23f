#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sheetspace/grid.hpp"
#include "sheetspace/metric.hpp"

namespace sheetspace {

class SheetError : public std::runtime_error {
 public:
  SheetError(const std::string& msg, std::size_t vertex = ParamDomain::npos)
      : std::runtime_error(msg), vertex_(vertex) {}
  std::size_t vertex() const { return vertex_; }

 private:
  std::size_t vertex_;
};

// Orthonormal frame of the normal plane at each vertex. sigma is +1 when the
// induced normal metric is positive definite, -1 when negative definite;
// sigma * g(f_a, f_b) = delta_ab either way. Frame order obeys the repo-wide
// orientation convention: (e_1..e_k, f1, f2) is positively oriented in the
// chart, and J rotates f1 -> f2 -> -f1.
struct NormalFrame {
  int n = 0;
  double sigma = 1.0;
  std::vector<double> f;  // V x 2 x n
  const double* at(std::size_t p, int a) const {
    return f.data() + (p * 2 + static_cast<std::size_t>(a)) * static_cast<std::size_t>(n);
  }
  double* at(std::size_t p, int a) {
    return f.data() + (p * 2 + static_cast<std::size_t>(a)) * static_cast<std::size_t>(n);
  }
};

// Sampled codimension-2 submanifold. Tangents are central differences in
// parameter space (second-order one-sided at non-periodic ends). Immutable
// after construction.
struct DiscreteSheet {
  ParamDomain domain;
  const MetricSpace* metric = nullptr;
  int n = 0;
  std::vector<double> vertices;     // V x n
  std::vector<double> tangents;     // V x k x n
  std::vector<double> induced_det;  // V
  std::vector<double> dvol;         // V  (sqrt|det induced|)
  std::vector<double> weights;      // V  (parameter quad weights)
  std::vector<std::uint8_t> boundary;
  NormalFrame frame;

  int k() const { return domain.dim(); }
  std::size_t vertex_count() const { return domain.vertex_count(); }
  const double* vertex(std::size_t p) const {
    return vertices.data() + p * static_cast<std::size_t>(n);
  }
  const double* tangent(std::size_t p, int d) const {
    return tangents.data() +
           (p * static_cast<std::size_t>(k()) + static_cast<std::size_t>(d)) *
               static_cast<std::size_t>(n);
  }
};

// Per-vertex ambient vectors lying in the normal plane. When boundary_zero is
// set the values at boundary vertices are exactly zero.
struct NormalField {
  int n = 0;
  bool boundary_zero = false;
  std::vector<double> values;  // V x n
  const double* at(std::size_t p) const {
    return values.data() + p * static_cast<std::size_t>(n);
  }
  double* at(std::size_t p) { return values.data() + p * static_cast<std::size_t>(n); }
  std::size_t vertex_count() const {
    return values.size() / static_cast<std::size_t>(n);
  }
  double sup_norm() const;
};

NormalField zero_field(const DiscreteSheet& s, bool boundary_zero = true);

// Builds a sheet from chart maps in the domain's parameter names. Throws
// SheetError when tangents are rank-deficient, the induced metric is
// degenerate, or the normal plane fails to be definite somewhere.
DiscreteSheet build_sheet(const MetricSpace& m, const ParamDomain& domain,
                          const std::vector<std::string>& map_exprs);

DiscreteSheet sheet_from_vertices(const MetricSpace& m, const ParamDomain& domain,
                                  std::vector<double> vertices);

inline const NormalFrame& normal_frame(const DiscreteSheet& s) { return s.frame; }

// Pointwise +90 degree rotation in the normal plane: a f1 + b f2 -> -b f1 + a f2.
NormalField rotate_J(const DiscreteSheet& s, const NormalField& v);

// Quadrature of a per-vertex scalar against the induced volume density.
double integrate(const DiscreteSheet& s, std::span<const double> field);
double sheet_area(const DiscreteSheet& s);

// Chart translation p -> x(p) + eps * v(p) on the shared parameter grid.
DiscreteSheet perturb(const DiscreteSheet& s, const NormalField& v, double eps);

// Pointwise g-orthogonal projection of an ambient per-vertex field onto the
// normal plane: w -> sigma * (g(w,f1) f1 + g(w,f2) f2).
NormalField project_normal(const DiscreteSheet& s, std::span<const double> ambient);

// Largest |g(v, e_i)| over vertices and tangent directions.
double tangential_residual(const DiscreteSheet& s, const NormalField& v);

// Induced volume density at one vertex of a raw vertex array; allocation-free
// (supports n <= 8, k <= 2). Used by kernels that revalue a few vertices of a
// locally modified configuration.
double dvol_at(const MetricSpace& m, const ParamDomain& dom,
               const std::vector<double>& vertices, int n, std::size_t p);

}  // namespace sheetspace
