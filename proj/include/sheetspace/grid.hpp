#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sheetspace {

struct ParamAxis {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  int count = 0;
  bool periodic = false;
};

// Tensor-product parameter grid. Periodic axes are sampled with the endpoint
// identified (uniform closed rule); non-periodic axes include both endpoints
// and use trapezoid weights. Row-major flattening, last axis fastest.
class ParamDomain {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  ParamDomain() = default;  // empty; filled by move-assign from a real domain
  explicit ParamDomain(std::vector<ParamAxis> axes);

  int dim() const { return static_cast<int>(axes_.size()); }
  std::size_t vertex_count() const { return vertex_count_; }
  const ParamAxis& axis(int d) const { return axes_[static_cast<std::size_t>(d)]; }
  double spacing(int d) const;

  void unflatten(std::size_t flat, int* mi) const;
  std::size_t flatten(const int* mi) const;

  // Neighbor along axis d at the given offset; wraps on periodic axes,
  // npos outside non-periodic ones.
  std::size_t neighbor(std::size_t flat, int d, int step) const;

  void param_at(std::size_t flat, double* s) const;
  bool is_boundary(std::size_t flat) const;
  double quad_weight(std::size_t flat) const;
  // product of per-axis weights with one axis left out (face quadrature)
  double quad_weight_excluding(std::size_t flat, int skip_axis) const;

  bool same_grid(const ParamDomain& other) const;

  std::vector<std::string> axis_names() const;

 private:
  std::vector<ParamAxis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t vertex_count_ = 0;
};

}  // namespace sheetspace
