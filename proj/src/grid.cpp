#include "sheetspace/grid.hpp"

namespace sheetspace {

ParamDomain::ParamDomain(std::vector<ParamAxis> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw std::invalid_argument("parameter domain needs at least one axis");
  if (axes_.size() > 8) throw std::invalid_argument("parameter domain supports at most 8 axes");
  vertex_count_ = 1;
  for (const auto& a : axes_) {
    if (a.count < 8)
      throw std::invalid_argument("axis '" + a.name + "': sample count must be >= 8");
    if (!(a.lo < a.hi))
      throw std::invalid_argument("axis '" + a.name + "': empty range");
    vertex_count_ *= static_cast<std::size_t>(a.count);
  }
  strides_.assign(axes_.size(), 1);
  for (int d = static_cast<int>(axes_.size()) - 2; d >= 0; --d)
    strides_[static_cast<std::size_t>(d)] =
        strides_[static_cast<std::size_t>(d + 1)] *
        static_cast<std::size_t>(axes_[static_cast<std::size_t>(d + 1)].count);
}

double ParamDomain::spacing(int d) const {
  const auto& a = axes_[static_cast<std::size_t>(d)];
  return a.periodic ? (a.hi - a.lo) / a.count : (a.hi - a.lo) / (a.count - 1);
}

void ParamDomain::unflatten(std::size_t flat, int* mi) const {
  for (std::size_t d = 0; d < axes_.size(); ++d) {
    mi[d] = static_cast<int>(flat / strides_[d]);
    flat %= strides_[d];
  }
}

std::size_t ParamDomain::flatten(const int* mi) const {
  std::size_t flat = 0;
  for (std::size_t d = 0; d < axes_.size(); ++d)
    flat += static_cast<std::size_t>(mi[d]) * strides_[d];
  return flat;
}

std::size_t ParamDomain::neighbor(std::size_t flat, int d, int step) const {
  const auto& a = axes_[static_cast<std::size_t>(d)];
  int mi[8];
  unflatten(flat, mi);
  int i = mi[d] + step;
  if (a.periodic) {
    i %= a.count;
    if (i < 0) i += a.count;
  } else if (i < 0 || i >= a.count) {
    return npos;
  }
  mi[d] = i;
  return flatten(mi);
}

void ParamDomain::param_at(std::size_t flat, double* s) const {
  int mi[8];
  unflatten(flat, mi);
  for (std::size_t d = 0; d < axes_.size(); ++d)
    s[d] = axes_[d].lo + mi[d] * spacing(static_cast<int>(d));
}

bool ParamDomain::is_boundary(std::size_t flat) const {
  int mi[8];
  unflatten(flat, mi);
  for (std::size_t d = 0; d < axes_.size(); ++d)
    if (!axes_[d].periodic && (mi[d] == 0 || mi[d] == axes_[d].count - 1))
      return true;
  return false;
}

double ParamDomain::quad_weight(std::size_t flat) const {
  return quad_weight_excluding(flat, -1);
}

double ParamDomain::quad_weight_excluding(std::size_t flat, int skip_axis) const {
  int mi[8];
  unflatten(flat, mi);
  double w = 1.0;
  for (std::size_t d = 0; d < axes_.size(); ++d) {
    if (static_cast<int>(d) == skip_axis) continue;
    double h = spacing(static_cast<int>(d));
    if (!axes_[d].periodic && (mi[d] == 0 || mi[d] == axes_[d].count - 1))
      w *= 0.5 * h;
    else
      w *= h;
  }
  return w;
}

bool ParamDomain::same_grid(const ParamDomain& other) const {
  if (axes_.size() != other.axes_.size()) return false;
  for (std::size_t d = 0; d < axes_.size(); ++d) {
    const auto& a = axes_[d];
    const auto& b = other.axes_[d];
    if (a.count != b.count || a.periodic != b.periodic || a.lo != b.lo || a.hi != b.hi)
      return false;
  }
  return true;
}

std::vector<std::string> ParamDomain::axis_names() const {
  std::vector<std::string> names;
  names.reserve(axes_.size());
  for (const auto& a : axes_) names.push_back(a.name);
  return names;
}

}  // namespace sheetspace
