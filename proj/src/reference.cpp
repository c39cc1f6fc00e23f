#include "sheetspace/reference.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace sheetspace::reference {

double integrate(const DiscreteSheet& s, std::span<const double> field) {
  double acc = 0.0;
  for (std::size_t p = 0; p < s.vertex_count(); ++p)
    acc += s.weights[p] * s.dvol[p] * field[p];
  return acc;
}

double sheet_area(const DiscreteSheet& s) {
  double acc = 0.0;
  for (std::size_t p = 0; p < s.vertex_count(); ++p) acc += s.weights[p] * s.dvol[p];
  return acc;
}

NormalField h_gradient_area(const DiscreteSheet& s, double fd_step) {
  const int n = s.n;
  NormalField grad = zero_field(s, true);
  std::vector<double> xs = s.vertices;
  auto total_area = [&]() {
    double acc = 0.0;
    for (std::size_t q = 0; q < s.vertex_count(); ++q)
      acc += s.weights[q] * dvol_at(*s.metric, s.domain, xs, n, q);
    return acc;
  };
  for (std::size_t p = 0; p < s.vertex_count(); ++p) {
    if (s.boundary[p]) continue;
    const double mass = s.weights[p] * s.dvol[p];
    double coeff[2];
    for (int a = 0; a < 2; ++a) {
      const double* fa = s.frame.at(p, a);
      double saved[8];
      for (int i = 0; i < n; ++i) saved[i] = xs[p * n + i];
      for (int i = 0; i < n; ++i) xs[p * n + i] = saved[i] + fd_step * fa[i];
      const double ap = total_area();
      for (int i = 0; i < n; ++i) xs[p * n + i] = saved[i] - fd_step * fa[i];
      const double am = total_area();
      for (int i = 0; i < n; ++i) xs[p * n + i] = saved[i];
      coeff[a] = (ap - am) / (2.0 * fd_step) / mass;
    }
    double* o = grad.at(p);
    const double* f1 = s.frame.at(p, 0);
    const double* f2 = s.frame.at(p, 1);
    for (int i = 0; i < n; ++i) o[i] = coeff[0] * f1[i] + coeff[1] * f2[i];
  }
  return grad;
}

NormalField project_normal(const DiscreteSheet& s, std::span<const double> ambient) {
  const int n = s.n;
  NormalField out = zero_field(s, false);
  Eigen::MatrixXd g;
  for (std::size_t p = 0; p < s.vertex_count(); ++p) {
    s.metric->metric_at(s.vertex(p), g);
    Eigen::Map<const Eigen::VectorXd> w(ambient.data() + p * static_cast<std::size_t>(n), n);
    Eigen::Map<const Eigen::VectorXd> f1(s.frame.at(p, 0), n), f2(s.frame.at(p, 1), n);
    const double a = s.frame.sigma * (w.transpose() * g * f1)(0, 0);
    const double b = s.frame.sigma * (w.transpose() * g * f2)(0, 0);
    for (int i = 0; i < n; ++i) out.at(p)[i] = a * f1(i) + b * f2(i);
  }
  return out;
}

}  // namespace sheetspace::reference
