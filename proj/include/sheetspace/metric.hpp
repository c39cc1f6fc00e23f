#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sheetspace/expression.hpp"

namespace sheetspace {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Chart-based pseudo-Riemannian structure on an open box of R^n, with the
// standard chart orientation dx^0 ^ ... ^ dx^{n-1}. Signature is the pair
// (negative count, positive count) of metric eigenvalues. Immutable; all
// evaluation is reentrant.
class MetricSpace {
 public:
  enum class Kind { euclidean, minkowski, conformal, custom };

  static MetricSpace euclidean(int n);
  // signature (1, n-1), time coordinate x0
  static MetricSpace minkowski(int n);
  // g = factor(x)^2 * base; lengths scale by |factor|
  static MetricSpace conformal(const std::string& factor_src, MetricSpace base);
  static MetricSpace custom(int n, const std::vector<std::vector<std::string>>& entries,
                            std::pair<int, int> signature);

  int dim() const { return n_; }
  Kind kind() const { return kind_; }
  std::pair<int, int> signature() const { return signature_; }

  // Finite-difference step for chart derivatives of g used downstream.
  double fd_step() const { return fd_step_; }
  void set_fd_step(double h) { fd_step_ = h; }

  // Chart box used when sampling random points (checks, validation).
  const std::vector<std::pair<double, double>>& box() const { return box_; }
  void set_box(std::vector<std::pair<double, double>> b);

  void metric_at(const double* x, Eigen::MatrixXd& g) const;
  Eigen::MatrixXd metric_at(const double* x) const;
  // row-major n*n caller buffer; allocation-free for the flow kernels
  void metric_at_raw(const double* x, double* g) const;

  // Inverse metric and |det g|; throws on near-degeneracy (|det| <= 1e-12).
  void inverse_metric_at(const double* x, Eigen::MatrixXd& ginv) const;
  double abs_det_at(const double* x) const;
  double sqrt_abs_det_at(const double* x) const;

  // v^T g(x) w, accumulated in fixed index order.
  double inner(const double* x, const double* v, const double* w) const;
  double inner(const double* x, const Eigen::VectorXd& v,
               const Eigen::VectorXd& w) const;

  // Volume form on n vectors: sqrt|det g(x)| * det[v_0 ... v_{n-1}].
  double volume_form(const double* x, std::span<const Eigen::VectorXd> vecs) const;

  // Checks the eigenvalue sign count at x against the declared signature.
  void check_signature_at(const double* x) const;

  const std::vector<std::string>& coord_names() const { return coord_names_; }

 private:
  MetricSpace(int n, Kind kind);

  int n_;
  Kind kind_;
  std::pair<int, int> signature_;  // (negative, positive)
  double fd_step_ = 1e-5;
  std::vector<std::pair<double, double>> box_;
  std::vector<std::string> coord_names_;

  // conformal
  std::optional<Expression> factor_;
  std::optional<Expression::Compiled> factor_c_;
  std::unique_ptr<MetricSpace> base_;

  // custom: row-major upper triangle incl. diagonal
  std::vector<Expression> entries_;
  std::vector<Expression::Compiled> entries_c_;
};

}  // namespace sheetspace
