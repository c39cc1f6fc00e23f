#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "sheetspace/expression.hpp"

namespace sheetspace {

// Differential form on a chart with named coordinates: a sum of terms
// coeff(y) * dy^{i1} ^ ... ^ dy^{id}. Evaluation contracts against vectors;
// the exterior derivative differentiates coefficients by central differences.
class ChartForm {
 public:
  struct Term {
    Expression coeff;
    Expression::Compiled compiled;
    std::vector<int> idx;  // strictly increasing coordinate indices
  };

  ChartForm(std::vector<std::string> coords, int degree);

  // term given by a coefficient expression and wedge coordinate names
  void add_term(const std::string& coeff_src, const std::vector<std::string>& wedge);

  int degree() const { return degree_; }
  int chart_dim() const { return static_cast<int>(coords_.size()); }
  const std::vector<std::string>& coords() const { return coords_; }
  const std::vector<Term>& terms() const { return terms_; }

  // value on `degree` vectors at y
  double value(const double* y, std::span<const Eigen::VectorXd> vecs) const;

  // exterior derivative evaluated on `degree`+1 vectors at y, with
  // coefficient derivatives by central differences of step h
  double d_value(const double* y, std::span<const Eigen::VectorXd> vecs, double h) const;

 private:
  std::vector<std::string> coords_;
  int degree_;
  std::vector<Term> terms_;
};

}  // namespace sheetspace
