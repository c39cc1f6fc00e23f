#include "sheetspace/chart_forms.hpp"

#include <algorithm>
#include <stdexcept>

namespace sheetspace {

ChartForm::ChartForm(std::vector<std::string> coords, int degree)
    : coords_(std::move(coords)), degree_(degree) {
  if (degree_ < 0 || degree_ > chart_dim())
    throw std::invalid_argument("form degree out of range");
}

void ChartForm::add_term(const std::string& coeff_src,
                         const std::vector<std::string>& wedge) {
  if (static_cast<int>(wedge.size()) != degree_)
    throw std::invalid_argument("term must wedge exactly " + std::to_string(degree_) +
                                " coordinates");
  Term t{Expression::parse(coeff_src), {}, {}};
  t.compiled = t.coeff.compile(coords_);
  for (const auto& name : wedge) {
    auto it = std::find(coords_.begin(), coords_.end(), name);
    if (it == coords_.end())
      throw std::invalid_argument("unknown chart coordinate '" + name + "'");
    t.idx.push_back(static_cast<int>(it - coords_.begin()));
  }
  for (std::size_t i = 0; i + 1 < t.idx.size(); ++i)
    if (t.idx[i] >= t.idx[i + 1])
      throw std::invalid_argument("wedge coordinates must be distinct and increasing");
  terms_.push_back(std::move(t));
}

double ChartForm::value(const double* y, std::span<const Eigen::VectorXd> vecs) const {
  if (static_cast<int>(vecs.size()) != degree_)
    throw std::invalid_argument("form takes exactly `degree` vectors");
  double total = 0.0;
  Eigen::MatrixXd m(degree_, degree_);
  for (const auto& t : terms_) {
    for (int r = 0; r < degree_; ++r)
      for (int c = 0; c < degree_; ++c)
        m(r, c) = vecs[static_cast<std::size_t>(c)](t.idx[static_cast<std::size_t>(r)]);
    total += t.compiled.eval(y) * m.determinant();
  }
  return total;
}

double ChartForm::d_value(const double* y, std::span<const Eigen::VectorXd> vecs,
                          double h) const {
  if (static_cast<int>(vecs.size()) != degree_ + 1)
    throw std::invalid_argument("exterior derivative takes `degree`+1 vectors");
  const int dim = chart_dim();
  const int dd = degree_ + 1;
  double total = 0.0;
  Eigen::MatrixXd m(dd, dd);
  std::vector<double> yp(y, y + dim);
  for (const auto& t : terms_) {
    for (int j = 0; j < dim; ++j) {
      if (std::find(t.idx.begin(), t.idx.end(), j) != t.idx.end()) continue;
      yp[static_cast<std::size_t>(j)] = y[j] + h;
      const double cp = t.compiled.eval(yp.data());
      yp[static_cast<std::size_t>(j)] = y[j] - h;
      const double cm = t.compiled.eval(yp.data());
      yp[static_cast<std::size_t>(j)] = y[j];
      const double dc = (cp - cm) / (2.0 * h);
      if (dc == 0.0) continue;
      // wedge dy^j ^ dy^I evaluated on the given vectors
      for (int c = 0; c < dd; ++c) {
        m(0, c) = vecs[static_cast<std::size_t>(c)](j);
        for (int r = 0; r < degree_; ++r)
          m(r + 1, c) = vecs[static_cast<std::size_t>(c)](t.idx[static_cast<std::size_t>(r)]);
      }
      total += dc * m.determinant();
    }
  }
  return total;
}

}  // namespace sheetspace
