#include "sheetspace/metric.hpp"

#include <cmath>

namespace sheetspace {

namespace {
std::vector<std::string> chart_names(int n) {
  std::vector<std::string> names(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) names[static_cast<std::size_t>(i)] = "x" + std::to_string(i);
  return names;
}
}  // namespace

MetricSpace::MetricSpace(int n, Kind kind) : n_(n), kind_(kind) {
  if (n < 3) throw MetricError("ambient dimension must be at least 3");
  coord_names_ = chart_names(n);
  box_.assign(static_cast<std::size_t>(n), {-1.0, 1.0});
}

void MetricSpace::set_box(std::vector<std::pair<double, double>> b) {
  if (static_cast<int>(b.size()) != n_)
    throw MetricError("chart box must have one interval per dimension");
  for (auto& [lo, hi] : b)
    if (!(lo < hi)) throw MetricError("chart box intervals must be nonempty");
  box_ = std::move(b);
}

MetricSpace MetricSpace::euclidean(int n) {
  MetricSpace m(n, Kind::euclidean);
  m.signature_ = {0, n};
  return m;
}

MetricSpace MetricSpace::minkowski(int n) {
  MetricSpace m(n, Kind::minkowski);
  m.signature_ = {1, n - 1};
  return m;
}

MetricSpace MetricSpace::conformal(const std::string& factor_src, MetricSpace base) {
  MetricSpace m(base.dim(), Kind::conformal);
  m.signature_ = base.signature_;
  m.box_ = base.box_;
  m.factor_ = Expression::parse(factor_src);
  m.factor_c_ = m.factor_->compile(m.coord_names_);
  m.base_ = std::make_unique<MetricSpace>(std::move(base));
  return m;
}

MetricSpace MetricSpace::custom(int n, const std::vector<std::vector<std::string>>& entries,
                                std::pair<int, int> signature) {
  MetricSpace m(n, Kind::custom);
  m.signature_ = signature;
  if (signature.first + signature.second != n)
    throw MetricError("signature counts must add up to the dimension");
  if (static_cast<int>(entries.size()) != n)
    throw MetricError("metric entry matrix must be n x n");
  std::vector<Expression> parsed;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(entries[static_cast<std::size_t>(i)].size()) != n)
      throw MetricError("metric entry matrix must be n x n");
    for (int j = 0; j < n; ++j)
      parsed.push_back(Expression::parse(entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
  }
  // symmetry must hold structurally, not just numerically
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!parsed[static_cast<std::size_t>(i * n + j)].same_structure(
              parsed[static_cast<std::size_t>(j * n + i)]))
        throw MetricError("metric entries [" + std::to_string(i) + "][" + std::to_string(j) +
                          "] and [" + std::to_string(j) + "][" + std::to_string(i) +
                          "] are not structurally equal");
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      m.entries_.push_back(parsed[static_cast<std::size_t>(i * n + j)]);
      m.entries_c_.push_back(m.entries_.back().compile(m.coord_names_));
    }
  return m;
}

void MetricSpace::metric_at(const double* x, Eigen::MatrixXd& g) const {
  g.resize(n_, n_);
  switch (kind_) {
    case Kind::euclidean:
      g.setIdentity();
      break;
    case Kind::minkowski:
      g.setIdentity();
      g(0, 0) = -1.0;
      break;
    case Kind::conformal: {
      base_->metric_at(x, g);
      double f = factor_c_->eval(x);
      g *= f * f;
      break;
    }
    case Kind::custom: {
      std::size_t k = 0;
      for (int i = 0; i < n_; ++i)
        for (int j = i; j < n_; ++j) {
          double v = entries_c_[k++].eval(x);
          g(i, j) = v;
          g(j, i) = v;
        }
      break;
    }
  }
}


void MetricSpace::metric_at_raw(const double* x, double* g) const {
  const int n = n_;
  switch (kind_) {
    case Kind::euclidean:
      for (int i = 0; i < n * n; ++i) g[i] = 0.0;
      for (int i = 0; i < n; ++i) g[i * n + i] = 1.0;
      break;
    case Kind::minkowski:
      for (int i = 0; i < n * n; ++i) g[i] = 0.0;
      g[0] = -1.0;
      for (int i = 1; i < n; ++i) g[i * n + i] = 1.0;
      break;
    case Kind::conformal: {
      base_->metric_at_raw(x, g);
      const double f = factor_c_->eval(x);
      const double f2 = f * f;
      for (int i = 0; i < n * n; ++i) g[i] *= f2;
      break;
    }
    case Kind::custom: {
      std::size_t k = 0;
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          const double v = entries_c_[k++].eval(x);
          g[i * n + j] = v;
          g[j * n + i] = v;
        }
      break;
    }
  }
}

Eigen::MatrixXd MetricSpace::metric_at(const double* x) const {
  Eigen::MatrixXd g;
  metric_at(x, g);
  return g;
}

double MetricSpace::abs_det_at(const double* x) const {
  Eigen::MatrixXd g;
  metric_at(x, g);
  double det = g.determinant();
  if (std::fabs(det) <= 1e-12)
    throw MetricError("metric degenerate at sampled point (|det g| <= 1e-12)");
  return std::fabs(det);
}

double MetricSpace::sqrt_abs_det_at(const double* x) const {
  return std::sqrt(abs_det_at(x));
}

void MetricSpace::inverse_metric_at(const double* x, Eigen::MatrixXd& ginv) const {
  Eigen::MatrixXd g;
  metric_at(x, g);
  double det = g.determinant();
  if (std::fabs(det) <= 1e-12)
    throw MetricError("metric degenerate at sampled point (|det g| <= 1e-12)");
  ginv = g.inverse();
}

double MetricSpace::inner(const double* x, const double* v, const double* w) const {
  Eigen::MatrixXd g;
  metric_at(x, g);
  double s = 0.0;
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) s += v[i] * g(i, j) * w[j];
  return s;
}

double MetricSpace::inner(const double* x, const Eigen::VectorXd& v,
                          const Eigen::VectorXd& w) const {
  return inner(x, v.data(), w.data());
}

double MetricSpace::volume_form(const double* x,
                                std::span<const Eigen::VectorXd> vecs) const {
  if (static_cast<int>(vecs.size()) != n_)
    throw MetricError("volume form takes exactly n vectors");
  Eigen::MatrixXd m(n_, n_);
  for (int j = 0; j < n_; ++j) m.col(j) = vecs[static_cast<std::size_t>(j)];
  return sqrt_abs_det_at(x) * m.determinant();
}

void MetricSpace::check_signature_at(const double* x) const {
  Eigen::MatrixXd g;
  metric_at(x, g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  int neg = 0, pos = 0;
  for (int i = 0; i < n_; ++i) {
    double ev = es.eigenvalues()(i);
    if (ev < -1e-12) ++neg;
    else if (ev > 1e-12) ++pos;
  }
  if (neg != signature_.first || pos != signature_.second)
    throw MetricError("metric signature at sampled point is (" + std::to_string(neg) + "," +
                      std::to_string(pos) + "), declared (" +
                      std::to_string(signature_.first) + "," +
                      std::to_string(signature_.second) + ")");
}

}  // namespace sheetspace
