#include "sheetspace/random_fields.hpp"

#include <cmath>

namespace sheetspace {

std::uint64_t trial_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 step over (master, index)
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

// One Jacobi pass: average with the grid neighbors that exist.
void jacobi_pass(const ParamDomain& dom, std::vector<double>& c) {
  const std::size_t nv = dom.vertex_count();
  std::vector<double> out(nv);
  for (std::size_t p = 0; p < nv; ++p) {
    double sum = c[p];
    int cnt = 1;
    for (int d = 0; d < dom.dim(); ++d)
      for (int step : {-1, +1}) {
        std::size_t q = dom.neighbor(p, d, step);
        if (q != ParamDomain::npos) {
          sum += c[q];
          ++cnt;
        }
      }
    out[p] = sum / cnt;
  }
  c = std::move(out);
}

}  // namespace

NormalField random_normal_field(const DiscreteSheet& s, std::uint64_t seed) {
  const std::size_t nv = s.vertex_count();
  const ParamDomain& dom = s.domain;
  NormalDeviates rng(seed);

  std::vector<double> ca(nv), cb(nv);
  for (std::size_t p = 0; p < nv; ++p) {
    ca[p] = rng.next();
    cb[p] = rng.next();
  }
  jacobi_pass(dom, ca);
  jacobi_pass(dom, ca);
  jacobi_pass(dom, cb);
  jacobi_pass(dom, cb);

  NormalField v = zero_field(s, true);
  for (std::size_t p = 0; p < nv; ++p) {
    double bump = 1.0;
    double sp[8];
    dom.param_at(p, sp);
    for (int d = 0; d < dom.dim(); ++d) {
      const auto& ax = dom.axis(d);
      if (!ax.periodic)
        bump *= std::sin(M_PI * (sp[d] - ax.lo) / (ax.hi - ax.lo));
    }
    const double* f1 = s.frame.at(p, 0);
    const double* f2 = s.frame.at(p, 1);
    double* o = v.at(p);
    for (int i = 0; i < s.n; ++i) o[i] = bump * (ca[p] * f1[i] + cb[p] * f2[i]);
  }
  // the bump vanishes only to rounding at the far end; pin boundary values
  for (std::size_t p = 0; p < nv; ++p)
    if (s.boundary[p])
      for (int i = 0; i < s.n; ++i) v.at(p)[i] = 0.0;
  return v;
}


NormalField smooth_normal_field(const DiscreteSheet& s, std::uint64_t seed) {
  static const double kPi = 3.14159265358979323846;
  NormalDeviates rng(seed);
  const int n = s.n;
  const int k = s.domain.dim();
  // per ambient coordinate: constant plus two harmonics per parameter axis
  std::vector<double> coef(static_cast<std::size_t>(n * (1 + 4 * k)));
  for (double& c : coef) c = rng.next();

  const std::size_t nv = s.vertex_count();
  std::vector<double> amb(nv * static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < nv; ++p) {
    double sp[8];
    s.domain.param_at(p, sp);
    for (int i = 0; i < n; ++i) {
      const double* c = coef.data() + static_cast<std::size_t>(i * (1 + 4 * k));
      double val = c[0];
      for (int d = 0; d < k; ++d) {
        const auto& ax = s.domain.axis(d);
        const double th = 2 * kPi * (sp[d] - ax.lo) / (ax.hi - ax.lo);
        val += c[1 + 4 * d] * std::cos(th) + c[2 + 4 * d] * std::sin(th) +
               0.5 * (c[3 + 4 * d] * std::cos(2 * th) + c[4 + 4 * d] * std::sin(2 * th));
      }
      amb[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = 0.3 * val;
    }
  }
  NormalField v = project_normal(s, amb);
  for (std::size_t p = 0; p < nv; ++p) {
    double sp[8];
    s.domain.param_at(p, sp);
    double bump = 1.0;
    for (int d = 0; d < k; ++d) {
      const auto& ax = s.domain.axis(d);
      if (!ax.periodic) bump *= std::sin(kPi * (sp[d] - ax.lo) / (ax.hi - ax.lo));
    }
    for (int i = 0; i < n; ++i) v.at(p)[i] *= bump;
  }
  v.boundary_zero = true;
  for (std::size_t p = 0; p < nv; ++p)
    if (s.boundary[p])
      for (int i = 0; i < n; ++i) v.at(p)[i] = 0.0;
  return v;
}

}  // namespace sheetspace

