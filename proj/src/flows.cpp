#include "sheetspace/flows.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "sheetspace/kaehler.hpp"

namespace sheetspace {

void FlowConfig::validate() const {
  if (!(eta > 0.0) || eta > 1.0) throw std::invalid_argument("flow step must be in (0, 1]");
  if (max_steps < 0 || max_steps > 100000)
    throw std::invalid_argument("flow step count must be at most 1e5");
  if (!(tol >= 0.0)) throw std::invalid_argument("flow tolerance must be nonnegative");
  if (log_every < 1) throw std::invalid_argument("log cadence must be positive");
}

double area(const DiscreteSheet& s) { return sheet_area(s); }

NormalField h_gradient_area(const DiscreteSheet& s, double fd_step) {
  const int n = s.n;
  const int k = s.k();
  const std::size_t nv = s.vertex_count();
  NormalField grad = zero_field(s, true);

  // stencil of vertices whose density can change when vertex p moves:
  // within two grid steps along every axis (one-sided boundary stencils
  // reach that far)
  auto stencil_of = [&](std::size_t p, std::vector<std::size_t>& out) {
    out.clear();
    int mi[8], mj[8];
    s.domain.unflatten(p, mi);
    const int r = 2;
    if (k == 1) {
      for (int d0 = -r; d0 <= r; ++d0) {
        mj[0] = mi[0] + d0;
        const auto& ax = s.domain.axis(0);
        if (ax.periodic) {
          mj[0] = (mj[0] % ax.count + ax.count) % ax.count;
        } else if (mj[0] < 0 || mj[0] >= ax.count) {
          continue;
        }
        out.push_back(s.domain.flatten(mj));
      }
    } else {
      for (int d0 = -r; d0 <= r; ++d0)
        for (int d1 = -r; d1 <= r; ++d1) {
          int off[2] = {d0, d1};
          bool ok = true;
          for (int d = 0; d < 2; ++d) {
            mj[d] = mi[d] + off[d];
            const auto& ax = s.domain.axis(d);
            if (ax.periodic)
              mj[d] = (mj[d] % ax.count + ax.count) % ax.count;
            else if (mj[d] < 0 || mj[d] >= ax.count)
              ok = false;
          }
          if (ok) out.push_back(s.domain.flatten(mj));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  };

  std::vector<std::uint8_t> bad(nv, 0);
#pragma omp parallel
  {
    std::vector<double> xs = s.vertices;  // per-thread scratch configuration
    std::vector<std::size_t> stencil;
    stencil.reserve(32);
#pragma omp for schedule(static)
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(nv); ++pp) {
      const std::size_t p = static_cast<std::size_t>(pp);
      if (s.boundary[p]) continue;
      const double mass = s.weights[p] * s.dvol[p];
      if (mass <= 0.0 || !std::isfinite(mass)) {
        bad[p] = 1;
        continue;
      }
      stencil_of(p, stencil);
      double coeff[2];
      for (int a = 0; a < 2; ++a) {
        const double* fa = s.frame.at(p, a);
        double saved[8];
        for (int i = 0; i < n; ++i) saved[i] = xs[p * n + i];
        auto local_area = [&]() {
          double acc = 0.0;
          for (std::size_t q : stencil)
            acc += s.weights[q] * dvol_at(*s.metric, s.domain, xs, n, q);
          return acc;
        };
        for (int i = 0; i < n; ++i) xs[p * n + i] = saved[i] + fd_step * fa[i];
        const double ap = local_area();
        for (int i = 0; i < n; ++i) xs[p * n + i] = saved[i] - fd_step * fa[i];
        const double am = local_area();
        for (int i = 0; i < n; ++i) xs[p * n + i] = saved[i];
        coeff[a] = (ap - am) / (2.0 * fd_step) / mass;
      }
      double* o = grad.at(p);
      const double* f1 = s.frame.at(p, 0);
      const double* f2 = s.frame.at(p, 1);
      for (int i = 0; i < n; ++i) o[i] = coeff[0] * f1[i] + coeff[1] * f2[i];
    }
  }
  for (std::size_t p = 0; p < nv; ++p)
    if (bad[p])
      throw SheetError("lumped mass is singular at vertex " + std::to_string(p), p);
  return grad;
}

FlowResult gradient_descent(const DiscreteSheet& s, const FlowConfig& cfg) {
  cfg.validate();
  FlowResult res;
  res.sheet = s;
  double cur_area = area(res.sheet);
  double eta = cfg.eta;

  for (int step = 0;; ++step) {
    NormalField grad = h_gradient_area(res.sheet, cfg.fd_step);
    const double gnorm = std::sqrt(std::max(0.0, metric_h(res.sheet, grad, grad)));
    if (step % cfg.log_every == 0 || gnorm < cfg.tol || step == cfg.max_steps)
      res.log.push_back({step, cur_area, gnorm, eta});
    res.steps = step;
    if (gnorm < cfg.tol) {
      res.converged = true;
      return res;
    }
    if (step == cfg.max_steps) return res;

    if (cfg.backtracking) {
      eta = std::min(eta * 1.5, cfg.eta);
      bool accepted = false;
      while (eta > 1e-14) {
        try {
          DiscreteSheet cand = perturb(res.sheet, grad, -eta);
          const double cand_area = area(cand);
          if (cand_area <= cur_area) {
            res.sheet = std::move(cand);
            cur_area = cand_area;
            accepted = true;
            break;
          }
        } catch (const SheetError&) {
          // step left the space of valid sheets; shorten it
        }
        eta *= 0.5;
      }
      if (!accepted) return res;  // no descent direction at this resolution
    } else {
      try {
        res.sheet = perturb(res.sheet, grad, -eta);
      } catch (const SheetError& e) {
        throw SheetError("flow violated the world-sheet condition at step " +
                             std::to_string(step) + ": " + e.what(),
                         e.vertex());
      }
      cur_area = area(res.sheet);
    }
  }
}

}  // namespace sheetspace
