#pragma once

#include <string>
#include <vector>

#include "sheetspace/sheet.hpp"

namespace sheetspace {

struct FlowConfig {
  double eta = 0.1;       // step size; with backtracking, the largest tried
  int max_steps = 1000;
  double tol = 1e-4;      // stop when the gradient h-norm drops below this
  bool backtracking = true;
  int log_every = 10;
  double fd_step = 1e-4;  // nodal finite-difference step for the gradient

  void validate() const;
};

struct FlowStep {
  int step = 0;
  double area = 0.0;
  double grad_norm = 0.0;
  double eta = 0.0;
};

struct FlowResult {
  DiscreteSheet sheet;
  std::vector<FlowStep> log;
  bool converged = false;
  int steps = 0;
};

double area(const DiscreteSheet& s);

// Riesz representative of the area differential in the L2 metric: nodal
// derivatives by central differences of the area under single-vertex moves
// (only the stencil whose density changes is revalued), divided by the lumped
// mass W_p * dvol_p. Zero on the boundary.
NormalField h_gradient_area(const DiscreteSheet& s, double fd_step = 1e-4);

// Steepest descent with optional backtracking line search (halve on area
// increase, grow gently after accepted steps, never beyond cfg.eta).
FlowResult gradient_descent(const DiscreteSheet& s, const FlowConfig& cfg);

}  // namespace sheetspace
