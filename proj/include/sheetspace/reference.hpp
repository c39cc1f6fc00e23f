#pragma once

#include "sheetspace/sheet.hpp"

namespace sheetspace::reference {

// Serial reference kernels: straightforward loops kept for testing the
// OpenMP paths and for the benchmark comparison.

double integrate(const DiscreteSheet& s, std::span<const double> field);
double sheet_area(const DiscreteSheet& s);

// Full-revaluation nodal gradient: every nodal derivative recomputes the
// whole area (quadratic cost); the production kernel revalues only the
// affected stencil.
NormalField h_gradient_area(const DiscreteSheet& s, double fd_step = 1e-4);

NormalField project_normal(const DiscreteSheet& s, std::span<const double> ambient);

}  // namespace sheetspace::reference
