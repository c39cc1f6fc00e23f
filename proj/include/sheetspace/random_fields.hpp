#pragma once

#include <cstdint>
#include <random>

#include "sheetspace/sheet.hpp"

namespace sheetspace {

// Deterministic normal deviates: mt19937_64 stream (output fixed by the
// standard) plus Box-Muller, so sequences depend only on the seed.
class NormalDeviates {
 public:
  explicit NormalDeviates(std::uint64_t seed) : gen_(seed) {}

  double uniform() {  // in (0, 1]
    return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double next() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

// Smooth random boundary-zero normal field: per-vertex frame coefficients
// drawn from the seeded stream, two Jacobi averaging passes, then a boundary
// bump (product of sin(pi * normalized parameter) over non-periodic axes).
NormalField random_normal_field(const DiscreteSheet& s, std::uint64_t seed);

// Band-limited random field: a seeded low-frequency ambient function of the
// parameters, projected to the normal plane and bumped to zero on the
// boundary. The continuum field depends only on the seed, not the grid, so
// residuals of the same field can be compared across refinements. Used by
// the finite-difference sweep checks, where per-vertex noise would swamp the
// slope with grid error.
NormalField smooth_normal_field(const DiscreteSheet& s, std::uint64_t seed);

// Seed for trial `index` of a battery run under `master`.
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t index);

}  // namespace sheetspace
