#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "svv/errors.hpp"

namespace svv {

// Uniform grid t_i = i*dt, i = 0..n, on [0, T].
struct TimeGrid {
  double T = 1.0;
  std::size_t n = 2;

  TimeGrid() = default;
  TimeGrid(double horizon, std::size_t steps) : T(horizon), n(steps) {
    if (!std::isfinite(T) || T <= 0.0)
      throw InvalidArgument("TimeGrid: horizon must be positive and finite");
    if (n < 2) throw InvalidArgument("TimeGrid: need at least 2 steps");
  }

  double dt() const { return T / static_cast<double>(n); }
  double node(std::size_t i) const { return static_cast<double>(i) * dt(); }

  // Index of the node closest to t; throws if t does not sit on the grid.
  std::size_t node_index(double t, double tol = 1e-9) const {
    const double x = t / dt();
    const double r = std::round(x);
    if (std::abs(x - r) > tol * std::max(1.0, std::abs(x)) || r < 0.0 ||
        r > static_cast<double>(n))
      throw InvalidArgument("time " + std::to_string(t) + " is not a grid node");
    return static_cast<std::size_t>(r);
  }

  bool same(const TimeGrid& o) const { return n == o.n && T == o.T; }
};

}  // namespace svv
