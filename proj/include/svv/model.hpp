#pragma once

#include <cmath>
#include <memory>
#include <sstream>
#include <string>

#include "svv/drift.hpp"
#include "svv/errors.hpp"
#include "svv/kernel.hpp"
#include "svv/time_grid.hpp"

namespace svv {

struct ModelChecks {
  // The roughness compatibility check gamma > 1/H - 1 guarantees that barrier
  // repulsion beats the noise; switching it off is a diagnostic mode in which
  // the continuous-time bounds are no longer certified (the discrete scheme
  // still keeps every iterate strictly inside the band).
  bool enforce_roughness_compat = true;
};

// Immutable simulation setup: kernel, band, drift, spot dynamics, grid, plus
// the precomputed cell weights.  Build through make_model so every instance is
// validated and carries its weight table.
struct SandwichModel {
  KernelSpec kernel;
  BoundFunctions bounds;
  SandwichDrift drift;
  double y0 = 0.5;
  double x0 = 0.0;   // initial log price
  double r = 0.0;    // risk-free rate
  double rho = 0.0;  // spot-vol correlation
  TimeGrid grid;
  std::shared_ptr<const WeightTable> weights;
};

namespace detail {

inline void check_positive_on_grid(const TimeFn& f, const TimeGrid& grid, const char* name) {
  for (std::size_t i = 0; i <= grid.n; ++i)
    if (!(f(grid.node(i)) > 0.0)) {
      std::ostringstream os;
      os << name << " must stay strictly positive on the grid; fails at t = " << grid.node(i);
      throw ValidationError(name, os.str());
    }
}

}  // namespace detail

inline void validate_model(const SandwichModel& m, const ModelChecks& checks = {}) {
  m.kernel.validate();
  if (!std::isfinite(m.y0)) throw ValidationError("y0", "must be finite");
  if (!std::isfinite(m.x0)) throw ValidationError("x0", "must be finite");
  if (!std::isfinite(m.r)) throw ValidationError("r", "must be finite");
  if (!std::isfinite(m.rho) || std::abs(m.rho) >= 1.0)
    throw ValidationError("rho", "correlation must lie in (-1, 1)");

  const double H = m.kernel.effective_H;
  for (std::size_t i = 0; i <= m.grid.n; ++i) {
    const double t = m.grid.node(i);
    const double lo = m.bounds.phi(t), hi = m.bounds.psi(t);
    if (!(lo > 0.0)) {
      std::ostringstream os;
      os << "lower bound must stay strictly positive; fails at t = " << t;
      throw ValidationError("bounds.phi", os.str());
    }
    if (!(hi > lo)) {
      std::ostringstream os;
      os << "upper bound must stay strictly above the lower bound; fails at t = " << t;
      throw ValidationError("bounds.psi", os.str());
    }
  }

  const bool lower = m.drift.lower_enabled(), upper = m.drift.upper_enabled();
  if (lower && !(m.y0 > m.bounds.phi(0.0)))
    throw ValidationError("y0", "must start strictly above the lower bound");
  if (upper && !(m.y0 < m.bounds.psi(0.0)))
    throw ValidationError("y0", "must start strictly below the upper bound");
  if (!lower && !(m.y0 > 0.0))
    throw ValidationError("y0", "must be positive when the lower barrier is disabled");

  const auto check_side = [&](bool enabled, const TimeFn& theta, double gamma, const char* tname,
                              const char* gname) {
    if (!enabled) return;
    detail::check_positive_on_grid(theta, m.grid, tname);
    if (!(gamma > 0.0)) throw ValidationError(gname, "must be positive");
    if (checks.enforce_roughness_compat) {
      const double need = 1.0 / H - 1.0;
      if (!(gamma > need)) {
        std::ostringstream os;
        os << "(B1) requires " << gname << " > 1/H - 1 = " << need << "; got " << gamma;
        throw ValidationError(gname, os.str());
      }
    }
  };
  check_side(lower, m.drift.theta1, m.drift.gamma1, "drift.theta1", "drift.gamma1");
  check_side(upper, m.drift.theta2, m.drift.gamma2, "drift.theta2", "drift.gamma2");

  // Monotonicity gate for the implicit step: dt * sup a_y < 1 keeps the
  // residual strictly increasing, so the per-step root is unique.
  const double slope = m.drift.a.slope();
  if (slope > 0.0 && m.grid.dt() * slope >= 1.0)
    throw ValidationError("drift.a",
                          "dt * slope >= 1 breaks implicit-step monotonicity; refine the grid");
}

inline SandwichModel make_model(KernelSpec kernel, BoundFunctions bounds, SandwichDrift drift,
                                double y0, double x0, double r, double rho, TimeGrid grid,
                                const ModelChecks& checks = {}) {
  SandwichModel m;
  m.kernel = std::move(kernel);
  m.bounds = bounds;
  m.drift = drift;
  m.y0 = y0;
  m.x0 = x0;
  m.r = r;
  m.rho = rho;
  m.grid = grid;
  validate_model(m, checks);
  m.weights = std::make_shared<const WeightTable>(build_weight_table(m.kernel, m.grid));
  return m;
}

// Same model on a different horizon/resolution; revalidates and rebuilds weights.
inline SandwichModel retarget_model(const SandwichModel& m, double T, std::size_t n,
                                    const ModelChecks& checks = {}) {
  return make_model(m.kernel, m.bounds, m.drift, m.y0, m.x0, m.r, m.rho, TimeGrid(T, n), checks);
}

}  // namespace svv
