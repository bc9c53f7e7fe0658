#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "svv/errors.hpp"
#include "svv/model.hpp"
#include "svv/rng.hpp"

namespace svv {

// One drift-implicit Euler update: the unique root y of
//   g(y) = y - dt * b(t_next, y) - (y_prev + dz)
// inside the open band at t_next.  g is strictly increasing there (barrier
// terms have negative y-slope and the regular slope is gated at model build),
// so bisection on a sign-changing bracket converges unconditionally; one
// Newton step at the end polishes the midpoint.
inline double implicit_step(const SandwichDrift& drift, const BoundFunctions& bounds,
                            double t_next, double y_prev, double dt, double dz) {
  const bool lower = drift.lower_enabled(), upper = drift.upper_enabled();
  const double band_lo = lower ? bounds.phi(t_next) : -std::numeric_limits<double>::infinity();
  const double band_hi = upper ? bounds.psi(t_next) : std::numeric_limits<double>::infinity();
  if (lower && upper && !(band_hi - band_lo > 1e-14))
    throw NumericalError("implicit step: band degenerates at t = " + std::to_string(t_next));

  const double rhs = y_prev + dz;
  const double slope = drift.a.slope();
  const double denom = 1.0 - dt * std::max(0.0, slope);

  if (!lower && !upper) {
    // No barrier: the residual is linear in y, solve it directly.
    const double lin = 1.0 - dt * slope;
    return (rhs + dt * drift.a.value(t_next, 0.0)) / lin;
  }

  double lo = band_lo, hi = band_hi;
  if (rhs > band_lo && rhs < band_hi) {
    // b has y-slope at most max(0, slope), which gives a one-sided linear
    // envelope of g and hence a tight rigorous bracket around the root.
    const double b_rhs = drift_value(drift, bounds, t_next, rhs);
    if (b_rhs == 0.0) return rhs;
    const double reach = dt * b_rhs / denom;
    if (b_rhs > 0.0) {
      lo = rhs;
      hi = std::min(hi, rhs + reach);
    } else {
      hi = rhs;
      lo = std::max(lo, rhs + reach);
    }
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    // One-sided band with the starting point at or beyond the barrier: expand
    // away from the barrier until the residual changes sign.
    const double base = lower ? band_lo : band_hi;
    double width = std::max(1.0, std::abs(rhs - base));
    bool ok = false;
    for (int it = 0; it < 200; ++it) {
      const double cand = lower ? base + width : base - width;
      const double g = cand - dt * drift_value(drift, bounds, t_next, cand) - rhs;
      if ((lower && g > 0.0) || (!lower && g < 0.0)) {
        if (lower) {
          lo = band_lo;
          hi = cand;
        } else {
          hi = band_hi;
          lo = cand;
        }
        ok = true;
        break;
      }
      width *= 2.0;
    }
    if (!ok) throw NumericalError("implicit step: failed to bracket the root");
  }

  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = mid - dt * drift_value(drift, bounds, t_next, mid) - rhs;
    if (g == 0.0) return mid;
    (g < 0.0 ? lo : hi) = mid;
  }

  double y = 0.5 * (lo + hi);
  const DriftEval e = drift_eval(drift, bounds, t_next, y);
  const double g = y - dt * e.b - rhs;
  const double refined = y - g / (1.0 - dt * e.b_y);
  if (refined > band_lo && refined < band_hi && std::isfinite(refined)) y = refined;
  return y;
}

// One simulated path: Brownian increments, the Volterra noise Z on the grid,
// the volatility path Y, and the drift y-slope along it.
struct PathBundle {
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  bool negated = false;
  std::vector<double> dB1, dB2;       // n increments
  std::vector<double> Z, Y, bprime;   // n + 1 node values
};

namespace detail {

inline PathBundle simulate_path_impl(const SandwichModel& model, std::uint64_t seed,
                                     std::uint64_t path_index, bool negate,
                                     std::size_t bump_cell, double bump_eps,
                                     std::size_t bump_cell2 = 0, double bump_eps2 = 0.0) {
  const TimeGrid& grid = model.grid;
  const std::size_t n = grid.n;
  const double dt = grid.dt();
  const double sq = std::sqrt(dt);
  const WeightTable& w = *model.weights;

  PathBundle p;
  p.seed = seed;
  p.path_index = path_index;
  p.negated = negate;
  p.dB1.resize(n);
  p.dB2.resize(n);
  p.Z.assign(n + 1, 0.0);
  p.Y.assign(n + 1, model.y0);
  p.bprime.assign(n + 1, 0.0);

  const double sign = negate ? -1.0 : 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    const NormalPair z = normal_pair(seed, path_index, j);
    p.dB1[j] = sign * z.z0 * sq;
    p.dB2[j] = sign * z.z1 * sq;
  }
  if (bump_eps != 0.0) p.dB1[bump_cell] += bump_eps;
  if (bump_eps2 != 0.0) p.dB1[bump_cell2] += bump_eps2;

  if (w.stationary) {
    const double* lag = w.lag.data();
    const double* db = p.dB1.data();
    for (std::size_t i = 1; i <= n; ++i) {
      double acc = 0.0;
      for (std::size_t l = 1; l <= i; ++l) acc += lag[l] * db[i - l];
      p.Z[i] = acc;
    }
  } else {
    const double* db = p.dB1.data();
    for (std::size_t i = 1; i <= n; ++i) {
      const double* row = w.tri.data() + i * (i - 1) / 2;
      double acc = 0.0;
      for (std::size_t j = 0; j < i; ++j) acc += row[j] * db[j];
      p.Z[i] = acc;
    }
  }

  if (model.drift.disabled()) {
    for (std::size_t i = 1; i <= n; ++i) p.Y[i] = model.y0 + p.Z[i];
    return p;
  }

  p.bprime[0] = drift_eval(model.drift, model.bounds, 0.0, model.y0).b_y;
  for (std::size_t i = 1; i <= n; ++i) {
    const double t = grid.node(i);
    const double dz = p.Z[i] - p.Z[i - 1];
    try {
      p.Y[i] = implicit_step(model.drift, model.bounds, t, p.Y[i - 1], dt, dz);
      p.bprime[i] = drift_eval(model.drift, model.bounds, t, p.Y[i]).b_y;
    } catch (const NumericalError& e) {
      throw IntegrationError(e.what(), path_index, i);
    }
  }
  return p;
}

}  // namespace detail

inline PathBundle simulate_path(const SandwichModel& model, std::uint64_t seed,
                                std::uint64_t path_index, bool negate = false) {
  return detail::simulate_path_impl(model, seed, path_index, negate, 0, 0.0);
}

// Same draw with the cell-th increment of the driving noise shifted by epsilon.
inline PathBundle simulate_path_bumped(const SandwichModel& model, std::uint64_t seed,
                                       std::uint64_t path_index, std::size_t cell, double epsilon,
                                       bool negate = false) {
  if (cell >= model.grid.n) throw InvalidArgument("bump cell out of range");
  return detail::simulate_path_impl(model, seed, path_index, negate, cell, epsilon);
}

// Two simultaneous increment shifts, for iterated finite differences.
inline PathBundle simulate_path_bumped2(const SandwichModel& model, std::uint64_t seed,
                                        std::uint64_t path_index, std::size_t cell_a,
                                        double eps_a, std::size_t cell_b, double eps_b,
                                        bool negate = false) {
  if (cell_a >= model.grid.n || cell_b >= model.grid.n)
    throw InvalidArgument("bump cell out of range");
  return detail::simulate_path_impl(model, seed, path_index, negate, cell_a, eps_a, cell_b, eps_b);
}

// Band-occupancy summary across paths.  Moments are means over paths of
// sup_t (Y - phi)^(-k), the quantities controlled by the barrier strength.
struct SandwichStats {
  std::size_t n_paths = 0;
  std::size_t violations = 0;
  double min_gap_lower = std::numeric_limits<double>::infinity();
  double min_gap_upper = std::numeric_limits<double>::infinity();
  std::array<double, 4> inv_gap_moments{};
};

class SandwichAccumulator {
 public:
  void add(const SandwichModel& model, const PathBundle& path) {
    const bool lower = model.drift.lower_enabled(), upper = model.drift.upper_enabled();
    double sup_inv = 0.0;
    for (std::size_t i = 0; i <= model.grid.n; ++i) {
      const double t = model.grid.node(i);
      const double gap_lo = path.Y[i] - model.bounds.phi(t);
      const double gap_hi = model.bounds.psi(t) - path.Y[i];
      min_lower_ = std::min(min_lower_, gap_lo);
      min_upper_ = std::min(min_upper_, gap_hi);
      // Violations are counted only against enabled barriers; with a barrier
      // off the band is diagnostic, not guaranteed.
      if (lower && gap_lo <= 0.0) ++violations_;
      if (upper && gap_hi <= 0.0) ++violations_;
      if (gap_lo > 0.0) sup_inv = std::max(sup_inv, 1.0 / gap_lo);
    }
    double pw = 1.0;
    for (std::size_t k = 0; k < 4; ++k) {
      pw *= sup_inv;
      moment_sums_[k] += pw;
    }
    ++count_;
  }

  void merge(const SandwichAccumulator& o) {
    count_ += o.count_;
    violations_ += o.violations_;
    min_lower_ = std::min(min_lower_, o.min_lower_);
    min_upper_ = std::min(min_upper_, o.min_upper_);
    for (std::size_t k = 0; k < 4; ++k) moment_sums_[k] += o.moment_sums_[k];
  }

  SandwichStats finalize() const {
    SandwichStats s;
    s.n_paths = count_;
    s.violations = violations_;
    s.min_gap_lower = min_lower_;
    s.min_gap_upper = min_upper_;
    if (count_ > 0)
      for (std::size_t k = 0; k < 4; ++k)
        s.inv_gap_moments[k] = moment_sums_[k] / static_cast<double>(count_);
    return s;
  }

 private:
  std::size_t count_ = 0;
  std::size_t violations_ = 0;
  double min_lower_ = std::numeric_limits<double>::infinity();
  double min_upper_ = std::numeric_limits<double>::infinity();
  std::array<double, 4> moment_sums_{};
};

}  // namespace svv
