#pragma once

#include <cmath>
#include <string>

#include "svv/errors.hpp"

namespace svv {

// Deterministic function of time from a small closed family.
struct TimeFn {
  enum class Family { Constant, Affine, Sinusoid };
  Family family = Family::Constant;
  double c0 = 0.0;
  double c1 = 0.0;
  double omega = 0.0;
  double phase = 0.0;

  static TimeFn constant(double v) { return {Family::Constant, v, 0.0, 0.0, 0.0}; }
  static TimeFn affine(double c0_, double c1_) { return {Family::Affine, c0_, c1_, 0.0, 0.0}; }
  static TimeFn sinusoid(double c0_, double c1_, double omega_, double phase_) {
    return {Family::Sinusoid, c0_, c1_, omega_, phase_};
  }

  double operator()(double t) const {
    switch (family) {
      case Family::Constant: return c0;
      case Family::Affine: return c0 + c1 * t;
      case Family::Sinusoid: return c0 + c1 * std::sin(omega * t + phase);
    }
    return c0;
  }

  bool is_zero() const { return family == Family::Constant && c0 == 0.0; }
};

struct BoundFunctions {
  TimeFn phi = TimeFn::constant(0.0);   // lower bound, must stay positive
  TimeFn psi = TimeFn::constant(1.0);   // upper bound, must stay above phi
};

// Regular drift summand a(t, y): affine or mean-reverting in y, with constant
// y-slope and vanishing second y-derivative across the whole family.
struct SpaceFn {
  enum class Family { Zero, Affine, MeanRevert };
  Family family = Family::Zero;
  double p0 = 0.0;
  double p1 = 0.0;

  static SpaceFn zero() { return {}; }
  static SpaceFn affine(double a0, double a1) { return {Family::Affine, a0, a1}; }
  // kappa * (mean - y)
  static SpaceFn mean_revert(double kappa, double mean) {
    return {Family::MeanRevert, kappa, mean};
  }

  double value(double /*t*/, double y) const {
    switch (family) {
      case Family::Zero: return 0.0;
      case Family::Affine: return p0 + p1 * y;
      case Family::MeanRevert: return p0 * (p1 - y);
    }
    return 0.0;
  }

  double slope() const {
    switch (family) {
      case Family::Zero: return 0.0;
      case Family::Affine: return p1;
      case Family::MeanRevert: return -p0;
    }
    return 0.0;
  }

  bool is_zero() const { return family == Family::Zero; }
};

// Two-sided repelling drift
//   b(t, y) = theta1(t)/(y - phi(t))^gamma1 - theta2(t)/(psi(t) - y)^gamma2 + a(t, y).
// Either barrier term can be switched off by a vanishing theta.
struct SandwichDrift {
  TimeFn theta1 = TimeFn::constant(0.0);
  TimeFn theta2 = TimeFn::constant(0.0);
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  SpaceFn a;

  bool lower_enabled() const { return !theta1.is_zero(); }
  bool upper_enabled() const { return !theta2.is_zero(); }
  bool disabled() const { return !lower_enabled() && !upper_enabled() && a.is_zero(); }
};

struct OutOfBandError : NumericalError {
  using NumericalError::NumericalError;
};

struct DriftEval {
  double b = 0.0;     // drift value
  double b_y = 0.0;   // first y-derivative
  double b_yy = 0.0;  // second y-derivative
};

namespace detail {

inline void check_band(const SandwichDrift& d, double lo, double hi, double y) {
  if ((d.lower_enabled() && y <= lo) || (d.upper_enabled() && y >= hi))
    throw OutOfBandError("drift evaluated outside the open band (" + std::to_string(lo) + ", " +
                         std::to_string(hi) + ") at y = " + std::to_string(y));
}

}  // namespace detail

// Value-only path for root-finding inner loops.
inline double drift_value(const SandwichDrift& d, const BoundFunctions& bounds, double t,
                          double y) {
  const double lo = bounds.phi(t), hi = bounds.psi(t);
  detail::check_band(d, lo, hi, y);
  double b = d.a.value(t, y);
  if (d.lower_enabled()) b += d.theta1(t) * std::pow(y - lo, -d.gamma1);
  if (d.upper_enabled()) b -= d.theta2(t) * std::pow(hi - y, -d.gamma2);
  return b;
}

inline DriftEval drift_eval(const SandwichDrift& d, const BoundFunctions& bounds, double t,
                            double y) {
  const double lo = bounds.phi(t), hi = bounds.psi(t);
  detail::check_band(d, lo, hi, y);
  DriftEval e;
  e.b = d.a.value(t, y);
  e.b_y = d.a.slope();
  if (d.lower_enabled()) {
    const double th = d.theta1(t);
    const double inv = std::pow(y - lo, -d.gamma1);
    e.b += th * inv;
    e.b_y -= d.gamma1 * th * inv / (y - lo);
    e.b_yy += d.gamma1 * (d.gamma1 + 1.0) * th * inv / ((y - lo) * (y - lo));
  }
  if (d.upper_enabled()) {
    const double th = d.theta2(t);
    const double inv = std::pow(hi - y, -d.gamma2);
    e.b -= th * inv;
    e.b_y -= d.gamma2 * th * inv / (hi - y);
    e.b_yy -= d.gamma2 * (d.gamma2 + 1.0) * th * inv / ((hi - y) * (hi - y));
  }
  return e;
}

}  // namespace svv
