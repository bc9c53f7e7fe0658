#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "svv/errors.hpp"
#include "svv/model.hpp"
#include "svv/pricing.hpp"
#include "svv/rng.hpp"

namespace svv {

struct SkewOptions {
  std::size_t steps_per_tau = 64;  // grid steps per maturity, floor 64
  double dkappa_scale = 0.05;
  bool antithetic = false;
  unsigned threads = 0;
  std::size_t chunk = 256;
};

// One ATM skew estimate per maturity.  Every maturity runs on its own grid
// with horizon tau and steps_per_tau nodes, so small maturities keep full
// scheme resolution; each gets an independently derived sub-seed, which makes
// the ladder deterministic and independent of evaluation order.
inline std::vector<SkewPoint> skew_term_structure(const SandwichModel& model,
                                                  const std::vector<double>& taus,
                                                  std::size_t n_paths, std::uint64_t seed,
                                                  const SkewOptions& opts = {}) {
  if (taus.empty()) throw InvalidArgument("skew_term_structure: empty maturity list");
  if (opts.steps_per_tau < 64)
    throw InvalidArgument("skew_term_structure: need at least 64 steps per maturity");
  for (double tau : taus)
    if (!(tau > 0.0) || !std::isfinite(tau))
      throw InvalidArgument("skew_term_structure: maturities must be positive");

  std::vector<double> sorted(taus);
  std::sort(sorted.begin(), sorted.end());

  McOptions mc;
  mc.antithetic = opts.antithetic;
  mc.threads = opts.threads;
  mc.chunk = opts.chunk;

  std::vector<SkewPoint> points;
  points.reserve(sorted.size());
  for (std::size_t q = 0; q < sorted.size(); ++q) {
    const double tau = sorted[q];
    const SandwichModel sub = retarget_model(model, tau, opts.steps_per_tau);
    const std::uint64_t sub_seed = derive_seed(seed, 0x7461750000ull + q);
    try {
      points.push_back(atm_skew(sub, tau, n_paths, sub_seed, mc, opts.dkappa_scale));
    } catch (const NumericalError& e) {
      throw NumericalError("skew at tau " + std::to_string(tau) + ": " + e.what());
    }
  }
  return points;
}

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n_used = 0;
};

// Weighted least squares of log|skew| on log tau over significant points
// (|skew| > 3 stderr), weights (|skew|/stderr)^2.  Mixed-sign or sparse data
// has no power law to fit and is reported as insufficient signal.
inline PowerLawFit fit_power_law(const std::vector<SkewPoint>& points) {
  std::vector<const SkewPoint*> sig;
  for (const SkewPoint& p : points)
    if (std::abs(p.skew) > 3.0 * p.stderr_) sig.push_back(&p);
  if (sig.size() < 4)
    throw NumericalError("fit_power_law: insufficient signal, fewer than 4 points with |skew| > 3 stderr");
  for (const SkewPoint* p : sig)
    if (p->skew * sig.front()->skew < 0.0)
      throw NumericalError("fit_power_law: insufficient signal, skew changes sign across maturities");

  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const SkewPoint* p : sig) {
    const double x = std::log(p->tau);
    const double y = std::log(std::abs(p->skew));
    const double w = p->stderr_ > 0.0 ? (p->skew / p->stderr_) * (p->skew / p->stderr_) : 1e16;
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  // relative test: rounding alone leaves |det| ~ ulp(sw * sxx) when all
  // maturities coincide, so an absolute threshold cannot catch it
  const double det = sw * sxx - sx * sx;
  if (!(std::abs(det) > 1e-12 * std::max(sw * sxx, sx * sx)))
    throw NumericalError("fit_power_law: degenerate maturity spread");

  PowerLawFit fit;
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sy - fit.slope * sx) / sw;
  fit.n_used = sig.size();

  double ss_res = 0.0, ss_tot = 0.0;
  const double ybar = sy / sw;
  for (const SkewPoint* p : sig) {
    const double x = std::log(p->tau);
    const double y = std::log(std::abs(p->skew));
    const double w = p->stderr_ > 0.0 ? (p->skew / p->stderr_) * (p->skew / p->stderr_) : 1e16;
    const double resid = y - (fit.intercept + fit.slope * x);
    ss_res += w * resid * resid;
    ss_tot += w * (y - ybar) * (y - ybar);
  }
  fit.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  return fit;
}

// Ratio of the measured small-tau limit against the predicted one:
//   [tau^(1/2-H) * skew(tau_min)] / [rho * K_Y / y0],
// which tends to +1 when the power law holds with the predicted constant.
inline double limit_check(const std::vector<SkewPoint>& points, const SandwichModel& model,
                          double k_y) {
  if (points.empty()) throw InvalidArgument("limit_check: no skew points");
  const SkewPoint* smallest = &points.front();
  for (const SkewPoint& p : points)
    if (p.tau < smallest->tau) smallest = &p;
  if (!(std::abs(smallest->skew) > 3.0 * smallest->stderr_))
    throw NumericalError("limit_check: smallest-maturity skew not significant");
  const double denom = model.rho * k_y / model.y0;
  if (std::abs(model.rho * k_y) < 1e-12)
    throw NumericalError("limit_check: limit undefined, |rho * K_Y| below 1e-12");
  const double H = model.kernel.effective_H;
  return std::pow(smallest->tau, 0.5 - H) * smallest->skew / denom;
}

struct SkewReport {
  std::vector<SkewPoint> points;  // sorted by tau ascending
  bool has_fit = false;
  PowerLawFit fit;
  std::string fit_error;
  bool has_limit = false;
  double limit_ratio = 0.0;
  double k_y = 0.0;
  std::string limit_error;
  std::string config_digest;
};

// Full experiment: ladder, fit, limit comparison.  Fit and limit failures are
// recorded as null results rather than propagated; genuine pricing failures
// (no implied vol) still throw.
inline SkewReport make_skew_report(const SandwichModel& model, const std::vector<double>& taus,
                                   std::size_t n_paths, std::uint64_t seed,
                                   const SkewOptions& opts = {}, std::string config_digest = "") {
  SkewReport rep;
  rep.config_digest = std::move(config_digest);
  rep.points = skew_term_structure(model, taus, n_paths, seed, opts);
  try {
    rep.fit = fit_power_law(rep.points);
    rep.has_fit = true;
  } catch (const NumericalError& e) {
    rep.fit_error = e.what();
  }
  try {
    rep.k_y = limit_constant(model.kernel);
    rep.limit_ratio = limit_check(rep.points, model, rep.k_y);
    rep.has_limit = true;
  } catch (const NumericalError& e) {
    rep.limit_error = e.what();
  }
  return rep;
}

}  // namespace svv
