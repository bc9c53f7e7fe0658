// Acceptance gates for the engine, one criterion per invocation:
//   svv_acceptance <1..8 | all>
// Each criterion prints a single [PASS]/[FAIL] line (plus indented
// diagnostics) and the process exits with the number of failures.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "svv/kernel.hpp"
#include "svv/malliavin.hpp"
#include "svv/model.hpp"
#include "svv/parallel.hpp"
#include "svv/pricing.hpp"
#include "svv/rng.hpp"
#include "svv/simulate.hpp"
#include "svv/skewlab.hpp"

namespace {

int g_failures = 0;
std::chrono::steady_clock::time_point g_t0;

void begin() { g_t0 = std::chrono::steady_clock::now(); }

void report(int k, bool pass, const std::string& detail) {
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - g_t0).count();
  std::printf("[%s] criterion %d: %s (%.1fs)\n", pass ? "PASS" : "FAIL", k,
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

std::uint64_t draw_index(std::uint64_t seed, std::uint64_t tag, std::uint64_t k,
                         std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t r =
      svv::splitmix64(svv::derive_seed(seed, tag) + 0x9E3779B97F4A7C15ull * k);
  return lo + r % (hi - lo);
}

double rel_dev(double got, double want) {
  return std::abs(got - want) / (std::abs(want) + 1e-8);
}

// Symmetric weak barriers with gamma = 2, below the roughness-compat floor
// for H = 0.3, so the build waives that one check; everything else is policed.
svv::SandwichModel barrier_gamma2_model(std::size_t n) {
  svv::KernelSpec kernel = svv::KernelSpec::power_sum({0.3}, {0.3});
  svv::BoundFunctions bounds;
  bounds.phi = svv::TimeFn::constant(0.05);
  bounds.psi = svv::TimeFn::constant(1.0);
  svv::SandwichDrift drift;
  drift.theta1 = svv::TimeFn::constant(0.01);
  drift.theta2 = svv::TimeFn::constant(0.01);
  drift.gamma1 = drift.gamma2 = 2.0;
  return svv::make_model(kernel, bounds, drift, 0.525, 0.0, 0.0, 0.0,
                         svv::TimeGrid(1.0, n), svv::ModelChecks{false});
}

// Very rough kernel (H = 0.1) with faint barriers far from y0, correlated
// driver, spot at 100.  The barrier exponents satisfy the compat floor.
// Vol-of-vol must stay small against y0 = 0.3 across the whole dyadic ladder:
// at H = 0.1 the fluctuation scale alpha * tau^H / sqrt(2H) barely decays with
// tau, and alpha = 0.1 would put it at 40-65% of y0, where the power law picks
// up second-order corrections and the lower barrier starts clamping paths
// (both steepen the fitted slope).  alpha = 0.03 keeps the swing under 20%
// and the barriers beyond four standard deviations.
svv::SandwichModel skew_lab_model(double H, double rho) {
  svv::KernelSpec kernel = svv::KernelSpec::power_sum({0.03}, {H});
  svv::BoundFunctions bounds;
  bounds.phi = svv::TimeFn::constant(0.01);
  bounds.psi = svv::TimeFn::constant(1.2);
  svv::SandwichDrift drift;
  drift.theta1 = svv::TimeFn::constant(1e-9);
  drift.theta2 = svv::TimeFn::constant(1e-9);
  drift.gamma1 = drift.gamma2 = 9.5;
  return svv::make_model(kernel, bounds, drift, 0.3, std::log(100.0), 0.0, rho,
                         svv::TimeGrid(0.25, 128));
}

// 1. Band invariance: 1e4 paths x 1024 steps, zero realized violations and
//    strictly positive margins.
void criterion_1() {
  begin();
  const std::size_t n_paths = 10000, n = 1024, chunk = 64;
  const svv::SandwichModel model = barrier_gamma2_model(n);
  try {
    const std::size_t chunks = svv::num_chunks(n_paths, chunk);
    std::vector<svv::SandwichAccumulator> parts(chunks);
    svv::parallel_chunks(n_paths, chunk, 0,
                         [&](std::size_t c, std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k)
        parts[c].add(model, svv::simulate_path(model, 101, k));
    });
    svv::SandwichAccumulator total;
    for (const auto& p : parts) total.merge(p);
    const svv::SandwichStats s = total.finalize();
    const bool pass = s.n_paths == n_paths && s.violations == 0 &&
                      s.min_gap_lower > 0.0 && s.min_gap_upper > 0.0;
    report(1, pass,
           fmt("band violations=%zu over %zu paths x %zu steps, min gaps %.3g / %.3g",
               s.violations, s.n_paths, n, s.min_gap_lower, s.min_gap_upper));
  } catch (const svv::IntegrationError& e) {
    report(1, false, fmt("scheme failed: %s", e.what()));
  }
}

// 2. First derivative formula vs bump oracle: median relative deviation < 2%
//    over 200 pairs with t - s > 10 cells; drift-disabled exact to 1e-10.
void criterion_2() {
  begin();
  const std::size_t n = 512, n_pairs = 200, n_mc_paths = 10;
  const double eps = 1e-4;
  const std::uint64_t seed = 202;

  const svv::SandwichModel model = oracle::verification_model(n);
  std::vector<svv::MalliavinField> fields;
  for (std::size_t p = 0; p < n_mc_paths; ++p)
    fields.push_back(svv::first_field(svv::simulate_path(model, seed, p), model));
  std::vector<double> devs;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const std::size_t t = draw_index(seed, 11, k, 12, n + 1);
    const std::size_t j = draw_index(seed, 12, k, 0, t - 11);
    const std::size_t p = k % n_mc_paths;
    const double bump = svv::bump_first(model, seed, p, j, t, eps);
    devs.push_back(rel_dev(bump, fields[p].at(t, j)));
  }
  const double med = oracle::median(devs);

  const svv::SandwichModel free_model = oracle::driftless_model(0.3, 0.3, n);
  double worst = 0.0;
  for (std::size_t k = 0; k < 50; ++k) {
    const std::size_t t = draw_index(seed, 13, k, 12, n + 1);
    const std::size_t j = draw_index(seed, 14, k, 0, t - 11);
    const double bump = svv::bump_first(free_model, seed, k % 4, j, t, eps);
    const double want = free_model.weights->at(t, j);
    worst = std::max(worst, std::abs(bump - want) / std::max(std::abs(want), 1e-12));
  }
  const bool pass = med < 0.02 && worst <= 1e-10;
  report(2, pass,
         fmt("bump median rel dev %.3g (gate 0.02) over %zu pairs; driftless max %.3g (gate 1e-10)",
             med, n_pairs, worst));
}

// 3. Second derivative formula vs iterated double bumps: median relative
//    error < 5% over 50 triples on n = 1024; (r,s) swap deviation < 1e-2.
void criterion_3() {
  begin();
  const std::size_t n = 1024, n_triples = 50, n_mc_paths = 5;
  const double eps = 1e-3;
  const std::uint64_t seed = 303;
  const svv::SandwichModel model = oracle::verification_model(n);

  std::vector<svv::IndexTriple> triples, swapped;
  for (std::size_t k = 0; k < n_triples; ++k) {
    const std::size_t t = draw_index(seed, 21, k, 23, n + 1);
    const std::size_t r = draw_index(seed, 22, k, 0, t - 11);
    std::size_t s = draw_index(seed, 23, k, 0, t - 12);
    if (s >= r) ++s;  // distinct bump cells
    triples.push_back({r, s, t});
    swapped.push_back({s, r, t});
  }

  std::vector<double> devs, sym;
  for (std::size_t p = 0; p < n_mc_paths; ++p) {
    const svv::PathBundle base = svv::simulate_path(model, seed, p);
    const svv::MalliavinField field = svv::first_field(base, model);
    const auto fwd = svv::second_entries(base, model, field, triples);
    const auto rev = svv::second_entries(base, model, field, swapped);
    for (std::size_t k = p; k < n_triples; k += n_mc_paths) {
      const svv::IndexTriple q = triples[k];
      const double y00 = base.Y[q.t];
      const double yr = svv::simulate_path_bumped(model, seed, p, q.r, eps).Y[q.t];
      const double ys = svv::simulate_path_bumped(model, seed, p, q.s, eps).Y[q.t];
      const double yrs =
          svv::simulate_path_bumped2(model, seed, p, q.r, eps, q.s, eps).Y[q.t];
      const double fd = (yrs - yr - ys + y00) / (eps * eps);
      devs.push_back(rel_dev(fd, fwd[k].value));
      sym.push_back(std::abs(fwd[k].value - rev[k].value) /
                    (std::max(std::abs(fwd[k].value), std::abs(rev[k].value)) + 1e-12));
    }
  }
  const double med = oracle::median(devs);
  const double med_sym = oracle::median(sym);
  const bool pass = med < 0.05 && med_sym < 1e-2;
  report(3, pass,
         fmt("double-bump median rel err %.3g (gate 0.05), swap deviation %.3g (gate 1e-2) over %zu triples",
             med, med_sym, devs.size()));
}

// 4. Explosion limit constant: independent double-integral quadrature vs the
//    closed form alpha / ((H+1/2)(H+3/2)) to 1e-6 for H in {0.1, 0.3, 0.5}.
void criterion_4() {
  begin();
  double worst = 0.0;
  std::string detail;
  for (double H : {0.1, 0.3, 0.5}) {
    const auto spec = svv::KernelSpec::power_sum({1.0}, {H});
    const double tau = 0.25;
    const double quad =
        oracle::kernel_double_integral(spec, tau, 64, 64) / std::pow(tau, H + 1.5);
    const double closed = svv::limit_constant(spec);
    const double rel = std::abs(quad - closed) / closed;
    worst = std::max(worst, rel);
    detail += fmt("H=%.1f:%.2e ", H, rel);
  }
  report(4, worst < 1e-6,
         fmt("quadrature vs closed form, rel err %s(gate 1e-6)", detail.c_str()));
}

// 5. Explosion bound: the gap-normalized statistic's max must not grow by
//    more than 10% when the grid is refined from 512 to 1024 steps.
void criterion_5() {
  begin();
  const std::size_t n_paths = 1000, chunk = 50;
  double max_val[2] = {0.0, 0.0};
  std::size_t grids[2] = {512, 1024};
  for (int g = 0; g < 2; ++g) {
    const svv::SandwichModel model = oracle::verification_model(grids[g]);
    const std::size_t chunks = svv::num_chunks(n_paths, chunk);
    std::vector<svv::ExplosionAccumulator> parts(chunks,
                                                 svv::ExplosionAccumulator(model.grid));
    svv::parallel_chunks(n_paths, chunk, 0,
                         [&](std::size_t c, std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k)
        parts[c].add(svv::first_field(svv::simulate_path(model, 505, k), model));
    });
    svv::ExplosionAccumulator total(model.grid);
    for (const auto& p : parts) total.merge(p);
    max_val[g] = total.finalize(model.kernel.effective_H).max_value();
  }
  const double growth = max_val[1] / max_val[0];
  report(5, growth <= 1.10,
         fmt("normalized statistic max %.6g (n=512) -> %.6g (n=1024), growth %.3f (gate 1.10)",
             max_val[0], max_val[1], growth));
}

// 6. Black-Scholes round trip to 1e-8 wherever the double-precision price
//    carries vol information, plus constant-vol MC within 3 stderr of the
//    closed form at 1e5 antithetic paths.
void criterion_6() {
  begin();
  const double sigmas[] = {0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0};
  const double moneyness[] = {0.8, 0.9, 0.95, 1.0, 1.05, 1.1, 1.2};
  const double taus[] = {0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
  const double rates[] = {0.0, 0.03};
  const double s0 = 100.0;
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  for (double sig : sigmas)
    for (double m : moneyness)
      for (double tau : taus)
        for (double r : rates) {
          const double strike = m * s0;
          const double price = svv::bs_call(s0, strike, r, tau, sig);
          const double intrinsic = std::max(s0 - strike * std::exp(-r * tau), 0.0);
          // skip corners where the double-precision price carries no vol
          // information at the 1e-8 level: price pinned to an arbitrage
          // bound, or a 1e-8 vol move shifts the price by less than ~50 ulps
          const double vega_floor =
              50.0 * std::numeric_limits<double>::epsilon() * s0 / 1e-8;
          if (price - intrinsic <= 1e-12 * s0 || price >= s0 * (1.0 - 1e-12) ||
              svv::bs_vega(s0, strike, r, tau, sig) < vega_floor) {
            ++skipped;
            continue;
          }
          const double iv = svv::implied_vol(price, s0, strike, r, tau);
          worst = std::max(worst, std::abs(iv - sig));
          ++checked;
        }

  const svv::SandwichModel flat =
      oracle::constvol_model(0.2, 64, 1.0, 0.0, std::log(100.0));
  svv::McOptions opts;
  opts.antithetic = true;
  const auto mc = svv::mc_call_price(flat, 1.0, {100.0}, 100000, 606, opts);
  const double ref = 7.9655674554057958;
  const double gap = std::abs(mc.estimates[0].price - ref);
  const bool pass = worst <= 1e-8 && checked >= 300 && gap <= 3.0 * mc.estimates[0].stderr_;
  report(6, pass,
         fmt("round trip max err %.3g over %zu points (%zu pinned corners skipped); "
             "MC %.6f vs %.6f, gap %.2e <= 3 x %.2e",
             worst, checked, skipped, mc.estimates[0].price, ref, gap,
             mc.estimates[0].stderr_));
}

std::vector<double> dyadic_taus(int lo_pow, int hi_pow) {
  std::vector<double> taus;
  for (int q = lo_pow; q <= hi_pow; ++q) taus.push_back(std::ldexp(1.0, -q));
  return taus;
}

svv::SkewOptions lab_opts() {
  svv::SkewOptions opts;
  opts.steps_per_tau = 128;
  opts.antithetic = true;
  return opts;
}

// 7. Skew power law: fitted slope within 0.1 of H - 1/2 for the rough model
//    (H=0.1 -> -0.4) and of 0 for the null model (H=0.5), 1e5 paths per
//    maturity over tau = 2^-9 .. 2^-2.
void criterion_7() {
  begin();
  const auto taus = dyadic_taus(2, 9);
  const std::size_t n_paths = 100000;

  const auto rough =
      svv::skew_term_structure(skew_lab_model(0.1, -0.7), taus, n_paths, 707, lab_opts());
  for (const auto& p : rough)
    std::printf("    H=0.1 tau=%-10.6g skew=%-12.6g stderr=%.3g\n", p.tau, p.skew,
                p.stderr_);
  std::size_t steepening_breaks = 0;
  for (std::size_t q = 1; q < rough.size(); ++q)
    if (std::abs(rough[q].skew) >= std::abs(rough[q - 1].skew)) ++steepening_breaks;
  std::printf("    steepening toward tau -> 0: %zu order breaks over %zu rungs\n",
              steepening_breaks, rough.size() - 1);
  const auto fit = svv::fit_power_law(rough);

  const auto null_pts =
      svv::skew_term_structure(skew_lab_model(0.5, -0.7), taus, n_paths, 717, lab_opts());
  for (const auto& p : null_pts)
    std::printf("    H=0.5 tau=%-10.6g skew=%-12.6g stderr=%.3g\n", p.tau, p.skew,
                p.stderr_);
  const auto null_fit = svv::fit_power_law(null_pts);

  const bool pass =
      std::abs(fit.slope + 0.4) <= 0.1 && std::abs(null_fit.slope) <= 0.1;
  report(7, pass,
         fmt("H=0.1 slope %.4f (target -0.4 +- 0.1, r2 %.3f, n=%zu); "
             "H=0.5 slope %.4f (target 0 +- 0.1)",
             fit.slope, fit.r_squared, fit.n_used, null_fit.slope));
}

// 8. Limit constant and sign: ratio against rho K_Y / y0 within [0.7, 1.3] at
//    tau = 2^-9, and the skew sign follows the sign of rho beyond 3 stderr.
void criterion_8() {
  begin();
  const std::size_t n_paths = 100000;
  const auto model_m = skew_lab_model(0.1, -0.7);
  const auto tiny =
      svv::skew_term_structure(model_m, {std::ldexp(1.0, -9)}, n_paths, 808, lab_opts());
  const double k_y = svv::limit_constant(model_m.kernel);
  double ratio = 0.0;
  std::string ratio_note;
  bool ratio_ok = false;
  try {
    ratio = svv::limit_check(tiny, model_m, k_y);
    ratio_ok = ratio >= 0.7 && ratio <= 1.3;
    ratio_note = fmt("limit ratio %.4f (gate [0.7, 1.3])", ratio);
  } catch (const svv::NumericalError& e) {
    ratio_note = fmt("limit ratio unavailable: %s", e.what());
  }

  const double tau_flip = std::ldexp(1.0, -6);
  const auto minus =
      svv::skew_term_structure(model_m, {tau_flip}, n_paths, 818, lab_opts());
  const auto plus = svv::skew_term_structure(skew_lab_model(0.1, 0.7), {tau_flip},
                                             n_paths, 818, lab_opts());
  const bool flip = minus[0].skew < -3.0 * minus[0].stderr_ &&
                    plus[0].skew > 3.0 * plus[0].stderr_;
  const bool pass = ratio_ok && flip;
  report(8, pass,
         fmt("%s; sign flip: skew(rho=-0.7)=%.4g (se %.2g), skew(rho=+0.7)=%.4g (se %.2g)",
             ratio_note.c_str(), minus[0].skew, minus[0].stderr_, plus[0].skew,
             plus[0].stderr_));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  void (*crit[])() = {criterion_1, criterion_2, criterion_3, criterion_4,
                      criterion_5, criterion_6, criterion_7, criterion_8};
  try {
    if (which == "all") {
      for (auto fn : crit) fn();
    } else {
      const int k = std::atoi(which.c_str());
      if (k < 1 || k > 8) {
        std::fprintf(stderr, "usage: svv_acceptance <1..8 | all>\n");
        return 2;
      }
      crit[k - 1]();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance run aborted: %s\n", e.what());
    return 9;
  }
  return g_failures;
}
