#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "svv/errors.hpp"
#include "svv/model.hpp"
#include "svv/parallel.hpp"
#include "svv/simulate.hpp"

namespace svv {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

inline double norm_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

inline double bs_call(double s0, double k, double r, double tau, double sigma) {
  if (!(s0 > 0.0) || !(k > 0.0) || !(tau > 0.0) || !std::isfinite(r) || !(sigma >= 0.0) ||
      !std::isfinite(s0) || !std::isfinite(k) || !std::isfinite(tau) || !std::isfinite(sigma))
    throw InvalidArgument("bs_call: need s0, k, tau > 0 and sigma >= 0");
  const double disc_k = k * std::exp(-r * tau);
  if (sigma == 0.0) return std::max(s0 - disc_k, 0.0);
  const double sd = sigma * std::sqrt(tau);
  const double d1 = std::log(s0 / disc_k) / sd + 0.5 * sd;
  const double d2 = d1 - sd;
  return s0 * norm_cdf(d1) - disc_k * norm_cdf(d2);
}

inline double bs_vega(double s0, double k, double r, double tau, double sigma) {
  if (!(s0 > 0.0) || !(k > 0.0) || !(tau > 0.0) || !(sigma > 0.0))
    throw InvalidArgument("bs_vega: need s0, k, tau, sigma > 0");
  const double sd = sigma * std::sqrt(tau);
  const double d1 = std::log(s0 * std::exp(r * tau) / k) / sd + 0.5 * sd;
  return s0 * norm_pdf(d1) * std::sqrt(tau);
}

// Implied volatility by bracketed bisection on [1e-6, 5] plus a Newton polish.
// Prices at or outside the open no-arbitrage band (intrinsic, spot) are
// reported as errors, never clamped.
inline double implied_vol(double price, double s0, double k, double r, double tau) {
  if (!(s0 > 0.0) || !(k > 0.0) || !(tau > 0.0))
    throw InvalidArgument("implied_vol: need s0, k, tau > 0");
  const double intrinsic = std::max(s0 - k * std::exp(-r * tau), 0.0);
  if (!(price > intrinsic) || !(price < s0))
    throw NumericalError("implied_vol: price " + std::to_string(price) +
                         " outside the open no-arbitrage band (" + std::to_string(intrinsic) +
                         ", " + std::to_string(s0) + ")");
  double lo = 1e-6, hi = 5.0;
  const double f_lo = bs_call(s0, k, r, tau, lo) - price;
  const double f_hi = bs_call(s0, k, r, tau, hi) - price;
  if (f_lo > 0.0) throw NumericalError("implied_vol: root below the 1e-6 bracket");
  if (f_hi < 0.0) throw NumericalError("implied_vol: root above the 5.0 bracket");
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = bs_call(s0, k, r, tau, mid) - price;
    if (f == 0.0) return mid;
    (f < 0.0 ? lo : hi) = mid;
  }
  double sigma = 0.5 * (lo + hi);
  const double vega = bs_vega(s0, k, r, tau, sigma);
  if (vega > 1e-300) {
    const double refined = sigma - (bs_call(s0, k, r, tau, sigma) - price) / vega;
    if (refined > lo - 1e-9 && refined < hi + 1e-9 && refined > 0.0) sigma = refined;
  }
  return sigma;
}

// Log price at node i_end by the left-point rule, coupling the price noise to
// the same dB1 that drives the volatility.
inline double log_price_at(const SandwichModel& model, const PathBundle& path,
                           std::size_t i_end) {
  if (i_end > model.grid.n) throw InvalidArgument("log_price_at: node out of range");
  const double dt = model.grid.dt();
  const double rho = model.rho;
  const double orth = std::sqrt(1.0 - rho * rho);
  double quad = 0.0, stoch = 0.0;
  for (std::size_t j = 0; j < i_end; ++j) {
    const double y = path.Y[j];
    quad += y * y;
    stoch += y * (rho * path.dB1[j] + orth * path.dB2[j]);
  }
  const double tau = static_cast<double>(i_end) * dt;
  return model.x0 + model.r * tau - 0.5 * quad * dt + stoch;
}

inline double simulate_log_price(const SandwichModel& model, double tau, std::uint64_t seed,
                                 std::uint64_t path_index) {
  const std::size_t i_end = model.grid.node_index(tau);
  const PathBundle p = simulate_path(model, seed, path_index);
  return log_price_at(model, p, i_end);
}

struct PriceEstimate {
  double strike = 0.0;
  double tau = 0.0;
  double price = 0.0;
  double stderr_ = 0.0;
  std::size_t n_paths = 0;
};

struct McOptions {
  bool antithetic = false;
  unsigned threads = 0;       // 0 = hardware
  std::size_t chunk = 256;    // samples per work unit; fixed so results are
                              // independent of the thread count
};

// Joint Monte Carlo result for one maturity and several strikes priced from a
// single common set of paths.
struct McResult {
  double tau = 0.0;
  std::vector<double> strikes;
  std::vector<PriceEstimate> estimates;
  std::vector<double> cov;  // covariance of the mean estimators, row-major KxK
  double mean_spot = 0.0;   // discounted terminal spot average
  double se_spot = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t payoff_checksum = 0;  // FNV-1a over terminal spot bit patterns

  double cov_at(std::size_t a, std::size_t b) const { return cov[a * strikes.size() + b]; }
};

namespace detail {

inline std::uint64_t fnv1a_accum(std::uint64_t h, std::uint64_t bits) {
  for (int b = 0; b < 8; ++b) {
    h ^= (bits >> (8 * b)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct McChunkStats {
  std::vector<double> pay_sum;
  std::vector<double> pay_prod;  // sum of payoff outer products, row-major
  double spot_sum = 0.0;
  double spot_sq = 0.0;
  std::uint64_t checksum = 0xcbf29ce484222325ull;
  std::size_t count = 0;
};

}  // namespace detail

inline McResult mc_call_price(const SandwichModel& model, double tau,
                              const std::vector<double>& strikes, std::size_t n_paths,
                              std::uint64_t seed, const McOptions& opts = {}) {
  if (strikes.empty()) throw InvalidArgument("mc_call_price: empty strike list");
  for (double k : strikes)
    if (!(k > 0.0) || !std::isfinite(k)) throw InvalidArgument("mc_call_price: strikes must be positive");
  if (n_paths < 1000) throw InvalidArgument("mc_call_price: need at least 1000 paths");
  if (opts.antithetic && n_paths % 2 != 0)
    throw InvalidArgument("mc_call_price: antithetic pairing needs an even path count");

  const std::size_t i_end = model.grid.node_index(tau);
  const std::size_t nk = strikes.size();
  const double disc = std::exp(-model.r * tau);
  const std::size_t n_samples = opts.antithetic ? n_paths / 2 : n_paths;

  const std::size_t chunks = num_chunks(n_samples, opts.chunk);
  std::vector<detail::McChunkStats> parts(chunks);

  parallel_chunks(n_samples, opts.chunk, opts.threads,
                  [&](std::size_t c, std::size_t b, std::size_t e) {
    detail::McChunkStats st;
    st.pay_sum.assign(nk, 0.0);
    st.pay_prod.assign(nk * nk, 0.0);
    std::vector<double> pay(nk);
    for (std::size_t s = b; s < e; ++s) {
      double spot_sample = 0.0;
      pay.assign(nk, 0.0);
      const int legs = opts.antithetic ? 2 : 1;
      for (int leg = 0; leg < legs; ++leg) {
        const PathBundle p = simulate_path(model, seed, s, leg == 1);
        const double spot = std::exp(log_price_at(model, p, i_end));
        st.checksum = detail::fnv1a_accum(st.checksum, std::bit_cast<std::uint64_t>(spot));
        spot_sample += disc * spot;
        for (std::size_t k = 0; k < nk; ++k)
          pay[k] += disc * std::max(spot - strikes[k], 0.0);
      }
      const double inv = 1.0 / static_cast<double>(legs);
      spot_sample *= inv;
      st.spot_sum += spot_sample;
      st.spot_sq += spot_sample * spot_sample;
      for (std::size_t k = 0; k < nk; ++k) {
        pay[k] *= inv;
        st.pay_sum[k] += pay[k];
      }
      for (std::size_t a = 0; a < nk; ++a)
        for (std::size_t bb = 0; bb < nk; ++bb) st.pay_prod[a * nk + bb] += pay[a] * pay[bb];
      ++st.count;
    }
    parts[c] = std::move(st);
  });

  detail::McChunkStats total;
  total.pay_sum.assign(nk, 0.0);
  total.pay_prod.assign(nk * nk, 0.0);
  std::uint64_t checksum = 0xcbf29ce484222325ull;
  for (const auto& st : parts) {
    for (std::size_t k = 0; k < nk; ++k) total.pay_sum[k] += st.pay_sum[k];
    for (std::size_t k = 0; k < nk * nk; ++k) total.pay_prod[k] += st.pay_prod[k];
    total.spot_sum += st.spot_sum;
    total.spot_sq += st.spot_sq;
    total.count += st.count;
    checksum = detail::fnv1a_accum(checksum, st.checksum);
  }

  const double n = static_cast<double>(n_samples);
  McResult res;
  res.tau = tau;
  res.strikes = strikes;
  res.n_samples = n_samples;
  res.payoff_checksum = checksum;
  res.cov.assign(nk * nk, 0.0);
  res.estimates.resize(nk);
  for (std::size_t a = 0; a < nk; ++a) {
    const double mean = total.pay_sum[a] / n;
    for (std::size_t b = 0; b < nk; ++b) {
      const double mb = total.pay_sum[b] / n;
      res.cov[a * nk + b] = (total.pay_prod[a * nk + b] / n - mean * mb) / (n - 1.0);
    }
    PriceEstimate& est = res.estimates[a];
    est.strike = strikes[a];
    est.tau = tau;
    est.price = mean;
    est.stderr_ = std::sqrt(std::max(res.cov[a * nk + a], 0.0));
    est.n_paths = n_paths;
  }
  res.mean_spot = total.spot_sum / n;
  res.se_spot = std::sqrt(std::max((total.spot_sq / n - res.mean_spot * res.mean_spot) / (n - 1.0), 0.0));
  return res;
}

struct SkewPoint {
  double tau = 0.0;
  double skew = 0.0;
  double stderr_ = 0.0;
  double dkappa = 0.0;
  double iv_minus = 0.0;
  double iv_plus = 0.0;
};

// ATM implied-volatility skew by central difference in log-moneyness, priced
// from one common path set so the difference variance stays small.  The
// standard error propagates the joint price covariance through 1/vega.
inline SkewPoint atm_skew(const SandwichModel& model, double tau, std::size_t n_paths,
                          std::uint64_t seed, const McOptions& opts = {},
                          double dkappa_scale = 0.05) {
  if (n_paths < 10000) throw InvalidArgument("atm_skew: need at least 1e4 paths");
  if (!(dkappa_scale > 0.0)) throw InvalidArgument("atm_skew: dkappa scale must be positive");
  const double dk = dkappa_scale * std::sqrt(tau);
  const double s0 = std::exp(model.x0);
  const double forward = s0 * std::exp(model.r * tau);
  const std::vector<double> strikes = {forward * std::exp(-dk), forward * std::exp(dk)};
  const McResult mc = mc_call_price(model, tau, strikes, n_paths, seed, opts);

  const auto invert = [&](const PriceEstimate& est) {
    try {
      return implied_vol(est.price, s0, est.strike, model.r, tau);
    } catch (const NumericalError& e) {
      throw NumericalError("atm_skew: implied vol undefined at strike " +
                           std::to_string(est.strike) + ", tau " + std::to_string(tau) + ": " +
                           e.what());
    }
  };
  const double iv_m = invert(mc.estimates[0]);
  const double iv_p = invert(mc.estimates[1]);

  const double vega_m = bs_vega(s0, strikes[0], model.r, tau, iv_m);
  const double vega_p = bs_vega(s0, strikes[1], model.r, tau, iv_p);
  const double var = mc.cov_at(1, 1) / (vega_p * vega_p) + mc.cov_at(0, 0) / (vega_m * vega_m) -
                     2.0 * mc.cov_at(0, 1) / (vega_p * vega_m);

  SkewPoint pt;
  pt.tau = tau;
  pt.dkappa = dk;
  pt.iv_minus = iv_m;
  pt.iv_plus = iv_p;
  pt.skew = (iv_p - iv_m) / (2.0 * dk);
  pt.stderr_ = std::sqrt(std::max(var, 0.0)) / (2.0 * dk);
  return pt;
}

}  // namespace svv
