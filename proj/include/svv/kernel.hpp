#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "svv/errors.hpp"
#include "svv/time_grid.hpp"

namespace svv {

enum class KernelFamily { PowerSum, Tabulated };

// Kernel samples K(i*h, j*h) on a uniform square grid, h = T/m, evaluated
// between nodes by bilinear interpolation.  Zero on and below the diagonal.
struct TabulatedKernel {
  double T = 1.0;
  std::size_t m = 1;
  std::vector<double> values;  // (m+1)*(m+1), row-major in (t, s)

  TabulatedKernel() = default;
  TabulatedKernel(double horizon, std::size_t panels, std::vector<double> vals)
      : T(horizon), m(panels), values(std::move(vals)) {
    if (!std::isfinite(T) || T <= 0.0)
      throw InvalidArgument("TabulatedKernel: horizon must be positive and finite");
    if (m < 1) throw InvalidArgument("TabulatedKernel: need at least one panel");
    if (values.size() != (m + 1) * (m + 1))
      throw InvalidArgument("TabulatedKernel: expected " + std::to_string((m + 1) * (m + 1)) +
                            " values, got " + std::to_string(values.size()));
    for (std::size_t i = 0; i <= m; ++i)
      for (std::size_t j = 0; j <= m; ++j) {
        const double v = values[i * (m + 1) + j];
        if (!std::isfinite(v)) throw InvalidArgument("TabulatedKernel: non-finite sample");
        if (j >= i && v != 0.0)
          throw InvalidArgument("TabulatedKernel: samples must vanish for t <= s");
      }
  }

  double h() const { return T / static_cast<double>(m); }

  double at_node(std::size_t i, std::size_t j) const { return values[i * (m + 1) + j]; }

  double eval(double t, double s) const {
    if (t <= s) return 0.0;
    if (s < 0.0 || t > T * (1.0 + 1e-12))
      throw InvalidArgument("TabulatedKernel: evaluation outside [0, T]");
    t = std::min(t, T);
    const double hh = h();
    const auto cell = [&](double x) {
      return std::min(m - 1, static_cast<std::size_t>(std::max(0.0, x / hh)));
    };
    const std::size_t it = cell(t), js = cell(s);
    const double ft = t / hh - static_cast<double>(it);
    const double fs = s / hh - static_cast<double>(js);
    const double v00 = at_node(it, js), v01 = at_node(it, js + 1);
    const double v10 = at_node(it + 1, js), v11 = at_node(it + 1, js + 1);
    return (1.0 - ft) * ((1.0 - fs) * v00 + fs * v01) + ft * ((1.0 - fs) * v10 + fs * v11);
  }
};

// Volterra kernel description.  PowerSum is sum_k alpha_k * (t-s)^(H_k - 1/2);
// Tabulated wraps externally supplied samples with a declared roughness index.
struct KernelSpec {
  KernelFamily family = KernelFamily::PowerSum;
  std::vector<double> alphas;
  std::vector<double> hursts;  // strictly increasing; effective_H = hursts[0]
  double effective_H = 0.5;
  std::shared_ptr<const TabulatedKernel> table;

  static KernelSpec power_sum(std::vector<double> alphas_, std::vector<double> hursts_) {
    KernelSpec k;
    k.family = KernelFamily::PowerSum;
    k.alphas = std::move(alphas_);
    k.hursts = std::move(hursts_);
    if (!k.hursts.empty()) k.effective_H = k.hursts.front();
    k.validate();
    return k;
  }

  static KernelSpec tabulated(std::shared_ptr<const TabulatedKernel> table_, double effective_H_) {
    KernelSpec k;
    k.family = KernelFamily::Tabulated;
    k.table = std::move(table_);
    k.effective_H = effective_H_;
    k.validate();
    return k;
  }

  void validate() const {
    if (family == KernelFamily::PowerSum) {
      if (alphas.empty() || alphas.size() != hursts.size())
        throw InvalidArgument("kernel: need matching, nonempty alpha and hurst lists");
      for (double a : alphas)
        if (!std::isfinite(a) || a <= 0.0)
          throw InvalidArgument("kernel: alphas must be positive and finite");
      for (std::size_t k = 0; k < hursts.size(); ++k) {
        if (!std::isfinite(hursts[k]) || hursts[k] <= 0.0 || hursts[k] >= 1.0)
          throw InvalidArgument("kernel: hurst exponents must lie in (0, 1)");
        if (k > 0 && hursts[k] <= hursts[k - 1])
          throw InvalidArgument("kernel: hurst exponents must be strictly increasing");
      }
      if (effective_H != hursts.front())
        throw InvalidArgument("kernel: effective_H must equal the smallest hurst exponent");
    } else {
      if (!table) throw InvalidArgument("kernel: tabulated family needs samples");
      if (!std::isfinite(effective_H) || effective_H <= 0.0 || effective_H >= 1.0)
        throw InvalidArgument("kernel: effective_H must lie in (0, 1)");
    }
  }
};

inline double kernel_eval(const KernelSpec& spec, double t, double s) {
  if (!std::isfinite(t) || !std::isfinite(s))
    throw InvalidArgument("kernel_eval: non-finite arguments");
  if (t <= s) return 0.0;
  if (spec.family == KernelFamily::PowerSum) {
    double sum = 0.0;
    for (std::size_t k = 0; k < spec.alphas.size(); ++k)
      sum += spec.alphas[k] * std::pow(t - s, spec.hursts[k] - 0.5);
    return sum;
  }
  return spec.table->eval(t, s);
}

namespace detail {

// Exact cell average of the power-sum kernel over [t_j, t_{j+1}) seen from t_i:
//   (1/dt) * sum_k alpha_k * (a^p - b^p) / p,  p = H_k + 1/2,
// with a = t_i - t_j and b = t_i - t_{j+1}.  Finite for all H in (0, 1).
inline double power_cell_weight(const KernelSpec& spec, double dt, std::size_t lag) {
  const double a = static_cast<double>(lag) * dt;
  const double b = static_cast<double>(lag - 1) * dt;
  double sum = 0.0;
  for (std::size_t k = 0; k < spec.alphas.size(); ++k) {
    const double p = spec.hursts[k] + 0.5;
    sum += spec.alphas[k] * (std::pow(a, p) - std::pow(b, p)) / p;
  }
  return sum / dt;
}

// Cell average of a tabulated kernel: exact trapezoid integration of the
// bilinear interpolant, breaking at every table node inside the cell.
inline double tabulated_cell_weight(const TabulatedKernel& tab, double t, double s_lo,
                                    double s_hi) {
  const double h = tab.h();
  std::vector<double> cuts;
  cuts.push_back(s_lo);
  const std::size_t first = static_cast<std::size_t>(std::floor(s_lo / h)) + 1;
  for (std::size_t k = first; static_cast<double>(k) * h < s_hi - 1e-15 * tab.T; ++k) {
    const double x = static_cast<double>(k) * h;
    if (x > s_lo + 1e-15 * tab.T) cuts.push_back(x);
  }
  cuts.push_back(s_hi);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    acc += 0.5 * (tab.eval(t, a) + tab.eval(t, b)) * (b - a);
  }
  return acc / (s_hi - s_lo);
}

}  // namespace detail

// Row i of the cell-averaged kernel: w[j] = (1/dt) * int_{t_j}^{t_{j+1}} K(t_i, u) du.
inline std::vector<double> cell_weights(const KernelSpec& spec, const TimeGrid& grid,
                                        std::size_t i) {
  if (i < 1 || i > grid.n) throw InvalidArgument("cell_weights: row index out of range");
  std::vector<double> w(i);
  if (spec.family == KernelFamily::PowerSum) {
    for (std::size_t j = 0; j < i; ++j) w[j] = detail::power_cell_weight(spec, grid.dt(), i - j);
  } else {
    if (grid.T > spec.table->T * (1.0 + 1e-12))
      throw InvalidArgument("cell_weights: grid horizon exceeds tabulated kernel domain");
    for (std::size_t j = 0; j < i; ++j)
      w[j] = detail::tabulated_cell_weight(*spec.table, grid.node(i), grid.node(j),
                                           grid.node(j + 1));
  }
  return w;
}

// All cell weights for a grid.  Power-sum kernels are stationary, so one lag
// vector covers every row; tabulated kernels store the full lower triangle.
struct WeightTable {
  std::size_t n = 0;
  double dt = 0.0;
  bool stationary = false;
  std::vector<double> lag;  // stationary: w(i, j) = lag[i - j], lag[0] unused
  std::vector<double> tri;  // general: row i at offset i*(i-1)/2

  double at(std::size_t i, std::size_t j) const {
    return stationary ? lag[i - j] : tri[i * (i - 1) / 2 + j];
  }
};

inline WeightTable build_weight_table(const KernelSpec& spec, const TimeGrid& grid) {
  WeightTable w;
  w.n = grid.n;
  w.dt = grid.dt();
  if (spec.family == KernelFamily::PowerSum) {
    w.stationary = true;
    w.lag.resize(grid.n + 1, 0.0);
    for (std::size_t l = 1; l <= grid.n; ++l) w.lag[l] = detail::power_cell_weight(spec, w.dt, l);
  } else {
    w.stationary = false;
    w.tri.resize(grid.n * (grid.n + 1) / 2, 0.0);
    for (std::size_t i = 1; i <= grid.n; ++i) {
      const auto row = cell_weights(spec, grid, i);
      std::copy(row.begin(), row.end(), w.tri.begin() + i * (i - 1) / 2);
    }
  }
  return w;
}

// Discrete Hoelder certificate: sup over node pairs of
//   sqrt(Var[Z(t2) - Z(t1)]) / (t2 - t1)^lambda
// under the cell-averaged discretisation.  Bounded in lambda < effective_H as
// the grid refines; grows without bound past the true roughness index.
inline double holder_certificate(const KernelSpec& spec, const TimeGrid& grid, double lambda) {
  if (!std::isfinite(lambda) || lambda <= 0.0 || lambda >= spec.effective_H)
    throw InvalidArgument("holder_certificate: lambda must lie in (0, effective_H)");
  const WeightTable w = build_weight_table(spec, grid);
  const double dt = grid.dt();
  double sup = 0.0;
  for (std::size_t i2 = 1; i2 <= grid.n; ++i2) {
    for (std::size_t i1 = 0; i1 < i2; ++i1) {
      double var = 0.0;
      for (std::size_t j = 0; j < i2; ++j) {
        const double d = w.at(i2, j) - (j < i1 ? w.at(i1, j) : 0.0);
        var += d * d;
      }
      var *= dt;
      const double gap = static_cast<double>(i2 - i1) * dt;
      sup = std::max(sup, std::sqrt(var) / std::pow(gap, lambda));
    }
  }
  return sup;
}

namespace detail {

// int_0^tau int_s^tau K(t, s) dt ds for a tabulated kernel: the inner integral
// is an exact trapezoid of the interpolant, the outer a fine composite Simpson.
inline double tabulated_double_integral(const TabulatedKernel& tab, double tau) {
  const double h = tab.h();
  const auto inner = [&](double s) {
    if (s >= tau) return 0.0;
    std::vector<double> cuts;
    cuts.push_back(s);
    for (std::size_t k = static_cast<std::size_t>(std::floor(s / h)) + 1;
         static_cast<double>(k) * h < tau - 1e-15 * tab.T; ++k) {
      const double x = static_cast<double>(k) * h;
      if (x > s + 1e-15 * tab.T) cuts.push_back(x);
    }
    cuts.push_back(tau);
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double a = cuts[k], b = cuts[k + 1];
      acc += 0.5 * (tab.eval(a, s) + tab.eval(b, s)) * (b - a);
    }
    return acc;
  };
  // Outer nodes: table nodes below tau, each split into four Simpson panels.
  std::vector<double> outer;
  outer.push_back(0.0);
  for (std::size_t k = 1; static_cast<double>(k) * h < tau - 1e-15 * tab.T; ++k)
    outer.push_back(static_cast<double>(k) * h);
  outer.push_back(tau);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < outer.size(); ++k) {
    const double a = outer[k], b = outer[k + 1], mid = 0.5 * (a + b);
    const double q1 = 0.5 * (a + mid), q3 = 0.5 * (mid + b);
    acc += (b - a) / 12.0 *
           (inner(a) + 4.0 * inner(q1) + 2.0 * inner(mid) + 4.0 * inner(q3) + inner(b));
  }
  return acc;
}

// Aitken delta-squared acceleration of a scalar sequence tail.
inline double aitken(double g0, double g1, double g2) {
  const double d1 = g1 - g0, d2 = g2 - g1;
  const double dd = d2 - d1;
  if (std::abs(dd) < 1e-14 * (std::abs(g2) + 1e-300)) return g2;
  return g2 - d2 * d2 / dd;
}

}  // namespace detail

// Small-time limit of (1 / tau^(3/2 + H)) * int int_{0<s<t<tau} K(t, s) dt ds.
// Closed form for power sums; dyadic extrapolation for tabulated kernels, with
// a 1% stabilisation gate.
inline double limit_constant(const KernelSpec& spec) {
  if (spec.family == KernelFamily::PowerSum) {
    const double H = spec.hursts.front();
    return spec.alphas.front() / ((H + 0.5) * (H + 1.5));
  }
  const TabulatedKernel& tab = *spec.table;
  const double H = spec.effective_H;
  std::vector<double> g;
  for (int m = 4; m <= 12; ++m) {
    const double tau = tab.T * std::pow(2.0, -m);
    g.push_back(detail::tabulated_double_integral(tab, tau) / std::pow(tau, 1.5 + H));
  }
  double prev = 0.0, curr = 0.0;
  for (std::size_t k = 2; k < g.size(); ++k) {
    prev = curr;
    curr = detail::aitken(g[k - 2], g[k - 1], g[k]);
  }
  const double scale = std::max(std::abs(curr), std::abs(prev));
  if (scale < 1e-300) return 0.0;
  if (std::abs(curr - prev) > 0.01 * scale)
    throw NumericalError("limit_constant: dyadic extrapolation did not stabilise");
  return curr;
}

}  // namespace svv
