#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "svv/errors.hpp"
#include "svv/model.hpp"
#include "svv/simulate.hpp"

namespace svv {

// Discretised first Malliavin derivative D_{s_j} Y(t_i), lower triangle j < i,
// together with the cumulative drift-slope sums reused by the second-order
// quadrature.  Row i lives at offset i*(i-1)/2 and holds i entries.
struct MalliavinField {
  TimeGrid grid;
  std::size_t n = 0;
  std::uint64_t path_index = 0;
  std::vector<double> d1;
  std::vector<double> cum_bprime;  // C[i] = sum_{v < i} bprime[v] * dt

  double at(std::size_t i, std::size_t j) const {
    if (j >= i || i > n) throw InvalidArgument("MalliavinField: need j < i <= n");
    return d1[i * (i - 1) / 2 + j];
  }
};

// Evaluates D_{s_j}Y(t_i) = Kbar(t_i, j) +
//     dt * sum_{m=j+1}^{i-1} Kbar(m, j) * b_y(m) * exp(dt * sum_{v=m}^{i-1} b_y(v))
// for the whole triangle, where Kbar is the cell-integrated kernel weight.
// A running array A[j] carries the integral term: stepping i -> i+1 multiplies
// each A[j] by exp(b_y(i) dt) and absorbs the new m = i summand, so the whole
// field costs O(n^2) with no repeated exponentials.  With the drift disabled
// the field reduces to the weights themselves, exactly.
inline MalliavinField first_field(const PathBundle& path, const SandwichModel& model) {
  const std::size_t n = model.grid.n;
  if (path.Y.size() != n + 1)
    throw InvalidArgument("first_field: path and model grids disagree");
  const double dt = model.grid.dt();
  const WeightTable& w = *model.weights;

  MalliavinField f;
  f.grid = model.grid;
  f.n = n;
  f.path_index = path.path_index;
  f.d1.resize(n * (n + 1) / 2);
  f.cum_bprime.resize(n + 1);
  f.cum_bprime[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i)
    f.cum_bprime[i] = f.cum_bprime[i - 1] + path.bprime[i - 1] * dt;

  std::vector<double> acc(n, 0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    double* row = f.d1.data() + i * (i - 1) / 2;
    if (w.stationary) {
      const double* lag = w.lag.data();
      for (std::size_t j = 0; j < i; ++j) row[j] = lag[i - j] + acc[j];
    } else {
      const double* wrow = w.tri.data() + i * (i - 1) / 2;
      for (std::size_t j = 0; j < i; ++j) row[j] = wrow[j] + acc[j];
    }
    if (i < n) {
      const double bp = path.bprime[i];
      if (bp != 0.0) {
        const double grow = std::exp(bp * dt);
        const double add = dt * bp;
        if (w.stationary) {
          const double* lag = w.lag.data();
          for (std::size_t j = 0; j < i; ++j) acc[j] = grow * (acc[j] + add * lag[i - j]);
        } else {
          const double* wrow = w.tri.data() + i * (i - 1) / 2;
          for (std::size_t j = 0; j < i; ++j) acc[j] = grow * (acc[j] + add * wrow[j]);
        }
      }
    }
  }
  return f;
}

struct IndexTriple {
  std::size_t r = 0;  // cell index of the outer derivative
  std::size_t s = 0;  // cell index of the inner derivative
  std::size_t t = 0;  // node index of the evaluation time
};

struct SecondDerivativeEntry {
  IndexTriple idx;
  double value = 0.0;
};

// Second derivative D_r D_s Y(t) at selected triples:
//   int_s^t Kbar(u,s) F1(t,u) (int_u^t b_yy(v) D_r Y(v) dv) du
// + int_s^t Kbar(u,s) F2(t,u) D_r Y(u) du,
// F1 = b_y e^{int b_y}, F2 = b_yy e^{int b_y}, with the same left-cell rule as
// first_field.  The inner v-integral is a suffix sum, so each triple is O(n).
inline std::vector<SecondDerivativeEntry> second_entries(const PathBundle& path,
                                                         const SandwichModel& model,
                                                         const MalliavinField& field,
                                                         const std::vector<IndexTriple>& triples) {
  const std::size_t n = model.grid.n;
  if (field.n != n || path.Y.size() != n + 1)
    throw InvalidArgument("second_entries: path, field, and model grids disagree");
  const double dt = model.grid.dt();
  const WeightTable& w = *model.weights;

  for (const IndexTriple& q : triples)
    if (q.t > n || q.r >= q.t || q.s >= q.t)
      throw InvalidArgument("second_entries: triples must satisfy r < t and s < t");

  std::size_t tmax = 0;
  for (const IndexTriple& q : triples) tmax = std::max(tmax, q.t);

  std::vector<double> bdd(tmax, 0.0);
  if (!model.drift.disabled())
    for (std::size_t v = 0; v < tmax; ++v)
      bdd[v] = drift_eval(model.drift, model.bounds, model.grid.node(v), path.Y[v]).b_yy;

  std::vector<SecondDerivativeEntry> out;
  out.reserve(triples.size());
  std::vector<double> suffix(tmax + 1, 0.0);
  for (const IndexTriple& q : triples) {
    SecondDerivativeEntry e;
    e.idx = q;
    if (model.drift.disabled() || q.t <= q.s + 1) {
      out.push_back(e);
      continue;
    }
    // suffix[m] = dt * sum_{v=m}^{t-1} b_yy(v) * d1(v, r), with d1(v,r) = 0 for v <= r
    suffix[q.t] = 0.0;
    for (std::size_t m = q.t; m-- > q.s + 1;) {
      const double d1vr = m > q.r ? field.at(m, q.r) : 0.0;
      suffix[m] = suffix[m + 1] + dt * bdd[m] * d1vr;
    }
    const double ct = field.cum_bprime[q.t];
    double acc = 0.0;
    for (std::size_t m = q.s + 1; m < q.t; ++m) {
      const double kb = w.at(m, q.s);
      const double damp = std::exp(ct - field.cum_bprime[m]);
      const double d1mr = m > q.r ? field.at(m, q.r) : 0.0;
      acc += kb * damp * (path.bprime[m] * suffix[m] + bdd[m] * d1mr);
    }
    e.value = dt * acc;
    out.push_back(e);
  }
  return out;
}

// Finite-difference oracle: shift the cell-th driving increment by epsilon,
// re-solve the path, and return (Y_eps(t) - Y(t)) / epsilon.  Comparable to
// d1[t][cell] directly; epsilon is restricted to the window where the O(eps)
// bias stays above round-off.
inline double bump_first(const SandwichModel& model, std::uint64_t seed, std::uint64_t path_index,
                         std::size_t cell, std::size_t t_index, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-2))
    throw InvalidArgument("bump_first: epsilon must lie in [1e-7, 1e-2]");
  if (cell >= t_index || t_index > model.grid.n)
    throw InvalidArgument("bump_first: need cell < t_index <= n");
  const PathBundle base = simulate_path(model, seed, path_index);
  const PathBundle bumped = simulate_path_bumped(model, seed, path_index, cell, epsilon);
  return (bumped.Y[t_index] - base.Y[t_index]) / epsilon;
}

// Normalised explosion statistic: M[i][j] = mean over paths of d1(i,j)^2 times
// (t_i - s_j)^(1-2H).  Bounded in the grid when the roughness bound holds.
struct ExplosionStats {
  TimeGrid grid;
  double H = 0.5;
  std::size_t n_fields = 0;
  std::vector<double> tri;  // same triangular layout as MalliavinField

  double at(std::size_t i, std::size_t j) const {
    if (j >= i || i > grid.n) throw InvalidArgument("ExplosionStats: need j < i <= n");
    return tri[i * (i - 1) / 2 + j];
  }

  double max_value() const {
    double m = 0.0;
    for (double v : tri) m = std::max(m, v);
    return m;
  }
};

class ExplosionAccumulator {
 public:
  explicit ExplosionAccumulator(const TimeGrid& grid)
      : grid_(grid), sum_sq_(grid.n * (grid.n + 1) / 2, 0.0) {}

  void add(const MalliavinField& f) {
    if (!f.grid.same(grid_))
      throw InvalidArgument("explosion stats: fields must share one grid");
    for (std::size_t k = 0; k < sum_sq_.size(); ++k) sum_sq_[k] += f.d1[k] * f.d1[k];
    ++count_;
  }

  void merge(const ExplosionAccumulator& o) {
    if (!o.grid_.same(grid_))
      throw InvalidArgument("explosion stats: fields must share one grid");
    for (std::size_t k = 0; k < sum_sq_.size(); ++k) sum_sq_[k] += o.sum_sq_[k];
    count_ += o.count_;
  }

  ExplosionStats finalize(double H, std::size_t min_fields = 100) const {
    if (count_ < min_fields)
      throw InvalidArgument("explosion stats: need at least " + std::to_string(min_fields) +
                            " fields, have " + std::to_string(count_));
    ExplosionStats s;
    s.grid = grid_;
    s.H = H;
    s.n_fields = count_;
    s.tri.resize(sum_sq_.size());
    const double dt = grid_.dt();
    const double expo = 1.0 - 2.0 * H;
    for (std::size_t i = 1; i <= grid_.n; ++i) {
      const double* src = sum_sq_.data() + i * (i - 1) / 2;
      double* dst = s.tri.data() + i * (i - 1) / 2;
      for (std::size_t j = 0; j < i; ++j) {
        const double gap = static_cast<double>(i - j) * dt;
        dst[j] = src[j] / static_cast<double>(count_) * std::pow(gap, expo);
      }
    }
    return s;
  }

 private:
  TimeGrid grid_;
  std::size_t count_ = 0;
  std::vector<double> sum_sq_;
};

inline ExplosionStats explosion_stats(const std::vector<MalliavinField>& fields, double H) {
  if (fields.empty()) throw InvalidArgument("explosion stats: empty field collection");
  ExplosionAccumulator acc(fields.front().grid);
  for (const MalliavinField& f : fields) acc.add(f);
  return acc.finalize(H);
}

// Analogous statistic for second-derivative entries, normalised against the
// bound factor ((t-r)/(t-s))^(1-2H).
struct SecondStat {
  IndexTriple idx;
  double value = 0.0;
  std::size_t n_paths = 0;
};

inline std::vector<SecondStat> second_explosion_stats(
    const TimeGrid& grid, double H,
    const std::vector<std::vector<SecondDerivativeEntry>>& per_path) {
  if (per_path.empty()) throw InvalidArgument("second stats: empty collection");
  const std::size_t m = per_path.front().size();
  for (const auto& v : per_path) {
    if (v.size() != m) throw InvalidArgument("second stats: entry lists must align");
    for (std::size_t k = 0; k < m; ++k) {
      const IndexTriple& a = v[k].idx;
      const IndexTriple& b = per_path.front()[k].idx;
      if (a.r != b.r || a.s != b.s || a.t != b.t)
        throw InvalidArgument("second stats: entry lists must align");
    }
  }
  std::vector<SecondStat> out(m);
  const double dt = grid.dt();
  const double expo = 1.0 - 2.0 * H;
  for (std::size_t k = 0; k < m; ++k) {
    const IndexTriple& q = per_path.front()[k].idx;
    double sum = 0.0;
    for (const auto& v : per_path) sum += v[k].value * v[k].value;
    const double tr = static_cast<double>(q.t - q.r) * dt;
    const double ts = static_cast<double>(q.t - q.s) * dt;
    out[k].idx = q;
    out[k].n_paths = per_path.size();
    out[k].value = sum / static_cast<double>(per_path.size()) / std::pow(tr / ts, expo);
  }
  return out;
}

}  // namespace svv
