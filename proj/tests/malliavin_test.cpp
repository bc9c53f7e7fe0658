#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "svv/errors.hpp"
#include "svv/malliavin.hpp"
#include "svv/model.hpp"
#include "svv/simulate.hpp"

using svv::IndexTriple;
using svv::MalliavinField;

namespace {

// Four-step model with only the lower barrier, small enough to unroll the
// second-derivative quadrature by hand.
svv::SandwichModel four_step_model() {
  svv::BoundFunctions bounds;
  bounds.phi = svv::TimeFn::constant(0.1);
  bounds.psi = svv::TimeFn::constant(1.0);
  svv::SandwichDrift drift;
  drift.theta1 = svv::TimeFn::constant(0.2);
  drift.gamma1 = 3.0;
  drift.a = svv::SpaceFn::affine(0.05, -0.1);
  return svv::make_model(svv::KernelSpec::power_sum({0.5}, {0.3}), bounds,
                         drift, 0.3, 0.0, 0.0, 0.0, svv::TimeGrid(0.4, 4));
}

double rel_dev(double got, double want) {
  return std::abs(got - want) / std::max(1e-12, std::abs(want));
}

}  // namespace

TEST(FirstField, DriftlessEqualsWeightsExactly) {
  const auto model = oracle::driftless_model(0.3, 0.3, 64);
  const auto p = svv::simulate_path(model, 2, 0);
  const auto f = svv::first_field(p, model);
  for (std::size_t i = 1; i <= 64; ++i)
    for (std::size_t j = 0; j < i; ++j)
      EXPECT_EQ(f.at(i, j), model.weights->at(i, j));
  for (double c : f.cum_bprime) EXPECT_EQ(c, 0.0);
}

TEST(FirstField, ConstantKernelDriftlessIsUnit) {
  const auto model = oracle::driftless_model(1.0, 0.5, 32);
  const auto f = svv::first_field(svv::simulate_path(model, 3, 1), model);
  for (std::size_t i = 1; i <= 32; ++i)
    for (std::size_t j = 0; j < i; ++j) EXPECT_DOUBLE_EQ(f.at(i, j), 1.0);
}

TEST(FirstField, MatchesCubicReference) {
  for (std::size_t n : {std::size_t(256), std::size_t(512)}) {
    const auto model = oracle::rough_model(n);
    const auto p = svv::simulate_path(model, 41, n);  // distinct path per size
    const auto f = svv::first_field(p, model);
    const auto ref = oracle::first_field_ref(p, model);
    double worst = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k)
      worst = std::max(worst, std::abs(f.d1[k] - ref[k]) /
                                  std::max(1.0, std::abs(ref[k])));
    EXPECT_LT(worst, 1e-12) << "n=" << n;
  }
}

TEST(FirstField, CumulativeSlopeSums) {
  const auto model = oracle::rough_model(64);
  const auto p = svv::simulate_path(model, 9, 4);
  const auto f = svv::first_field(p, model);
  double c = 0.0;
  EXPECT_EQ(f.cum_bprime[0], 0.0);
  for (std::size_t i = 1; i <= 64; ++i) {
    c += p.bprime[i - 1] * model.grid.dt();
    EXPECT_DOUBLE_EQ(f.cum_bprime[i], c);
  }
}

TEST(FirstField, GridMismatchAndRangeChecks) {
  const auto m64 = oracle::rough_model(64);
  const auto m32 = oracle::rough_model(32);
  const auto p32 = svv::simulate_path(m32, 1, 0);
  EXPECT_THROW(svv::first_field(p32, m64), svv::InvalidArgument);
  const auto f = svv::first_field(svv::simulate_path(m64, 1, 0), m64);
  EXPECT_THROW(f.at(3, 3), svv::InvalidArgument);
  EXPECT_THROW(f.at(65, 0), svv::InvalidArgument);
  EXPECT_NO_THROW(f.at(64, 63));
}

TEST(BumpFirst, AgreesWithFieldOnBarrierModel) {
  const auto model = oracle::verification_model(256);
  const std::size_t pairs[][2] = {{0, 40},   {10, 60},  {31, 128}, {64, 200},
                                  {100, 256}, {5, 156},  {77, 120}, {150, 230},
                                  {200, 256}, {20, 90},  {48, 170}, {90, 210}};
  std::vector<double> devs;
  for (std::uint64_t path = 0; path < 3; ++path) {
    const auto p = svv::simulate_path(model, 12, path);
    const auto f = svv::first_field(p, model);
    for (const auto& pr : pairs) {
      const double fd = svv::bump_first(model, 12, path, pr[0], pr[1], 1e-4);
      devs.push_back(rel_dev(fd, f.at(pr[1], pr[0])));
    }
  }
  EXPECT_LT(oracle::median(devs), 0.05);
}

TEST(BumpFirst, DriftDisabledMatchesWeightsTightly) {
  const auto model = oracle::driftless_model(0.3, 0.3, 128);
  const std::size_t pairs[][2] = {{0, 30}, {40, 100}, {90, 128}};
  for (const auto& pr : pairs) {
    const double fd = svv::bump_first(model, 8, 2, pr[0], pr[1], 1e-4);
    const double w = model.weights->at(pr[1], pr[0]);
    EXPECT_NEAR(fd, w, 1e-10 * std::max(1.0, std::abs(w)));
  }
}

TEST(BumpFirst, ValidationWindows) {
  const auto model = oracle::rough_model(64);
  EXPECT_THROW(svv::bump_first(model, 1, 0, 0, 32, 1e-8), svv::InvalidArgument);
  EXPECT_THROW(svv::bump_first(model, 1, 0, 0, 32, 0.1), svv::InvalidArgument);
  EXPECT_THROW(svv::bump_first(model, 1, 0, 32, 32, 1e-4), svv::InvalidArgument);
  EXPECT_THROW(svv::bump_first(model, 1, 0, 0, 65, 1e-4), svv::InvalidArgument);
  EXPECT_NO_THROW(svv::bump_first(model, 1, 0, 31, 32, 1e-4));
}

TEST(Second, HandExpandedFourStepOracle) {
  const auto model = four_step_model();
  const auto p = svv::simulate_path(model, 3, 0);
  const auto f = svv::first_field(p, model);
  const double dt = model.grid.dt();
  const auto& w = *model.weights;
  const double* bp = p.bprime.data();

  // independent hand recomputation of the pieces
  double bdd[4];
  for (std::size_t v = 0; v < 4; ++v)
    bdd[v] = svv::drift_eval(model.drift, model.bounds, model.grid.node(v), p.Y[v]).b_yy;
  const double d1_20 = w.at(2, 0) + dt * w.at(1, 0) * bp[1] * std::exp(dt * bp[1]);
  const double d1_30 = w.at(3, 0) +
                       dt * (w.at(1, 0) * bp[1] * std::exp(dt * (bp[1] + bp[2])) +
                             w.at(2, 0) * bp[2] * std::exp(dt * bp[2]));
  const double d1_32 = w.at(3, 2);
  EXPECT_NEAR(f.at(2, 0), d1_20, 1e-13 * std::abs(d1_20));
  EXPECT_NEAR(f.at(3, 0), d1_30, 1e-13 * std::abs(d1_30));
  EXPECT_EQ(f.at(3, 2), d1_32);

  const auto entries = svv::second_entries(
      p, model, f, {{0, 1, 4}, {2, 1, 4}, {0, 2, 4}, {0, 3, 4}});

  // r=0, s=1, t=4
  const double suf3 = dt * bdd[3] * d1_30;
  const double suf2 = suf3 + dt * bdd[2] * d1_20;
  const double v0 = dt * (w.at(2, 1) * std::exp(dt * (bp[2] + bp[3])) *
                              (bp[2] * suf2 + bdd[2] * d1_20) +
                          w.at(3, 1) * std::exp(dt * bp[3]) *
                              (bp[3] * suf3 + bdd[3] * d1_30));
  EXPECT_NEAR(entries[0].value, v0, 1e-12 * std::abs(v0));

  // r=2, s=1, t=4: d1(m, 2) vanishes for m <= 2
  const double suf3b = dt * bdd[3] * d1_32;
  const double v1 = dt * (w.at(2, 1) * std::exp(dt * (bp[2] + bp[3])) * (bp[2] * suf3b) +
                          w.at(3, 1) * std::exp(dt * bp[3]) *
                              (bp[3] * suf3b + bdd[3] * d1_32));
  EXPECT_NEAR(entries[1].value, v1, 1e-12 * std::abs(v1));

  // r=0, s=2, t=4: single summand m=3
  const double v2 = dt * w.at(3, 2) * std::exp(dt * bp[3]) *
                    (bp[3] * dt * bdd[3] * d1_30 + bdd[3] * d1_30);
  EXPECT_NEAR(entries[2].value, v2, 1e-12 * std::abs(v2));

  // t = s+1 has an empty quadrature
  EXPECT_EQ(entries[3].value, 0.0);
}

TEST(Second, DriftDisabledVanishes) {
  const auto model = oracle::driftless_model(0.3, 0.3, 32);
  const auto p = svv::simulate_path(model, 4, 0);
  const auto f = svv::first_field(p, model);
  const auto entries = svv::second_entries(p, model, f, {{0, 5, 20}, {3, 10, 30}});
  for (const auto& e : entries) EXPECT_EQ(e.value, 0.0);
}

TEST(Second, TripleValidation) {
  const auto model = oracle::rough_model(32);
  const auto p = svv::simulate_path(model, 4, 0);
  const auto f = svv::first_field(p, model);
  EXPECT_THROW(svv::second_entries(p, model, f, {{0, 1, 33}}), svv::InvalidArgument);
  EXPECT_THROW(svv::second_entries(p, model, f, {{16, 1, 16}}), svv::InvalidArgument);
  EXPECT_THROW(svv::second_entries(p, model, f, {{1, 16, 16}}), svv::InvalidArgument);
  const auto m16 = oracle::rough_model(16);
  const auto p16 = svv::simulate_path(m16, 4, 0);
  EXPECT_THROW(svv::second_entries(p16, m16, f, {{0, 1, 8}}), svv::InvalidArgument);
}

TEST(Second, DoubleBumpAgreement) {
  const auto model = oracle::verification_model(512);
  const IndexTriple triples[] = {
      {10, 100, 300}, {50, 200, 480}, {0, 64, 128},   {128, 256, 512},
      {300, 350, 500}, {25, 75, 490}, {5, 250, 400},  {60, 90, 200},
      {150, 300, 460}, {220, 260, 380}, {32, 160, 352}, {80, 240, 440}};
  const double eps = 1e-3;
  std::vector<double> devs;
  for (std::uint64_t path = 0; path < 3; ++path) {
    const auto base = svv::simulate_path(model, 19, path);
    const auto f = svv::first_field(base, model);
    std::vector<IndexTriple> q(std::begin(triples), std::end(triples));
    const auto entries = svv::second_entries(base, model, f, q);
    for (std::size_t k = 0; k < q.size(); ++k) {
      const auto yr = svv::simulate_path_bumped(model, 19, path, q[k].r, eps);
      const auto ys = svv::simulate_path_bumped(model, 19, path, q[k].s, eps);
      const auto yrs =
          svv::simulate_path_bumped2(model, 19, path, q[k].r, eps, q[k].s, eps);
      const double fd = (yrs.Y[q[k].t] - yr.Y[q[k].t] - ys.Y[q[k].t] +
                         base.Y[q[k].t]) /
                        (eps * eps);
      devs.push_back(rel_dev(entries[k].value, fd));
    }
  }
  EXPECT_LT(oracle::median(devs), 0.1);
}

TEST(Second, NearSymmetricInDerivativeOrder) {
  const auto model = oracle::rough_model(512);
  const IndexTriple triples[] = {
      {64, 192, 448}, {32, 256, 500}, {100, 300, 480}, {16, 128, 320},
      {200, 350, 505}, {48, 96, 384}};
  std::vector<double> devs;
  for (std::uint64_t path = 0; path < 2; ++path) {
    const auto p = svv::simulate_path(model, 23, path);
    const auto f = svv::first_field(p, model);
    for (const auto& q : triples) {
      const auto fwd = svv::second_entries(p, model, f, {q});
      const auto swp = svv::second_entries(p, model, f, {{q.s, q.r, q.t}});
      devs.push_back(rel_dev(fwd[0].value, swp[0].value));
    }
  }
  EXPECT_LT(oracle::median(devs), 0.1);
}

TEST(Explosion, ConstantKernelIsExactlyFlat) {
  // dyadic grid: the unit weights are exact and so is the statistic
  const auto model = oracle::driftless_model(1.0, 0.5, 32);
  const auto f = svv::first_field(svv::simulate_path(model, 5, 0), model);
  svv::ExplosionAccumulator acc(model.grid);
  for (int k = 0; k < 100; ++k) acc.add(f);
  const auto s = acc.finalize(0.5);
  EXPECT_EQ(s.n_fields, 100u);
  for (std::size_t i = 1; i <= 32; ++i)
    for (std::size_t j = 0; j < i; ++j) EXPECT_DOUBLE_EQ(s.at(i, j), 1.0);
  EXPECT_DOUBLE_EQ(s.max_value(), 1.0);
}

TEST(Explosion, DriftlessRoughKernelClosedForm) {
  // for the pure power kernel the statistic depends only on the lag:
  //   M(l) = ((l^(H+1/2) - (l-1)^(H+1/2)) / (H+1/2))^2 * l^(1-2H)
  const double H = 0.1;
  const auto model = oracle::driftless_model(1.0, H, 48);
  const auto f = svv::first_field(svv::simulate_path(model, 6, 0), model);
  svv::ExplosionAccumulator acc(model.grid);
  for (int k = 0; k < 100; ++k) acc.add(f);
  const auto s = acc.finalize(H);
  const double p = H + 0.5;
  for (std::size_t lag : {std::size_t(1), std::size_t(2), std::size_t(7)}) {
    const double incr = (std::pow(static_cast<double>(lag), p) -
                         std::pow(static_cast<double>(lag - 1), p)) / p;
    const double want = incr * incr * std::pow(static_cast<double>(lag), 1.0 - 2.0 * H);
    EXPECT_NEAR(s.at(20, 20 - lag), want, 1e-12 * want) << "lag=" << lag;
  }
  EXPECT_NEAR(s.max_value(), 1.0 / (p * p), 1e-12);
}

TEST(Explosion, AccumulatorGates) {
  const auto model = oracle::driftless_model(1.0, 0.5, 16);
  const auto f = svv::first_field(svv::simulate_path(model, 7, 0), model);
  svv::ExplosionAccumulator acc(model.grid);
  for (int k = 0; k < 99; ++k) acc.add(f);
  EXPECT_THROW(acc.finalize(0.5), svv::InvalidArgument);
  const auto other = oracle::driftless_model(1.0, 0.5, 32);
  const auto g = svv::first_field(svv::simulate_path(other, 7, 0), other);
  EXPECT_THROW(acc.add(g), svv::InvalidArgument);
  EXPECT_THROW(acc.merge(svv::ExplosionAccumulator(other.grid)), svv::InvalidArgument);
  acc.add(f);
  EXPECT_NO_THROW(acc.finalize(0.5));
  EXPECT_THROW(svv::explosion_stats({}, 0.5), svv::InvalidArgument);
}

TEST(Explosion, MergeMatchesSequential) {
  const auto model = oracle::rough_model(32);
  svv::ExplosionAccumulator whole(model.grid), left(model.grid), right(model.grid);
  for (std::uint64_t p = 0; p < 120; ++p) {
    const auto f = svv::first_field(svv::simulate_path(model, 13, p), model);
    whole.add(f);
    (p < 60 ? left : right).add(f);
  }
  left.merge(right);
  const auto a = whole.finalize(0.3);
  const auto b = left.finalize(0.3);
  for (std::size_t k = 0; k < a.tri.size(); ++k)
    EXPECT_NEAR(a.tri[k], b.tri[k], 1e-12 * std::max(1.0, std::abs(a.tri[k])));
}

TEST(Explosion, BarrierModelStatisticIsStable) {
  const auto model = oracle::rough_model(128);
  svv::ExplosionAccumulator first(model.grid), second(model.grid);
  for (std::uint64_t p = 0; p < 200; ++p)
    first.add(svv::first_field(svv::simulate_path(model, 29, p), model));
  for (std::uint64_t p = 200; p < 600; ++p)
    second.add(svv::first_field(svv::simulate_path(model, 29, p), model));
  const double m1 = first.finalize(0.3).max_value();
  const double m2 = second.finalize(0.3).max_value();
  EXPECT_GT(m1, 0.0);
  EXPECT_GT(m2 / m1, 0.75);
  EXPECT_LT(m2 / m1, 1.33);
}

TEST(SecondStats, NormalisationAndAlignment) {
  const svv::TimeGrid grid(1.0, 8);
  const IndexTriple q{1, 3, 6};
  std::vector<std::vector<svv::SecondDerivativeEntry>> per_path(2);
  per_path[0] = {{q, 0.4}};
  per_path[1] = {{q, -0.2}};
  const auto stats = svv::second_explosion_stats(grid, 0.3, per_path);
  ASSERT_EQ(stats.size(), 1u);
  const double tr = 5.0 / 8.0, ts = 3.0 / 8.0;
  const double want = 0.5 * (0.16 + 0.04) / std::pow(tr / ts, 0.4);
  EXPECT_NEAR(stats[0].value, want, 1e-14);
  EXPECT_EQ(stats[0].n_paths, 2u);

  per_path[1] = {{{2, 3, 6}, -0.2}};
  EXPECT_THROW(svv::second_explosion_stats(grid, 0.3, per_path), svv::InvalidArgument);
  per_path[1] = {{q, -0.2}, {q, 0.1}};
  EXPECT_THROW(svv::second_explosion_stats(grid, 0.3, per_path), svv::InvalidArgument);
  EXPECT_THROW(svv::second_explosion_stats(grid, 0.3, {}), svv::InvalidArgument);
}
