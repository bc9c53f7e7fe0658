// svv: simulation and verification engine for sandwiched Volterra volatility.
//
// Subcommands:
//   simulate        simulate paths, write paths.csv and a band summary
//   malliavin-check evaluate derivative formulas against bump oracles
//   kernel-check    kernel certificate and limit constant diagnostics
//   skew            ATM skew term structure, power-law fit, limit comparison

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "svv/config.hpp"
#include "svv/io.hpp"
#include "svv/malliavin.hpp"
#include "svv/model.hpp"
#include "svv/parallel.hpp"
#include "svv/pricing.hpp"
#include "svv/rng.hpp"
#include "svv/simulate.hpp"
#include "svv/skewlab.hpp"

namespace {

struct CliArgs {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  bool antithetic = false;
  bool force = false;
};

const char* kUsage =
    "usage: svv <simulate | malliavin-check | kernel-check | skew> --config <path>\n"
    "           [--seed <u64>] [--out <dir>] [--threads <k>] [--antithetic] [--force]\n";

CliArgs parse_args(int argc, char** argv) {
  if (argc < 2) throw svv::InvalidArgument("missing subcommand");
  CliArgs args;
  args.command = argv[1];
  for (int i = 2; i < argc; ++i) {
    const std::string flag = argv[i];
    const auto value = [&]() -> std::string {
      if (i + 1 >= argc) throw svv::InvalidArgument("flag " + flag + " needs a value");
      return argv[++i];
    };
    if (flag == "--config") {
      args.config_path = value();
    } else if (flag == "--seed") {
      const std::string v = value();
      char* end = nullptr;
      args.seed = std::strtoull(v.c_str(), &end, 10);
      if (end == v.c_str() || *end != '\0')
        throw svv::InvalidArgument("--seed expects an unsigned integer");
    } else if (flag == "--out") {
      args.out = value();
    } else if (flag == "--threads") {
      const std::string v = value();
      char* end = nullptr;
      const unsigned long t = std::strtoul(v.c_str(), &end, 10);
      if (end == v.c_str() || *end != '\0')
        throw svv::InvalidArgument("--threads expects an unsigned integer");
      args.threads = static_cast<unsigned>(t);
    } else if (flag == "--antithetic") {
      args.antithetic = true;
    } else if (flag == "--force") {
      args.force = true;
    } else {
      throw svv::InvalidArgument("unknown flag " + flag);
    }
  }
  if (args.config_path.empty()) throw svv::InvalidArgument("--config is required");
  return args;
}

svv::RunConfig load_with_overrides(const CliArgs& args) {
  svv::RunConfig cfg = svv::load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out) cfg.output_dir = *args.out;
  if (args.threads) cfg.threads = *args.threads;
  if (args.antithetic) cfg.antithetic = true;
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Deterministic index draw for sampling pairs/triples, independent of any
// global RNG state.
std::uint64_t draw_index(std::uint64_t seed, std::uint64_t tag, std::uint64_t k,
                         std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t r = svv::splitmix64(svv::derive_seed(seed, tag) + 0x9E3779B97F4A7C15ull * k);
  return lo + r % (hi - lo);
}

int cmd_simulate(const svv::RunConfig& cfg, const CliArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const svv::SandwichModel model = svv::build_model(cfg);
  svv::ensure_output_dir(cfg.output_dir, args.force);

  svv::PathCsvWriter writer(cfg.output_dir + "/paths.csv");
  svv::SandwichAccumulator stats;

  // Simulate in waves of chunks so memory stays bounded while the CSV rows
  // still come out in path order regardless of the thread count.
  const std::size_t chunk = cfg.chunk;
  const std::size_t total_chunks = svv::num_chunks(cfg.n_paths, chunk);
  const std::size_t wave_chunks =
      std::max<std::size_t>(2 * svv::effective_threads(cfg.threads), 4);
  for (std::size_t c0 = 0; c0 < total_chunks; c0 += wave_chunks) {
    const std::size_t c1 = std::min(total_chunks, c0 + wave_chunks);
    const std::size_t p0 = c0 * chunk;
    const std::size_t p1 = std::min<std::size_t>(cfg.n_paths, c1 * chunk);
    std::vector<std::vector<svv::PathBundle>> slots(c1 - c0);
    svv::parallel_chunks(p1 - p0, chunk, cfg.threads,
                         [&](std::size_t c, std::size_t b, std::size_t e) {
      std::vector<svv::PathBundle> local;
      local.reserve(e - b);
      for (std::size_t k = b; k < e; ++k)
        local.push_back(svv::simulate_path(model, cfg.seed, p0 + k));
      slots[c] = std::move(local);
    });
    for (auto& slot : slots)
      for (const svv::PathBundle& p : slot) {
        writer.add(model.grid, p);
        stats.add(model, p);
      }
  }
  writer.close();

  const svv::SandwichStats s = stats.finalize();
  std::printf("simulate: paths=%zu steps=%zu seed=%llu\n", s.n_paths, model.grid.n,
              static_cast<unsigned long long>(cfg.seed));
  std::printf("band: violations=%zu min_gap_lower=%.6g min_gap_upper=%.6g\n", s.violations,
              s.min_gap_lower, s.min_gap_upper);
  std::printf("inv_gap_moments: m1=%.6g m2=%.6g m3=%.6g m4=%.6g\n", s.inv_gap_moments[0],
              s.inv_gap_moments[1], s.inv_gap_moments[2], s.inv_gap_moments[3]);
  std::printf("config_digest=%s elapsed=%.2fs\n", svv::config_digest(cfg).c_str(),
              seconds_since(t0));
  return s.violations == 0 ? 0 : 3;
}

int cmd_kernel_check(const svv::RunConfig& cfg, const CliArgs&) {
  const auto t0 = std::chrono::steady_clock::now();
  const svv::KernelSpec& kernel = cfg.kernel;
  const svv::TimeGrid& grid = cfg.grid;

  const svv::WeightTable w = svv::build_weight_table(kernel, grid);
  double mass = 0.0, var = 0.0;
  for (std::size_t j = 0; j < grid.n; ++j) {
    const double wj = w.at(grid.n, j);
    mass += wj * grid.dt();
    var += wj * wj * grid.dt();
  }
  std::printf("kernel-check: family=%s effective_H=%.6g grid T=%.6g n=%zu\n",
              kernel.family == svv::KernelFamily::PowerSum ? "power_sum" : "tabulated",
              kernel.effective_H, grid.T, grid.n);
  std::printf("weight_mass(T)=%.12g discrete_var(T)=%.12g\n", mass, var);
  if (kernel.family == svv::KernelFamily::PowerSum) {
    double mass_ref = 0.0, var_ref = 0.0;
    for (std::size_t k = 0; k < kernel.alphas.size(); ++k) {
      mass_ref += kernel.alphas[k] * std::pow(grid.T, kernel.hursts[k] + 0.5) /
                  (kernel.hursts[k] + 0.5);
      for (std::size_t l = 0; l < kernel.alphas.size(); ++l)
        var_ref += kernel.alphas[k] * kernel.alphas[l] *
                   std::pow(grid.T, kernel.hursts[k] + kernel.hursts[l]) /
                   (kernel.hursts[k] + kernel.hursts[l]);
    }
    std::printf("exact_mass(T)=%.12g exact_var(T)=%.12g var_rel_gap=%.3g\n", mass_ref, var_ref,
                std::abs(var - var_ref) / var_ref);
  }

  const double lambda = cfg.kernel_lambda > 0.0 ? cfg.kernel_lambda : kernel.effective_H / 2.0;
  const svv::TimeGrid coarse(grid.T, std::max<std::size_t>(grid.n / 2, 2));
  const double cert = svv::holder_certificate(kernel, grid, lambda);
  const double cert_coarse = svv::holder_certificate(kernel, coarse, lambda);
  std::printf("holder_certificate(lambda=%.4g): n=%zu -> %.6g, n=%zu -> %.6g, growth=%.4g\n",
              lambda, coarse.n, cert_coarse, grid.n, cert, cert / cert_coarse);

  const double ky = svv::limit_constant(kernel);
  std::printf("limit_constant=%.12g\n", ky);
  std::printf("elapsed=%.2fs\n", seconds_since(t0));
  return 0;
}

int cmd_malliavin_check(const svv::RunConfig& cfg, const CliArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const svv::SandwichModel model = svv::build_model(cfg);
  svv::ensure_output_dir(cfg.output_dir, args.force);
  const std::size_t n = model.grid.n;
  if (n < 24) throw svv::InvalidArgument("malliavin-check needs grid.steps >= 24");

  // First-derivative field of path 0, exported in full.
  const svv::PathBundle path0 = svv::simulate_path(model, cfg.seed, 0);
  const svv::MalliavinField field0 = svv::first_field(path0, model);
  {
    auto out = svv::open_output(cfg.output_dir + "/d1_sample.csv");
    svv::write_d1_csv(out, field0);
  }

  // Bump consistency across random pairs on a handful of paths.
  const std::size_t n_bump_paths = 10;
  std::vector<svv::MalliavinField> bump_fields;
  bump_fields.push_back(field0);
  for (std::size_t p = 1; p < n_bump_paths; ++p)
    bump_fields.push_back(svv::first_field(svv::simulate_path(model, cfg.seed, p), model));
  std::vector<double> errs;
  errs.reserve(cfg.mall_pairs);
  for (std::size_t k = 0; k < cfg.mall_pairs; ++k) {
    const std::size_t t = draw_index(cfg.seed, 101, k, 12, n + 1);
    const std::size_t j = draw_index(cfg.seed, 102, k, 0, t - 11);
    const std::size_t p = k % n_bump_paths;
    const double bump = svv::bump_first(model, cfg.seed, p, j, t, cfg.mall_epsilon);
    const double ref = bump_fields[p].at(t, j);
    errs.push_back(std::abs(bump - ref) / (std::abs(ref) + 1e-8));
  }
  std::sort(errs.begin(), errs.end());
  const double bump_median = errs[errs.size() / 2];

  // Second-derivative entries vs iterated double bumps.
  const std::size_t n_triple_paths = 5;
  std::vector<svv::IndexTriple> triples;
  for (std::size_t k = 0; k < cfg.mall_triples; ++k) {
    const std::size_t t = draw_index(cfg.seed, 201, k, 23, n + 1);
    const std::size_t r = draw_index(cfg.seed, 202, k, 0, t - 11);
    const std::size_t s = draw_index(cfg.seed, 203, k, 0, t - 11);
    triples.push_back({r, s, t});
  }
  std::vector<std::pair<std::uint64_t, std::vector<svv::SecondDerivativeEntry>>> d2_rows;
  std::vector<double> errs2;
  const double e2 = cfg.mall_epsilon2;
  for (std::size_t p = 0; p < n_triple_paths; ++p) {
    const svv::PathBundle base = p == 0 ? path0 : svv::simulate_path(model, cfg.seed, p);
    const svv::MalliavinField& f = p == 0 ? field0 : bump_fields[p];
    const auto entries = svv::second_entries(base, model, f, triples);
    d2_rows.emplace_back(p, entries);
    for (std::size_t k = p; k < triples.size(); k += n_triple_paths) {
      const svv::IndexTriple q = triples[k];
      const double y00 = base.Y[q.t];
      const double yr = svv::simulate_path_bumped(model, cfg.seed, p, q.r, e2).Y[q.t];
      const double ys = svv::simulate_path_bumped(model, cfg.seed, p, q.s, e2).Y[q.t];
      const double yrs = svv::simulate_path_bumped2(model, cfg.seed, p, q.r, e2, q.s, e2).Y[q.t];
      const double fd = (yrs - yr - ys + y00) / (e2 * e2);
      errs2.push_back(std::abs(fd - entries[k].value) / (std::abs(entries[k].value) + 1e-8));
    }
  }
  std::sort(errs2.begin(), errs2.end());
  const double bump2_median = errs2.empty() ? 0.0 : errs2[errs2.size() / 2];
  {
    auto out = svv::open_output(cfg.output_dir + "/d2_entries.csv");
    svv::write_d2_csv(out, d2_rows);
  }

  // Explosion statistic over the full path budget, streamed.
  const std::size_t n_fields = std::max<std::size_t>(cfg.n_paths, 100);
  const std::size_t chunk = 64;
  const std::size_t chunks = svv::num_chunks(n_fields, chunk);
  std::vector<svv::ExplosionAccumulator> parts(chunks, svv::ExplosionAccumulator(model.grid));
  svv::parallel_chunks(n_fields, chunk, cfg.threads,
                       [&](std::size_t c, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      parts[c].add(svv::first_field(svv::simulate_path(model, cfg.seed, k), model));
  });
  svv::ExplosionAccumulator total(model.grid);
  for (const auto& part : parts) total.merge(part);
  const svv::ExplosionStats stats = total.finalize(model.kernel.effective_H);
  {
    auto out = svv::open_output(cfg.output_dir + "/explosion_stats.csv");
    svv::write_stats_csv(out, stats);
  }

  const bool pass1 = bump_median < 0.02;
  const bool pass2 = bump2_median < 0.05;
  auto summary = svv::open_output(cfg.output_dir + "/malliavin_summary.txt");
  const auto line = [&](const std::string& s) {
    summary << s << '\n';
    std::printf("%s\n", s.c_str());
  };
  char buf[256];
  std::snprintf(buf, sizeof(buf), "bump_median_rel_err=%.6g over %zu pairs (gate 0.02): %s",
                bump_median, errs.size(), pass1 ? "PASS" : "FAIL");
  line(buf);
  std::snprintf(buf, sizeof(buf), "double_bump_median_rel_err=%.6g over %zu triples (gate 0.05): %s",
                bump2_median, errs2.size(), pass2 ? "PASS" : "FAIL");
  line(buf);
  std::snprintf(buf, sizeof(buf), "explosion_stat_max=%.6g over %zu fields", stats.max_value(),
                stats.n_fields);
  line(buf);
  std::snprintf(buf, sizeof(buf), "config_digest=%s elapsed=%.2fs",
                svv::config_digest(cfg).c_str(), seconds_since(t0));
  line(buf);
  summary.flush();
  return (pass1 && pass2) ? 0 : 3;
}

int cmd_skew(const svv::RunConfig& cfg, const CliArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const svv::SandwichModel model = svv::build_model(cfg);
  svv::ensure_output_dir(cfg.output_dir, args.force);

  svv::SkewOptions opts;
  opts.steps_per_tau = cfg.steps_per_tau;
  opts.dkappa_scale = cfg.dkappa_scale;
  opts.antithetic = cfg.antithetic;
  opts.threads = cfg.threads;
  opts.chunk = cfg.chunk;

  const svv::SkewReport rep = svv::make_skew_report(model, cfg.taus, cfg.n_paths, cfg.seed, opts,
                                                    svv::config_digest(cfg));
  {
    auto out = svv::open_output(cfg.output_dir + "/skew_report.csv");
    svv::write_skew_csv(out, rep.points);
  }
  {
    auto out = svv::open_output(cfg.output_dir + "/skew_fit.json");
    svv::write_skew_json(out, rep);
  }

  auto summary = svv::open_output(cfg.output_dir + "/skew_summary.txt");
  const auto line = [&](const std::string& s) {
    summary << s << '\n';
    std::printf("%s\n", s.c_str());
  };
  char buf[320];
  std::snprintf(buf, sizeof(buf), "skew ladder: %zu maturities, %zu paths each, antithetic=%s",
                rep.points.size(), cfg.n_paths, cfg.antithetic ? "on" : "off");
  line(buf);
  for (const svv::SkewPoint& p : rep.points) {
    std::snprintf(buf, sizeof(buf), "  tau=%-10.6g skew=%-12.6g stderr=%-10.3g dkappa=%.4g",
                  p.tau, p.skew, p.stderr_, p.dkappa);
    line(buf);
  }
  if (rep.has_fit) {
    std::snprintf(buf, sizeof(buf), "fit: slope=%.4f intercept=%.4f r2=%.4f (n=%zu)",
                  rep.fit.slope, rep.fit.intercept, rep.fit.r_squared, rep.fit.n_used);
    line(buf);
  } else {
    line("fit: null (" + rep.fit_error + ")");
  }
  if (rep.has_limit) {
    std::snprintf(buf, sizeof(buf), "limit: K_Y=%.6g ratio=%.4f (theory 1.0)", rep.k_y,
                  rep.limit_ratio);
    line(buf);
  } else {
    line("limit: null (" + rep.limit_error + ")");
  }
  std::snprintf(buf, sizeof(buf), "config_digest=%s elapsed=%.2fs", rep.config_digest.c_str(),
                seconds_since(t0));
  line(buf);
  summary.flush();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CliArgs args;
  try {
    args = parse_args(argc, argv);
    const svv::RunConfig cfg = load_with_overrides(args);
    if (args.command == "simulate") return cmd_simulate(cfg, args);
    if (args.command == "malliavin-check") return cmd_malliavin_check(cfg, args);
    if (args.command == "kernel-check") return cmd_kernel_check(cfg, args);
    if (args.command == "skew") return cmd_skew(cfg, args);
    throw svv::InvalidArgument("unknown subcommand " + args.command);
  } catch (const svv::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const svv::InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n%s", e.what(), args.command.empty() ? kUsage : "");
    return 2;
  } catch (const svv::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 3;
  }
}
