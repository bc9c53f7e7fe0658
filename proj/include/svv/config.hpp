#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "svv/errors.hpp"
#include "svv/io.hpp"
#include "svv/model.hpp"

namespace svv {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline double parse_double(const std::string& tok, const std::string& field) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || !std::isfinite(v))
    throw ValidationError(field, "expected a finite number, got \"" + tok + "\"");
  return v;
}

}  // namespace detail

// Line-oriented "[section]\nkey = value" configuration text.  Keys are
// addressed "section.key"; unknown keys are rejected after loading so typos
// cannot silently fall back to defaults.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, std::string origin) {
    ConfigFile cf;
    cf.origin_ = std::move(origin);
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ValidationError(cf.where(lineno), "unterminated section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ValidationError(cf.where(lineno), "empty section name");
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError(cf.where(lineno), "expected key = value");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty()) throw ValidationError(cf.where(lineno), "empty key");
      if (section.empty())
        throw ValidationError(cf.where(lineno), "key outside any [section]");
      const std::string full = section + "." + key;
      if (cf.entries_.count(full))
        throw ValidationError(cf.where(lineno), "duplicate key " + full);
      cf.entries_[full] = Entry{value, lineno, false};
    }
    return cf;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end())
      throw ValidationError(key, "missing required key (" + origin_ + ")");
    it->second.used = true;
    return it->second.value;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? get_string(key) : fallback;
  }

  double get_double(const std::string& key) { return detail::parse_double(get_string(key), addr(key)); }
  double get_double(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
  }

  std::uint64_t get_u64(const std::string& key) {
    const std::string tok = get_string(key);
    char* end = nullptr;
    const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0' || tok.front() == '-')
      throw ValidationError(addr(key), "expected an unsigned integer, got \"" + tok + "\"");
    return v;
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    return has(key) ? get_u64(key) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ValidationError(addr(key), "expected a boolean, got \"" + v + "\"");
  }

  std::vector<double> get_double_list(const std::string& key) {
    std::vector<double> out;
    for (const std::string& tok : detail::split_ws(get_string(key)))
      out.push_back(detail::parse_double(tok, addr(key)));
    if (out.empty()) throw ValidationError(addr(key), "expected a nonempty list");
    return out;
  }

  std::string addr(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return key;
    return origin_ + ":" + std::to_string(it->second.line) + ": " + key;
  }

  void reject_unknown() const {
    for (const auto& [key, entry] : entries_)
      if (!entry.used)
        throw ValidationError(origin_ + ":" + std::to_string(entry.line) + ": " + key,
                              "unknown configuration key");
  }

  const std::string& origin() const { return origin_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
  };
  std::string where(int line) const { return origin_ + ":" + std::to_string(line); }
  std::string origin_;
  std::map<std::string, Entry> entries_;
};

namespace detail {

inline TimeFn parse_timefn(ConfigFile& cf, const std::string& key, const std::string& fallback) {
  const std::string raw = cf.get_string(key, fallback);
  const std::vector<std::string> tok = split_ws(raw);
  const std::string field = cf.addr(key);
  if (tok.empty()) throw ValidationError(field, "empty time-function value");
  const auto need = [&](std::size_t n) {
    if (tok.size() != n + 1)
      throw ValidationError(field, "expected " + std::to_string(n) + " parameters after \"" +
                                       tok[0] + "\"");
  };
  if (tok[0] == "constant") {
    need(1);
    return TimeFn::constant(parse_double(tok[1], field));
  }
  if (tok[0] == "affine") {
    need(2);
    return TimeFn::affine(parse_double(tok[1], field), parse_double(tok[2], field));
  }
  if (tok[0] == "sinusoid") {
    need(4);
    return TimeFn::sinusoid(parse_double(tok[1], field), parse_double(tok[2], field),
                            parse_double(tok[3], field), parse_double(tok[4], field));
  }
  throw ValidationError(field, "unknown time-function family \"" + tok[0] +
                                   "\" (expected constant | affine | sinusoid)");
}

inline SpaceFn parse_spacefn(ConfigFile& cf, const std::string& key) {
  const std::string raw = cf.get_string(key, "zero");
  const std::vector<std::string> tok = split_ws(raw);
  const std::string field = cf.addr(key);
  if (tok.empty()) throw ValidationError(field, "empty drift-function value");
  if (tok[0] == "zero") {
    if (tok.size() != 1) throw ValidationError(field, "\"zero\" takes no parameters");
    return SpaceFn::zero();
  }
  const auto need2 = [&]() {
    if (tok.size() != 3) throw ValidationError(field, "expected 2 parameters after \"" + tok[0] + "\"");
  };
  if (tok[0] == "affine") {
    need2();
    return SpaceFn::affine(parse_double(tok[1], field), parse_double(tok[2], field));
  }
  if (tok[0] == "mean_revert") {
    need2();
    return SpaceFn::mean_revert(parse_double(tok[1], field), parse_double(tok[2], field));
  }
  throw ValidationError(field, "unknown drift-function family \"" + tok[0] +
                                   "\" (expected zero | affine | mean_revert)");
}

}  // namespace detail

// Fully resolved run configuration.  Defaults fill every optional key; the
// model-level invariants are validated before this struct is returned.
struct RunConfig {
  KernelSpec kernel;
  double kernel_lambda = 0.0;  // 0 = use effective_H / 2
  BoundFunctions bounds;
  SandwichDrift drift;
  double y0 = 0.5, x0 = 0.0, r = 0.0, rho = 0.0;
  TimeGrid grid;

  std::size_t n_paths = 10000;
  bool antithetic = false;
  std::size_t chunk = 256;

  std::vector<double> taus;
  std::size_t steps_per_tau = 128;
  double dkappa_scale = 0.05;

  std::size_t mall_pairs = 200;
  double mall_epsilon = 1e-4;
  std::size_t mall_triples = 50;
  double mall_epsilon2 = 1e-3;

  std::string output_dir = "out";
  std::uint64_t seed = 42;
  unsigned threads = 0;

  std::string source_path;
};

inline RunConfig load_config(const std::string& path) {
  ConfigFile cf = ConfigFile::load(path);
  RunConfig rc;
  rc.source_path = path;

  const std::string family = cf.get_string("kernel.family");
  try {
    if (family == "power_sum") {
      rc.kernel = KernelSpec::power_sum(cf.get_double_list("kernel.alphas"),
                                        cf.get_double_list("kernel.hursts"));
    } else if (family == "tabulated") {
      const std::string csv = cf.get_string("kernel.csv");
      const std::filesystem::path base = std::filesystem::path(path).parent_path();
      const std::filesystem::path resolved =
          std::filesystem::path(csv).is_absolute() ? std::filesystem::path(csv) : base / csv;
      auto table = std::make_shared<const TabulatedKernel>(read_tabulated_csv(resolved.string()));
      rc.kernel = KernelSpec::tabulated(std::move(table), cf.get_double("kernel.effective_h"));
    } else {
      throw ValidationError(cf.addr("kernel.family"),
                            "unknown kernel family \"" + family +
                                "\" (expected power_sum | tabulated)");
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ValidationError("kernel", e.what());
  }
  rc.kernel_lambda = cf.get_double("kernel.lambda", 0.0);

  rc.bounds.phi = detail::parse_timefn(cf, "bounds.phi", "constant 0.05");
  rc.bounds.psi = detail::parse_timefn(cf, "bounds.psi", "constant 1.0");

  rc.drift.theta1 = detail::parse_timefn(cf, "drift.theta1", "constant 0");
  rc.drift.theta2 = detail::parse_timefn(cf, "drift.theta2", "constant 0");
  rc.drift.gamma1 = cf.get_double("drift.gamma1", 1.0);
  rc.drift.gamma2 = cf.get_double("drift.gamma2", 1.0);
  rc.drift.a = detail::parse_spacefn(cf, "drift.a");

  rc.y0 = cf.get_double("model.y0");
  if (cf.has("model.x0") && cf.has("model.s0"))
    throw ValidationError(cf.addr("model.s0"), "give either model.x0 or model.s0, not both");
  if (cf.has("model.s0")) {
    const double s0 = cf.get_double("model.s0");
    if (!(s0 > 0.0)) throw ValidationError(cf.addr("model.s0"), "spot must be positive");
    rc.x0 = std::log(s0);
  } else {
    rc.x0 = cf.get_double("model.x0", 0.0);
  }
  rc.r = cf.get_double("model.r", 0.0);
  rc.rho = cf.get_double("model.rho", 0.0);

  const double horizon = cf.get_double("grid.horizon");
  const std::uint64_t steps = cf.get_u64("grid.steps");
  try {
    rc.grid = TimeGrid(horizon, steps);
  } catch (const InvalidArgument& e) {
    throw ValidationError(cf.addr("grid.steps"), e.what());
  }

  rc.n_paths = cf.get_u64("mc.n_paths", rc.n_paths);
  rc.antithetic = cf.get_bool("mc.antithetic", false);
  rc.chunk = cf.get_u64("mc.chunk", rc.chunk);
  if (rc.chunk == 0) throw ValidationError(cf.addr("mc.chunk"), "chunk size must be positive");

  if (cf.has("skew.taus")) {
    if (cf.has("skew.tau_max") || cf.has("skew.levels"))
      throw ValidationError(cf.addr("skew.taus"),
                            "give either skew.taus or skew.tau_max/levels, not both");
    rc.taus = cf.get_double_list("skew.taus");
  } else {
    const double tau_max = cf.get_double("skew.tau_max", horizon / 4.0);
    const std::uint64_t levels = cf.get_u64("skew.levels", 8);
    if (levels < 1) throw ValidationError(cf.addr("skew.levels"), "need at least one level");
    for (std::uint64_t q = 0; q < levels; ++q)
      rc.taus.push_back(tau_max * std::pow(2.0, -static_cast<double>(q)));
  }
  for (double tau : rc.taus)
    if (!(tau > 0.0))
      throw ValidationError(cf.addr(cf.has("skew.taus") ? "skew.taus" : "skew.tau_max"),
                            "maturities must be positive");
  rc.steps_per_tau = cf.get_u64("skew.steps_per_tau", rc.steps_per_tau);
  if (rc.steps_per_tau < 64)
    throw ValidationError(cf.addr("skew.steps_per_tau"), "need at least 64 steps per maturity");
  rc.dkappa_scale = cf.get_double("skew.dkappa_scale", rc.dkappa_scale);
  if (!(rc.dkappa_scale > 0.0))
    throw ValidationError(cf.addr("skew.dkappa_scale"), "must be positive");

  rc.mall_pairs = cf.get_u64("malliavin.pairs", rc.mall_pairs);
  rc.mall_epsilon = cf.get_double("malliavin.epsilon", rc.mall_epsilon);
  rc.mall_triples = cf.get_u64("malliavin.triples", rc.mall_triples);
  rc.mall_epsilon2 = cf.get_double("malliavin.epsilon2", rc.mall_epsilon2);

  rc.output_dir = cf.get_string("output.dir", rc.output_dir);
  rc.seed = cf.get_u64("run.seed", rc.seed);
  rc.threads = static_cast<unsigned>(cf.get_u64("run.threads", 0));

  cf.reject_unknown();

  // Module-level invariants checked at load time, with config-addressed fields.
  SandwichModel probe;
  probe.kernel = rc.kernel;
  probe.bounds = rc.bounds;
  probe.drift = rc.drift;
  probe.y0 = rc.y0;
  probe.x0 = rc.x0;
  probe.r = rc.r;
  probe.rho = rc.rho;
  probe.grid = rc.grid;
  validate_model(probe);
  return rc;
}

inline SandwichModel build_model(const RunConfig& rc, const ModelChecks& checks = {}) {
  return make_model(rc.kernel, rc.bounds, rc.drift, rc.y0, rc.x0, rc.r, rc.rho, rc.grid, checks);
}

namespace detail {

inline void dump_timefn(std::ostream& os, const char* name, const TimeFn& f) {
  os << name << '=' << static_cast<int>(f.family) << ' ' << format_double(f.c0) << ' '
     << format_double(f.c1) << ' ' << format_double(f.omega) << ' ' << format_double(f.phase)
     << '\n';
}

}  // namespace detail

// Canonical text form of everything that influences results; the digest is a
// 64-bit FNV-1a over it.  Output paths deliberately excluded.
inline std::string canonical_dump(const RunConfig& rc) {
  std::ostringstream os;
  os << "kernel.family=" << static_cast<int>(rc.kernel.family) << '\n';
  if (rc.kernel.family == KernelFamily::PowerSum) {
    os << "kernel.alphas=";
    for (double a : rc.kernel.alphas) os << format_double(a) << ' ';
    os << "\nkernel.hursts=";
    for (double h : rc.kernel.hursts) os << format_double(h) << ' ';
    os << '\n';
  } else {
    const TabulatedKernel& tab = *rc.kernel.table;
    os << "kernel.effective_h=" << format_double(rc.kernel.effective_H) << '\n';
    os << "kernel.table=" << format_double(tab.T) << ' ' << tab.m;
    for (double v : tab.values) os << ' ' << format_double(v);
    os << '\n';
  }
  detail::dump_timefn(os, "bounds.phi", rc.bounds.phi);
  detail::dump_timefn(os, "bounds.psi", rc.bounds.psi);
  detail::dump_timefn(os, "drift.theta1", rc.drift.theta1);
  detail::dump_timefn(os, "drift.theta2", rc.drift.theta2);
  os << "drift.gamma1=" << format_double(rc.drift.gamma1) << '\n';
  os << "drift.gamma2=" << format_double(rc.drift.gamma2) << '\n';
  os << "drift.a=" << static_cast<int>(rc.drift.a.family) << ' ' << format_double(rc.drift.a.p0)
     << ' ' << format_double(rc.drift.a.p1) << '\n';
  os << "model=" << format_double(rc.y0) << ' ' << format_double(rc.x0) << ' '
     << format_double(rc.r) << ' ' << format_double(rc.rho) << '\n';
  os << "grid=" << format_double(rc.grid.T) << ' ' << rc.grid.n << '\n';
  os << "mc=" << rc.n_paths << ' ' << rc.antithetic << ' ' << rc.chunk << '\n';
  os << "skew.taus=";
  for (double t : rc.taus) os << format_double(t) << ' ';
  os << '\n';
  os << "skew=" << rc.steps_per_tau << ' ' << format_double(rc.dkappa_scale) << '\n';
  os << "malliavin=" << rc.mall_pairs << ' ' << format_double(rc.mall_epsilon) << ' '
     << rc.mall_triples << ' ' << format_double(rc.mall_epsilon2) << '\n';
  os << "seed=" << rc.seed << '\n';
  return os.str();
}

inline std::string config_digest(const RunConfig& rc) {
  const std::string dump = canonical_dump(rc);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace svv
