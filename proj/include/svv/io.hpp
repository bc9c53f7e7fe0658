#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "svv/errors.hpp"
#include "svv/kernel.hpp"
#include "svv/malliavin.hpp"
#include "svv/pricing.hpp"
#include "svv/simulate.hpp"
#include "svv/skewlab.hpp"

namespace svv {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Creates (or reuses) the output directory.  An existing non-empty directory
// is refused unless force is set, so runs cannot silently clobber each other.
inline void ensure_output_dir(const std::string& dir, bool force) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const fs::path p(dir);
  if (fs::exists(p, ec)) {
    if (!fs::is_directory(p, ec)) throw IoError("output path is not a directory: " + dir);
    if (!force && fs::directory_iterator(p, ec) != fs::directory_iterator())
      throw IoError("output directory not empty (use --force): " + dir);
  } else {
    if (!fs::create_directories(p, ec) || ec)
      throw IoError("cannot create output directory: " + dir);
  }
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

// Streaming writer for simulated paths: "path,t,Z,Y,bprime".
class PathCsvWriter {
 public:
  explicit PathCsvWriter(const std::string& path) : out_(open_output(path)), path_(path) {
    out_ << "path,t,Z,Y,bprime\n";
  }

  void add(const TimeGrid& grid, const PathBundle& p) {
    for (std::size_t i = 0; i <= grid.n; ++i)
      out_ << p.path_index << ',' << format_double(grid.node(i)) << ','
           << format_double(p.Z[i]) << ',' << format_double(p.Y[i]) << ','
           << format_double(p.bprime[i]) << '\n';
    ++paths_;
  }

  std::size_t paths_written() const { return paths_; }

  void close() {
    out_.flush();
    if (!out_) throw IoError("write failure on " + path_);
    out_.close();
  }

 private:
  std::ofstream out_;
  std::string path_;
  std::size_t paths_ = 0;
};

inline void write_d1_csv(std::ostream& out, const MalliavinField& f) {
  out << "path,i,j,d1\n";
  for (std::size_t i = 1; i <= f.n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      out << f.path_index << ',' << i << ',' << j << ',' << format_double(f.at(i, j)) << '\n';
}

inline void write_d2_csv(std::ostream& out,
                         const std::vector<std::pair<std::uint64_t,
                                                     std::vector<SecondDerivativeEntry>>>& rows) {
  out << "path,r,s,t,d2\n";
  for (const auto& [path_index, entries] : rows)
    for (const SecondDerivativeEntry& e : entries)
      out << path_index << ',' << e.idx.r << ',' << e.idx.s << ',' << e.idx.t << ','
          << format_double(e.value) << '\n';
}

inline void write_stats_csv(std::ostream& out, const ExplosionStats& s) {
  out << "i,j,m\n";
  for (std::size_t i = 1; i <= s.grid.n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      out << i << ',' << j << ',' << format_double(s.at(i, j)) << '\n';
}

inline void write_prices_csv(std::ostream& out, const std::vector<PriceEstimate>& prices) {
  out << "tau,strike,price,stderr\n";
  for (const PriceEstimate& e : prices)
    out << format_double(e.tau) << ',' << format_double(e.strike) << ','
        << format_double(e.price) << ',' << format_double(e.stderr_) << '\n';
}

inline void write_skew_csv(std::ostream& out, const std::vector<SkewPoint>& points) {
  out << "tau,skew,stderr,dkappa\n";
  for (const SkewPoint& p : points)
    out << format_double(p.tau) << ',' << format_double(p.skew) << ','
        << format_double(p.stderr_) << ',' << format_double(p.dkappa) << '\n';
}

namespace detail {

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline void write_skew_json(std::ostream& out, const SkewReport& rep) {
  out << "{\n";
  if (rep.has_fit) {
    out << "  \"slope\": " << format_double(rep.fit.slope) << ",\n";
    out << "  \"intercept\": " << format_double(rep.fit.intercept) << ",\n";
    out << "  \"r_squared\": " << format_double(rep.fit.r_squared) << ",\n";
    out << "  \"n_used\": " << rep.fit.n_used << ",\n";
    out << "  \"fit_error\": null,\n";
  } else {
    out << "  \"slope\": null,\n  \"intercept\": null,\n  \"r_squared\": null,\n"
        << "  \"n_used\": 0,\n";
    out << "  \"fit_error\": \"" << detail::json_escape(rep.fit_error) << "\",\n";
  }
  out << "  \"k_y\": " << format_double(rep.k_y) << ",\n";
  if (rep.has_limit) {
    out << "  \"limit_ratio\": " << format_double(rep.limit_ratio) << ",\n";
    out << "  \"limit_error\": null,\n";
  } else {
    out << "  \"limit_ratio\": null,\n";
    out << "  \"limit_error\": \"" << detail::json_escape(rep.limit_error) << "\",\n";
  }
  out << "  \"n_points\": " << rep.points.size() << ",\n";
  out << "  \"config_digest\": \"" << rep.config_digest << "\"\n";
  out << "}\n";
}

// Reads a tabulated kernel from CSV "t,s,k" covering a full uniform square
// grid on [0, T]^2 (every node pair present, any row order).
inline TabulatedKernel read_tabulated_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open kernel CSV: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,s,k", 0) != 0)
    throw ValidationError(path, "kernel CSV must start with header \"t,s,k\"");

  struct Row {
    double t, s, k;
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Row r{};
    char extra = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf%c", &r.t, &r.s, &r.k, &extra) != 3)
      throw ValidationError(path + ":" + std::to_string(lineno), "malformed kernel CSV row");
    rows.push_back(r);
  }
  if (rows.empty()) throw ValidationError(path, "kernel CSV has no data rows");

  double tmax = 0.0;
  for (const Row& r : rows) tmax = std::max(tmax, std::max(r.t, r.s));
  if (!(tmax > 0.0)) throw ValidationError(path, "kernel CSV horizon must be positive");

  // Grid size from the smallest nonzero coordinate.
  double h = tmax;
  for (const Row& r : rows) {
    if (r.t > 1e-12 * tmax) h = std::min(h, r.t);
    if (r.s > 1e-12 * tmax) h = std::min(h, r.s);
  }
  const std::size_t m = static_cast<std::size_t>(std::llround(tmax / h));
  if (m < 1 || std::abs(tmax / h - static_cast<double>(m)) > 1e-6)
    throw ValidationError(path, "kernel CSV nodes are not on a uniform grid");

  std::vector<double> values((m + 1) * (m + 1), 0.0);
  std::vector<char> seen((m + 1) * (m + 1), 0);
  for (const Row& r : rows) {
    const double fi = r.t / h, fj = r.s / h;
    const auto i = static_cast<std::size_t>(std::llround(fi));
    const auto j = static_cast<std::size_t>(std::llround(fj));
    if (i > m || j > m || std::abs(fi - static_cast<double>(i)) > 1e-6 ||
        std::abs(fj - static_cast<double>(j)) > 1e-6)
      throw ValidationError(path, "kernel CSV nodes are not on a uniform grid");
    values[i * (m + 1) + j] = r.k;
    seen[i * (m + 1) + j] = 1;
  }
  for (char c : seen)
    if (!c) throw ValidationError(path, "kernel CSV grid is incomplete");
  return TabulatedKernel(tmax, m, std::move(values));
}

}  // namespace svv
