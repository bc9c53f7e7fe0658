#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace svv {

// Counter-based random stream built on the Philox4x32-10 block cipher.
//
// Stream layout: the 64-bit run seed is the cipher key; the 128-bit counter is
//   word0 = low 32 bits of the step index     word1 = high 32 bits of the step
//   word2 = low 32 bits of the path index     word3 = high 32 bits of the path
// so every (path, step) pair owns one block and can be generated in any order,
// from any thread, with identical output.  One block yields two unit normals,
// consumed as the two Brownian increments of that step.

namespace philox {

inline constexpr std::uint32_t kMult0 = 0xD2511F53u;
inline constexpr std::uint32_t kMult1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(std::array<std::uint32_t, 4>& c, std::uint32_t k0, std::uint32_t k1) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMult0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMult1) * c[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
}

// Ten-round Philox4x32 block function (reference constants and key schedule).
inline std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                          std::uint32_t key0, std::uint32_t key1) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key0 += kWeyl0;
      key1 += kWeyl1;
    }
    round_once(counter, key0, key1);
  }
  return counter;
}

}  // namespace philox

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent sub-seed for a tagged purpose (per-tau jobs, bump studies, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

// Uniform in (0,1) from 64 random bits; never returns 0 or 1, safe under
// log().  Odd multiples of 2^-53 are exactly representable, so no rounding
// can push the top value to 1.0 (53 mantissa bits would, at the top end).
inline double uniform01(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>(bits >> 12) * 0x1.0p-52 + 0x1.0p-53;
}

struct NormalPair {
  double z0 = 0.0;
  double z1 = 0.0;
};

// Two independent unit normals for (seed, path, step), by Box-Muller on one block.
inline NormalPair normal_pair(std::uint64_t seed, std::uint64_t path_index, std::uint64_t step) {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
      static_cast<std::uint32_t>(path_index), static_cast<std::uint32_t>(path_index >> 32)};
  const auto w = philox::block(ctr, static_cast<std::uint32_t>(seed),
                               static_cast<std::uint32_t>(seed >> 32));
  const double u = uniform01(w[0], w[1]);
  const double v = uniform01(w[2], w[3]);
  const double rad = std::sqrt(-2.0 * std::log(u));
  const double ang = 6.283185307179586476925286766559 * v;
  return {rad * std::cos(ang), rad * std::sin(ang)};
}

}  // namespace svv
