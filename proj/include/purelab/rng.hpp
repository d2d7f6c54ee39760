#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "purelab/common.hpp"

namespace purelab {

// One root seed fans out into named, index-addressable substreams.
//
// Derivation (fixed, part of the reproducibility contract):
//   h0 = fnv1a64(tag bytes)
//   s  = splitmix64(splitmix64(root ^ h0) + index)
// and s seeds a std::mt19937_64, whose output sequence is fully specified
// by the standard. Distinct (tag, index) pairs give independent streams for
// all practical purposes; identical inputs give bit-identical streams.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ fnv1a64(tag)) + index);
}

// Inverse standard normal cdf, Wichura's AS 241 double-precision rational
// approximation (relative error below 1e-15 on (0,1)).
double inv_norm_cdf(double p);

// Deterministic double-precision stream on top of mt19937_64.
// Uniforms use the top 53 bits; normals are inverse-cdf transforms of one
// uniform each, so no library distribution with unspecified algorithms is
// involved and stream consumption is one draw per normal.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng substream(std::uint64_t root, std::string_view tag,
                       std::uint64_t index = 0) {
    return Rng(derive_seed(root, tag, index));
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1), safe as an inverse-cdf argument.
  double uniform_open() { return uniform() + 0x1.0p-54; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return inv_norm_cdf(uniform_open()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Fills sequentially from the stream; the transform itself may run on
  // worker threads since it is elementwise.
  void fill_normal(double* data, std::ptrdiff_t n, double sd, int threads = 1);

  void fill_normal(Mat& m, double sd, int threads = 1) {
    fill_normal(m.data(), m.size(), sd, threads);
  }
  void fill_normal(Vec& v, double sd, int threads = 1) {
    fill_normal(v.data(), v.size(), sd, threads);
  }

  // Random sign in {-1, +1}.
  double rademacher() { return uniform() < 0.5 ? -1.0 : 1.0; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Substream tags used by the harness. Centralized so tests can assert the
// streams are distinct and the derivation never drifts.
namespace stream {
inline constexpr std::string_view kDict = "dict";
inline constexpr std::string_view kWStar = "wstar";
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kData = "data";
inline constexpr std::string_view kTrainRho = "train-rho";
inline constexpr std::string_view kEval = "eval";
inline constexpr std::string_view kAttack = "attack";
inline constexpr std::string_view kNtk = "ntk";
}  // namespace stream

}  // namespace purelab
