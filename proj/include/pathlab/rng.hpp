#pragma once

#include <cmath>
#include <cstdint>

#include "pathlab/common.hpp"

namespace pathlab {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
//
// Every 128-bit counter block maps to four independent 32-bit words through a
// pure function of (counter, key), so a draw is addressed by
// (seed, stream, draw index) with no sequential state. Identical addresses
// give identical output on every run and under any worker count, which is
// what makes path ensembles replayable and reductions schedule-independent.
struct PhiloxBlock {
  std::uint32_t x[4];
};

inline PhiloxBlock philox4x32_10(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2,
                                 std::uint32_t c3, std::uint32_t k0, std::uint32_t k1) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint64_t p0 = std::uint64_t(kM0) * c0;
    std::uint64_t p1 = std::uint64_t(kM1) * c2;
    std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    std::uint32_t n0 = hi1 ^ c1 ^ k0;
    std::uint32_t n1 = lo1;
    std::uint32_t n2 = hi0 ^ c3 ^ k1;
    std::uint32_t n3 = lo0;
    c0 = n0;
    c1 = n1;
    c2 = n2;
    c3 = n3;
    if (round < 9) {
      k0 += kW0;
      k1 += kW1;
    }
  }
  return PhiloxBlock{{c0, c1, c2, c3}};
}

// uint64 -> double in the open interval (0,1), 53-bit resolution.
inline double u64_to_unit_double(std::uint64_t v) {
  return (double(v >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// A splittable random source addressed by (seed, stream, counter).
// One counter block yields one Box-Muller pair, so Gaussian draws are a pure
// function of the address as well (no rejection).
class RngStream {
 public:
  RngStream() : seed_(0), stream_(0), draw_(0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0)
      : seed_(seed), stream_(stream), draw_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return draw_; }

  // Raw block at the current counter; advances the counter by one.
  PhiloxBlock next_block() {
    PhiloxBlock b =
        philox4x32_10(std::uint32_t(draw_), std::uint32_t(draw_ >> 32), std::uint32_t(stream_),
                      std::uint32_t(stream_ >> 32), std::uint32_t(seed_), std::uint32_t(seed_ >> 32));
    ++draw_;
    return b;
  }

  // Two independent N(0,1) variates from one block.
  void gaussian_pair(double& z0, double& z1) {
    PhiloxBlock b = next_block();
    double u1 = u64_to_unit_double((std::uint64_t(b.x[0]) << 32) | b.x[1]);
    double u2 = u64_to_unit_double((std::uint64_t(b.x[2]) << 32) | b.x[3]);
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    z0 = r * std::cos(a);
    z1 = r * std::sin(a);
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double z0, z1;
    gaussian_pair(z0, z1);
    spare_ = z1;
    have_spare_ = true;
    return z0;
  }

  // Fills v with iid N(0, scale^2). Each call starts a fresh block so that a
  // vector draw is addressable independently of any preceding scalar draws.
  void fill_gaussian(Vec& v, double scale = 1.0) {
    have_spare_ = false;
    int n = int(v.size());
    for (int i = 0; i + 1 < n; i += 2) {
      double z0, z1;
      gaussian_pair(z0, z1);
      v[i] = scale * z0;
      v[i + 1] = scale * z1;
    }
    if (n % 2 == 1) {
      double z0, z1;
      gaussian_pair(z0, z1);
      v[n - 1] = scale * z0;
    }
  }

  double uniform() {
    PhiloxBlock b = next_block();
    return u64_to_unit_double((std::uint64_t(b.x[0]) << 32) | b.x[1]);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t draw_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Deterministic stream id layout: jobs own disjoint path ranges and every
// nested estimator derives its own substream, so no two workers ever share a
// stream regardless of scheduling.
//
//   bits 63..48  job id        (checks, oracles, ...)
//   bits 47..24  path index    (outer Monte Carlo sample)
//   bits 23..12  node index    (check time / quadrature node / prefix id)
//   bits 11..0   replicate     (inner continuation replicate)
namespace streams {

inline std::uint64_t pack(std::uint64_t job, std::uint64_t path, std::uint64_t node = 0,
                          std::uint64_t replicate = 0) {
  if (job >= (1ull << 16) || path >= (1ull << 24) || node >= (1ull << 12) ||
      replicate >= (1ull << 12)) {
    throw ConfigError("rng stream id overflow: job/path/node/replicate out of range");
  }
  return (job << 48) | (path << 24) | (node << 12) | replicate;
}

}  // namespace streams

}  // namespace pathlab
