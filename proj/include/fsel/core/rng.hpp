#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fsel/error.hpp"

namespace fsel {

using RealVector = std::vector<double>;

// SplitMix64 finalizer. Used to turn (master_seed, stream_id) into the seed of
// an independent engine.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream seed = splitmix64(splitmix64(master) ^ splitmix64(stream + golden)).
// Two rounds on each input so that nearby (master, stream) pairs land far
// apart before they are combined.
constexpr std::uint64_t mix_stream_seed(std::uint64_t master_seed,
                                        std::uint64_t stream_id) noexcept {
  const std::uint64_t a = splitmix64(splitmix64(master_seed));
  const std::uint64_t b = splitmix64(stream_id + 0x632BE59BD9B4E019ULL);
  return splitmix64(a ^ b);
}

// Deterministic random stream. A stream is identified by (master_seed,
// stream_id); the engine is std::mt19937_64, whose output sequence is fixed by
// the standard. Uniform and Gaussian transforms are implemented here rather
// than through <random> distributions, which are implementation-defined.
//
// One stream per thread / trial; never share a stream between threads.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : master_seed_(master_seed),
        stream_id_(stream_id),
        engine_(mix_stream_seed(master_seed, stream_id)) {}

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  // Child stream; deterministic in (master_seed, stream_id, key).
  RngStream derive(std::uint64_t key) const {
    return RngStream(master_seed_, splitmix64(stream_id_ ^ splitmix64(key + 1)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open_zero() { return 1.0 - uniform(); }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open_zero();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw PreconditionError("RngStream::below: n must be positive");
    // Lemire-free rejection keeps the draw unbiased and simple.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = 0;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RealVector sample_std_gaussian_vector(RngStream& rng, std::size_t n) {
  if (n == 0) throw EmptyDimensionError("sample_std_gaussian_vector: n must be >= 1");
  RealVector out(n);
  for (auto& v : out) v = rng.normal();
  return out;
}

}  // namespace fsel
