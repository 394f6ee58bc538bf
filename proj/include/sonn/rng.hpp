#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace sonn {

// Counter-based PRNG. Every draw is a pure function of (seed, stream,
// counter), so values can be generated in any order, from any thread, and
// still come out identical. All seeded behaviour in the library goes through
// this: patch sampling, shuffles, weight init, and Gaussian noise.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Combines up to three indices into one stream id.
constexpr std::uint64_t stream_key(std::uint64_t a, std::uint64_t b = 0,
                                   std::uint64_t c = 0) noexcept {
  return mix64(a ^ mix64(b ^ mix64(c)));
}

// Stream tags. Each seeded consumer draws from its own namespace so a single
// user seed never aliases between, say, weight init and noise generation.
namespace stream {
inline constexpr std::uint64_t init = 0x01;
inline constexpr std::uint64_t split = 0x02;
inline constexpr std::uint64_t shuffle = 0x03;
inline constexpr std::uint64_t patches = 0x04;
inline constexpr std::uint64_t train_noise = 0x05;
inline constexpr std::uint64_t val_noise = 0x06;
inline constexpr std::uint64_t eval_noise = 0x07;
inline constexpr std::uint64_t synth = 0x08;
}  // namespace stream

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(mix64(seed) ^ stream_key(stream))) {}

  std::uint64_t bits(std::uint64_t i) const noexcept {
    return mix64(key_ + i * kGolden);
  }

  // Uniform in [0, 1).
  double unit01(std::uint64_t i) const noexcept {
    return static_cast<double>(bits(i) >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log() argument.
  double open01(std::uint64_t i) const noexcept {
    return static_cast<double>((bits(i) >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). 128-bit multiply avoids modulo bias at any
  // realistic range.
  std::uint64_t below(std::uint64_t i, std::uint64_t n) const noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(i)) * n) >> 64);
  }

  // Standard normal via Box-Muller; one value per counter, drawing the pair
  // of uniforms from sub-counters 2i and 2i+1.
  double gaussian(std::uint64_t i) const noexcept {
    const double u1 = open01(2 * i);
    const double u2 = unit01(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

// In-place Fisher-Yates keyed by the rng. Bit-identical on every platform.
template <class T>
void seeded_shuffle(std::vector<T>& v, const CounterRng& rng) {
  std::uint64_t ctr = 0;
  for (std::size_t j = v.size(); j > 1; --j) {
    const std::size_t k = static_cast<std::size_t>(rng.below(ctr++, j));
    std::swap(v[j - 1], v[k]);
  }
}

}  // namespace sonn
