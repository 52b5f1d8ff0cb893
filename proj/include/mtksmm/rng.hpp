#pragma once

#include <cstdint>
#include <random>

namespace mtksmm {

/// Stream identifiers. Every random draw in the library comes from a stream
/// keyed by (seed, tag, a, b), so results do not depend on generation order.
enum class StreamTag : std::uint64_t {
  init_sample_latent = 1,
  init_task_latent = 2,
  task_truth = 3,
  sample_draw = 4,
  task_split = 5,
};

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0,
                                    std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(tag));
  h = mix64(h ^ a);
  return mix64(h ^ (b + 0x632be59bd9b4e019ULL));
}

/// Portable random stream: std::mt19937_64 output is fixed by the standard,
/// and the conversions below avoid the implementation-defined std
/// distributions.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0)
      : engine_(stream_seed(seed, tag, a, b)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal();

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mtksmm
