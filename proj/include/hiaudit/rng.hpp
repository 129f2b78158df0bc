#pragma once

#include <cstdint>
#include <random>

namespace hiaudit {

// splitmix64 finaliser; used to fan a master seed out into independent streams.
std::uint64_t mix_seed(std::uint64_t x);

// Counter-based derivation: the same (master, stream, index) triple always
// yields the same seed, on every platform.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

// Named stream ids so call sites never collide.
namespace streams {
inline constexpr std::uint64_t kEnv = 1;
inline constexpr std::uint64_t kPolicy = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kReplay = 4;
inline constexpr std::uint64_t kEval = 5;
inline constexpr std::uint64_t kCosts = 6;
inline constexpr std::uint64_t kTrain = 7;
}  // namespace streams

// mt19937_64 with hand-rolled distributions. The std:: distributions are
// implementation defined, which would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (one draw per call, no cached state).
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace hiaudit
