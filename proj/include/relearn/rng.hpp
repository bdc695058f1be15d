#pragma once

#include <cstdint>
#include <vector>

namespace relearn {

// Finalizer from the splitmix64 generator. Bijective on 64-bit values.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// splitmix64. Chosen over std::mt19937 because the standard library's
// distribution adaptors are implementation-defined; this generator plus the
// helpers below produce identical streams on every platform and compiler.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits, the full double mantissa.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t next_below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  int next_index(int n) { return static_cast<int>(next_below(static_cast<std::uint64_t>(n))); }

  // Independent child stream. Mixing both inputs keeps children decorrelated
  // even for adjacent seeds or adjacent stream ids.
  SplitMix64 split(std::uint64_t stream) const {
    return SplitMix64(mix64(state_ ^ mix64(stream ^ 0xA3EC4E93C5A1B6F2ULL)));
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream ^ 0xA3EC4E93C5A1B6F2ULL));
}

// Fisher-Yates, driven by next_below so the permutation is platform-stable.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = rng.next_below(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace relearn
