#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <utility>

namespace polarsim {

/// Counter-based splitmix64 stream.
///
/// Every stochastic decision in a run draws from a stream whose key is derived
/// from (seed, branch, timestep, stage, agent, attempt). Nothing carries a
/// mutable cursor across stages, so the outcome of a run never depends on the
/// order in which worker threads execute agent tasks, and the whole generator
/// state of a world is just its (seed, branch) pair.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t key) : state_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Fisher-Yates shuffle with this stream (std::shuffle is not portable
  /// across standard libraries).
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t state() const { return state_; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Stable 64-bit hash of a label (FNV-1a then mixed).
std::uint64_t label_hash(std::string_view label);

/// Folds a sequence of key parts into one stream key.
std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts);

inline RandomStream derive_stream(std::initializer_list<std::uint64_t> parts) {
  return RandomStream(derive_key(parts));
}

}  // namespace polarsim
