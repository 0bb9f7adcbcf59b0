#pragma once

#include <cstdint>

namespace wbchan {

/// splitmix64 step; used to derive independent sub-seeds from one master
/// seed (trial seeds, payload seeds) without correlation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ (0xa0761d6478bd642full * (index + 1));
  splitmix64(s);
  return splitmix64(s);
}

/// Deterministic bit stream shared by both channel ends: xorshift64* with
/// one output bit per step (the multiplied state's top bit). Identical
/// seeds yield identical streams, so sender and receiver stay aligned by
/// counting emitted bits.
class PrngStream {
 public:
  explicit PrngStream(std::uint64_t seed)
      // xorshift requires a nonzero state
      : state_(seed ? seed : 0x9e3779b97f4a7c15ull), index_(0), seed_(seed) {}

  int next_bit() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    ++index_;
    return static_cast<int>((state_ * 0x2545f4914f6cdd1dull) >> 63);
  }

  /// Number of bits emitted so far; both parties compare this to stay
  /// index-aligned across resync boundaries.
  std::uint64_t index() const { return index_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t state_;
  std::uint64_t index_;
  std::uint64_t seed_;
};

/// Uniform u64 stream for payload generation and noise; not shared on the
/// wire, purely local determinism.
class U64Stream {
 public:
  explicit U64Stream(std::uint64_t seed) : state_(seed ^ 0x6a09e667f3bcc908ull) {
    splitmix64(state_);
  }
  std::uint64_t next() { return splitmix64(state_); }
  /// Uniform double in (0, 1].
  double next_unit() {
    std::uint64_t x = next() >> 11;
    if (x == 0) x = 1;
    return static_cast<double>(x) * 0x1.0p-53;
  }
  bool next_bernoulli(double p) { return next_unit() <= p; }

 private:
  std::uint64_t state_;
};

}  // namespace wbchan
