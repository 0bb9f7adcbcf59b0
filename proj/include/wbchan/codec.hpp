#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "wbchan/bits.hpp"
#include "wbchan/error.hpp"
#include "wbchan/prng.hpp"

namespace wbchan {

inline constexpr const char* kDefaultSyncSeq = "10101010";
inline constexpr int kDefaultLengthHeaderBits = 16;

/// Whiten a payload for slot-free asynchronous transmission: each
/// transmitted bit is payload[i] XOR prng[i]. Advances the stream by
/// payload.size() bits.
inline BitString xor_encode(const BitString& payload, PrngStream& prng) {
  BitString out;
  for (std::size_t i = 0; i < payload.size(); ++i) out.push_back(payload[i] ^ prng.next_bit());
  return out;
}

/// Inverse of xor_encode (XOR is an involution; the same seed recovers the
/// payload on the receiving side).
inline BitString xor_decode(const BitString& received, PrngStream& prng) {
  return xor_encode(received, prng);
}

struct Group2Result {
  std::vector<std::uint8_t> symbols;  // values in {0,1,2,3}
  bool padded = false;                // input had odd length; one 0 bit appended
};

/// Group bits into 2-bit symbols, first bit high-order: "01" -> 1.
inline Group2Result group2(const BitString& payload) {
  Group2Result r;
  r.symbols.reserve((payload.size() + 1) / 2);
  for (std::size_t i = 0; i + 1 < payload.size(); i += 2)
    r.symbols.push_back(static_cast<std::uint8_t>(2 * payload[i] + payload[i + 1]));
  if (payload.size() % 2 == 1) {
    r.symbols.push_back(static_cast<std::uint8_t>(2 * payload[payload.size() - 1]));
    r.padded = true;
  }
  return r;
}

inline BitString ungroup2(const std::vector<std::uint8_t>& symbols) {
  BitString out;
  for (auto s : symbols) {
    if (s > 3) throw CodecError("symbol out of range");
    out.push_back((s >> 1) & 1);
    out.push_back(s & 1);
  }
  return out;
}

/// A framed transmission: pre-negotiated synchronization sequence, an
/// optional big-endian length header, then the payload.
struct Frame {
  BitString sync_seq;
  int length_header_bits = 0;  // 0 = fixed-length mode (no header on the wire)
  BitString payload;

  std::size_t wire_size() const {
    return sync_seq.size() + static_cast<std::size_t>(length_header_bits) + payload.size();
  }
};

/// Serialize sync_seq || length header || payload. In variable-length mode
/// the payload must fit the header: size < 2^n_len.
inline BitString frame(const BitString& payload, const BitString& sync_seq, int n_len) {
  if (n_len < 0 || n_len > 32) throw CodecError("length header bits out of range");
  BitString out = sync_seq;
  if (n_len > 0) {
    if (n_len < 32 && payload.size() >= (std::size_t{1} << n_len))
      throw CodecError("payload too long for length header");
    for (int k = n_len - 1; k >= 0; --k)
      out.push_back(static_cast<int>((payload.size() >> k) & 1));
  }
  out.append(payload);
  return out;
}

enum class DeframeStatus { ok, no_match, truncated };

struct DeframeResult {
  DeframeStatus status = DeframeStatus::no_match;
  Frame frame;
  std::size_t start_index = 0;  // index of the first 1 the scan aligned on
};

/// Scan a received stream for a frame. Alignment starts at the first 1; if
/// the aligned prefix does not equal sync_seq the caller should discard the
/// round and re-arm. A stream that ends before a complete frame reports
/// truncated.
///
/// fixed_payload_len applies only when n_len == 0; by default the remainder
/// of the stream is taken as the payload.
inline DeframeResult deframe(const BitString& stream, const BitString& sync_seq, int n_len,
                             std::optional<std::size_t> fixed_payload_len = std::nullopt) {
  DeframeResult r;
  std::size_t start = 0;
  while (start < stream.size() && stream[start] == 0) ++start;
  r.start_index = start;
  if (start == stream.size()) {
    r.status = DeframeStatus::truncated;  // nothing but zeros: no round started
    return r;
  }
  if (stream.size() - start < sync_seq.size()) {
    r.status = DeframeStatus::truncated;
    return r;
  }
  for (std::size_t i = 0; i < sync_seq.size(); ++i) {
    if (stream[start + i] != sync_seq[i]) {
      r.status = DeframeStatus::no_match;
      return r;
    }
  }
  std::size_t pos = start + sync_seq.size();
  std::size_t payload_len;
  if (n_len > 0) {
    if (stream.size() - pos < static_cast<std::size_t>(n_len)) {
      r.status = DeframeStatus::truncated;
      return r;
    }
    payload_len = 0;
    for (int k = 0; k < n_len; ++k) payload_len = (payload_len << 1) | stream[pos + static_cast<std::size_t>(k)];
    pos += static_cast<std::size_t>(n_len);
  } else {
    payload_len = fixed_payload_len.value_or(stream.size() - pos);
  }
  if (stream.size() - pos < payload_len) {
    r.status = DeframeStatus::truncated;
    return r;
  }
  r.status = DeframeStatus::ok;
  r.frame.sync_seq = sync_seq;
  r.frame.length_header_bits = n_len;
  r.frame.payload = stream.slice(pos, payload_len);
  return r;
}

/// Seeded random payload with a given ones ratio (Bernoulli per bit).
inline BitString random_payload(std::size_t n_bits, std::uint64_t seed, double ones_ratio = 0.5) {
  U64Stream rng(seed);
  BitString out;
  for (std::size_t i = 0; i < n_bits; ++i) out.push_back(rng.next_bernoulli(ones_ratio) ? 1 : 0);
  return out;
}

}  // namespace wbchan
