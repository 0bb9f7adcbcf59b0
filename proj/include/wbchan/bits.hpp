#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wbchan/error.hpp"

namespace wbchan {

/// Ordered sequence of bits. Stored one bit per byte; payloads here are
/// small (kilobits), so compactness matters less than cheap indexing.
class BitString {
 public:
  BitString() = default;
  explicit BitString(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_)
      if (b > 1) throw CodecError("BitString values must be 0 or 1");
  }

  static BitString zeros(std::size_t n) { return BitString(std::vector<std::uint8_t>(n, 0)); }
  static BitString ones(std::size_t n) { return BitString(std::vector<std::uint8_t>(n, 1)); }

  /// Parse "0"/"1" characters, e.g. "10101010".
  static BitString from_string(std::string_view s) {
    BitString out;
    out.bits_.reserve(s.size());
    for (char c : s) {
      if (c == '0')
        out.bits_.push_back(0);
      else if (c == '1')
        out.bits_.push_back(1);
      else
        throw CodecError(std::string("invalid bit character '") + c + "'");
    }
    return out;
  }

  /// Parse a hex string (optionally 0x-prefixed). MSB-first per nibble:
  /// "0xD" -> 1101.
  static BitString from_hex(std::string_view s) {
    if (s.size() >= 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) s.remove_prefix(2);
    if (s.empty()) throw CodecError("empty hex payload");
    BitString out;
    out.bits_.reserve(s.size() * 4);
    for (char c : s) {
      int v;
      if (c >= '0' && c <= '9')
        v = c - '0';
      else if (c >= 'a' && c <= 'f')
        v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F')
        v = c - 'A' + 10;
      else
        throw CodecError(std::string("invalid hex character '") + c + "'");
      for (int k = 3; k >= 0; --k) out.bits_.push_back(static_cast<std::uint8_t>((v >> k) & 1));
    }
    return out;
  }

  /// MSB-first per byte.
  static BitString from_bytes(const std::vector<std::uint8_t>& bytes) {
    BitString out;
    out.bits_.reserve(bytes.size() * 8);
    for (auto b : bytes)
      for (int k = 7; k >= 0; --k) out.bits_.push_back(static_cast<std::uint8_t>((b >> k) & 1));
    return out;
  }

  std::string to_string() const {
    std::string s;
    s.reserve(bits_.size());
    for (auto b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  std::size_t size() const { return bits_.size(); }
  bool empty() const { return bits_.empty(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  std::uint8_t& operator[](std::size_t i) { return bits_[i]; }

  void push_back(int bit) { bits_.push_back(bit ? 1 : 0); }
  void append(const BitString& other) { bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end()); }

  BitString slice(std::size_t start, std::size_t len) const {
    if (start > bits_.size() || len > bits_.size() - start) throw CodecError("slice out of range");
    return BitString(std::vector<std::uint8_t>(bits_.begin() + static_cast<std::ptrdiff_t>(start),
                                               bits_.begin() + static_cast<std::ptrdiff_t>(start + len)));
  }

  std::size_t ones_count() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  friend bool operator==(const BitString& a, const BitString& b) = default;

  const std::vector<std::uint8_t>& raw() const { return bits_; }

 private:
  std::vector<std::uint8_t> bits_;
};

}  // namespace wbchan
