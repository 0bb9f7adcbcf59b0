#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <variant>

#include "wbchan/error.hpp"
#include "wbchan/medium.hpp"

namespace wbchan {

/// One shared file, one bit per slot (the base protocol).
struct SingleFileCfg {
  Primitive primitive = Primitive::fdatasync;  // sync_all | fsync | fdatasync
  std::uint64_t slot_ns = 0;           // 0 = auto: 2.5 * t_b_hat
  std::uint64_t receiver_sleep_ns = 0; // 0 = auto-fit to the slot, capped at 1.2 * t_b_hat
  std::uint64_t t_b_hat_ns = 0;        // calibrated flush latency; 0 = derive from slot
};

/// One shared page via msync; otherwise the single-file timing scheme.
struct SinglePageCfg {
  std::uint64_t slot_ns = 0;
  std::uint64_t receiver_sleep_ns = 0;
  std::uint64_t t_b_hat_ns = 0;
  std::uint32_t sync_len_bytes = 4096;  // msync length request; page-aligned by the kernel
};

/// Four files carry one 2-bit symbol per slot; the receiver measures all
/// four concurrently with a persistent worker pool.
struct MultiBitCfg {
  std::uint32_t files = 4;
  std::uint32_t workers = 4;
  std::uint64_t slot_ns = 0;
  std::uint64_t receiver_sleep_ns = 0;
  std::uint64_t t_b_hat_ns = 0;
};

/// Slotted asynchronous mode: units cycle round-robin, the receiver starts
/// one slot late and then never waits for the sender.
struct AsyncSlotCfg {
  std::uint32_t units = 8;
  Mode mode = Mode::file;
  std::uint64_t slot_ns = 0;  // 0 = auto: 1.5 * t_b_hat
  std::uint64_t t_b_hat_ns = 0;
};

/// Slot-free asynchronous mode: whitened bits over a large unit pool, the
/// sender's lead controlled by a t_s wait on zero bits and periodic
/// rendezvous.
struct AsyncFreeCfg {
  std::uint32_t units = 500;
  std::uint64_t t_s_ns = 20'000;
  std::uint32_t resync_period_bits = 20'000;
  std::uint64_t initial_sleep_ns = 3'000'000;
  std::uint64_t prng_seed = 42;

  /// Reported operating points: without the t_s wait the sender outruns
  /// the unit pool far sooner, so the period collapses.
  static std::uint32_t default_resync_period(std::uint64_t t_s_ns) {
    return t_s_ns == 0 ? 1'600 : 20'000;
  }
};

/// One unit per payload bit; sender and receiver phases never overlap.
struct OneShotCfg {
  std::uint32_t units = 0;  // 0 = size to the payload
  Mode mode = Mode::file;
  std::uint64_t max_receiver_lag_ns = 20'000'000'000ull;  // operational margin under the 30 s flusher
};

using StrategyConfig =
    std::variant<SingleFileCfg, SinglePageCfg, MultiBitCfg, AsyncSlotCfg, AsyncFreeCfg, OneShotCfg>;

inline const char* strategy_name(const StrategyConfig& s) {
  struct V {
    const char* operator()(const SingleFileCfg&) const { return "single_file"; }
    const char* operator()(const SinglePageCfg&) const { return "single_page"; }
    const char* operator()(const MultiBitCfg&) const { return "multi_bit"; }
    const char* operator()(const AsyncSlotCfg&) const { return "async_slot"; }
    const char* operator()(const AsyncFreeCfg&) const { return "async_free"; }
    const char* operator()(const OneShotCfg&) const { return "one_shot"; }
  };
  return std::visit(V{}, s);
}

namespace detail {

/// Default slot: twice the flush cost for the two syncs plus headroom for
/// the receiver's wait and write.
inline std::uint64_t resolve_slot(std::uint64_t slot_ns, std::uint64_t t_b_hat_ns,
                                  double factor = 2.5) {
  if (slot_ns != 0) return slot_ns;
  if (t_b_hat_ns == 0) throw ConfigError("slot_ns=0 (auto) requires a calibrated t_b_hat");
  return static_cast<std::uint64_t>(factor * static_cast<double>(t_b_hat_ns));
}

inline std::uint64_t resolve_t_b_hat(std::uint64_t t_b_hat_ns, std::uint64_t slot_ns) {
  if (t_b_hat_ns != 0) return t_b_hat_ns;
  return slot_ns * 2 / 5;  // invert the default 2.5x sizing
}

/// Receiver wait before measuring. The target is 1.2 * t_b_hat so the
/// sender's flush finishes first, shrunk when the slot cannot fit both the
/// wait and the receiver's own worst-case flush.
inline std::uint64_t resolve_receiver_sleep(std::uint64_t cfg_sleep_ns, std::uint64_t slot_ns,
                                            std::uint64_t t_b_hat_ns,
                                            std::uint64_t write_cost_ns) {
  if (cfg_sleep_ns != 0) return cfg_sleep_ns;
  const auto t_b = static_cast<double>(t_b_hat_ns);
  const std::uint64_t target = static_cast<std::uint64_t>(1.2 * t_b);
  const std::uint64_t reserve = static_cast<std::uint64_t>(1.35 * t_b) + write_cost_ns;
  const std::uint64_t fit = slot_ns > reserve ? slot_ns - reserve : 0;
  const std::uint64_t floor = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(0.05 * t_b));
  return std::max(floor, std::min(target, fit));
}

}  // namespace detail

/// Units a strategy touches, excluding the reserved handshake unit.
inline std::uint32_t data_units(const StrategyConfig& s, std::size_t wire_bits) {
  struct V {
    std::size_t n;
    std::uint32_t operator()(const SingleFileCfg&) const { return 1; }
    std::uint32_t operator()(const SinglePageCfg&) const { return 1; }
    std::uint32_t operator()(const MultiBitCfg& c) const { return c.files; }
    std::uint32_t operator()(const AsyncSlotCfg& c) const { return c.units; }
    std::uint32_t operator()(const AsyncFreeCfg& c) const { return c.units; }
    std::uint32_t operator()(const OneShotCfg& c) const {
      return c.units != 0 ? c.units : static_cast<std::uint32_t>(n);
    }
  };
  return std::visit(V{wire_bits}, s);
}

}  // namespace wbchan
