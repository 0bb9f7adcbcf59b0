#pragma once

#include <cstdint>
#include <exception>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "wbchan/bits.hpp"
#include "wbchan/calibration.hpp"
#include "wbchan/codec.hpp"
#include "wbchan/detail/posix_backend.hpp"
#include "wbchan/detail/sim_backend.hpp"
#include "wbchan/error.hpp"
#include "wbchan/medium.hpp"
#include "wbchan/strategies.hpp"
#include "wbchan/trace.hpp"

namespace wbchan {

/// Block until start + slot on the medium's clock. Returns true when the
/// deadline had already passed on entry; an overrun is data, not an error
/// (it is the channel's bit-error mechanism), and the caller's absolute
/// slot grid re-aligns on the next slot.
inline bool slot_wait(MediumHandle& h, std::uint64_t start_ns, std::uint64_t slot_ns) {
  const std::uint64_t deadline = start_ns + slot_ns;
  if (h.now_ns() > deadline) return true;
  h.wait_until(deadline);
  return false;
}

inline void wait_for(MediumHandle& h, std::uint64_t dt_ns) {
  h.wait_until(h.now_ns() + dt_ns);
}

struct RecvResult {
  BitString bits;
  RxTrace trace;
};

// ---------------------------------------------------------------------------
// Coupled execution
// ---------------------------------------------------------------------------

/// Drive a sender and a receiver procedure over one shared medium. On the
/// simulated backend both handles must already be attached so their virtual
/// clocks start aligned; each agent detaches when its procedure returns,
/// releasing the other side of the event ordering.
template <class TxFn, class RxFn>
void run_pair(MediumHandle& tx, TxFn&& tx_fn, MediumHandle& rx, RxFn&& rx_fn) {
  std::exception_ptr tx_err, rx_err;
  std::thread tx_thread([&] {
    try {
      tx_fn();
    } catch (...) {
      tx_err = std::current_exception();
    }
    tx.finish();
  });
  std::thread rx_thread([&] {
    try {
      rx_fn();
    } catch (...) {
      rx_err = std::current_exception();
    }
    rx.finish();
  });
  tx_thread.join();
  rx_thread.join();
  if (rx_err) std::rethrow_exception(rx_err);
  if (tx_err) std::rethrow_exception(tx_err);
}

// ---------------------------------------------------------------------------
// Single file / single page (Protocol 1 and 2)
// ---------------------------------------------------------------------------

namespace detail {

struct SingleTiming {
  Primitive primitive;
  std::uint64_t slot_ns;
  std::uint64_t sleep_ns;
};

inline SingleTiming single_timing(const SingleFileCfg& c) {
  const std::uint64_t slot = resolve_slot(c.slot_ns, c.t_b_hat_ns);
  const std::uint64_t t_b = resolve_t_b_hat(c.t_b_hat_ns, slot);
  return {c.primitive, slot, resolve_receiver_sleep(c.receiver_sleep_ns, slot, t_b, kSimWriteCostNs)};
}

inline SingleTiming single_timing(const SinglePageCfg& c) {
  const std::uint64_t slot = resolve_slot(c.slot_ns, c.t_b_hat_ns);
  const std::uint64_t t_b = resolve_t_b_hat(c.t_b_hat_ns, slot);
  return {Primitive::msync, slot,
          resolve_receiver_sleep(c.receiver_sleep_ns, slot, t_b, kSimWriteCostNs)};
}

}  // namespace detail

/// Incremental single-unit receiver: one decoded bit per slot. Each slot
/// dirties the unit, waits for the sender's turn, then times its own sync.
class SingleRx {
 public:
  SingleRx(MediumHandle& h, detail::SingleTiming t, std::uint64_t threshold_ns, UnitId unit = 0)
      : h_(h), t_(t), threshold_(threshold_ns), unit_(unit), grid_start_(h.now_ns()) {}

  int next_bit() {
    const std::uint64_t start = grid_start_ + idx_ * t_.slot_ns;
    h_.wait_until(start);
    h_.dirty(unit_);
    h_.wait_until(start + t_.sleep_ns);  // let the sender's flush land first
    const std::uint64_t lat = h_.sync_unit(unit_, t_.primitive);
    const int bit = decode_bit(lat, threshold_);
    trace_.rows.push_back({base_ + idx_, unit_, lat, static_cast<std::uint8_t>(bit), h_.now_ns()});
    if (slot_wait(h_, start, t_.slot_ns)) ++trace_.overruns;
    ++idx_;
    return bit;
  }

  /// Restart the slot grid at the current instant (used by the arming scan
  /// once the first 1 reveals the sender's phase).
  void re_anchor() {
    grid_start_ = h_.now_ns();
    base_ += idx_;
    idx_ = 0;
  }

  void finalize(RxTrace& out) {
    out = std::move(trace_);
    // A slotted round occupies exactly its grid; a spilled final slot is
    // visible in the overrun count and the span.
    out.active_elapsed_ns = idx_ * t_.slot_ns;
    out.span_elapsed_ns = h_.now_ns() - grid_start_;
  }

  std::uint64_t grid_start() const { return grid_start_; }

 private:
  MediumHandle& h_;
  detail::SingleTiming t_;
  std::uint64_t threshold_;
  UnitId unit_;
  std::uint64_t grid_start_;
  std::uint64_t idx_ = 0;
  std::uint64_t base_ = 0;
  RxTrace trace_;
};

namespace detail {

template <class Cfg>
TxTrace send_single_impl(MediumHandle& h, const Cfg& cfg, const BitString& bits) {
  const SingleTiming t = single_timing(cfg);
  TxTrace tx;
  tx.bit_done_ns.reserve(bits.size());
  const std::uint64_t grid = h.now_ns();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const std::uint64_t start = grid + i * t.slot_ns;
    if (bits[i]) h.sync_unit(0, t.primitive);
    if (slot_wait(h, start, t.slot_ns)) ++tx.overruns;
    tx.bit_done_ns.push_back(h.now_ns());
  }
  return tx;
}

template <class Cfg>
RecvResult recv_single_impl(MediumHandle& h, const Cfg& cfg, std::size_t n_bits,
                            std::uint64_t threshold_ns) {
  SingleRx rx(h, single_timing(cfg), threshold_ns);
  RecvResult r;
  for (std::size_t i = 0; i < n_bits; ++i) r.bits.push_back(rx.next_bit());
  rx.finalize(r.trace);
  return r;
}

}  // namespace detail

inline TxTrace send_single(MediumHandle& h, const SingleFileCfg& cfg, const BitString& bits) {
  return detail::send_single_impl(h, cfg, bits);
}
inline TxTrace send_single(MediumHandle& h, const SinglePageCfg& cfg, const BitString& bits) {
  return detail::send_single_impl(h, cfg, bits);
}
inline RecvResult recv_single(MediumHandle& h, const SingleFileCfg& cfg, std::size_t n_bits,
                              std::uint64_t threshold_ns) {
  return detail::recv_single_impl(h, cfg, n_bits, threshold_ns);
}
inline RecvResult recv_single(MediumHandle& h, const SinglePageCfg& cfg, std::size_t n_bits,
                              std::uint64_t threshold_ns) {
  return detail::recv_single_impl(h, cfg, n_bits, threshold_ns);
}

// ---------------------------------------------------------------------------
// Multi-bit encoding (four files, one 2-bit symbol per slot)
// ---------------------------------------------------------------------------

namespace detail {

inline SingleTiming multibit_timing(const MultiBitCfg& c) {
  const std::uint64_t slot = resolve_slot(c.slot_ns, c.t_b_hat_ns);
  const std::uint64_t t_b = resolve_t_b_hat(c.t_b_hat_ns, slot);
  return {Primitive::fdatasync, slot,
          resolve_receiver_sleep(c.receiver_sleep_ns, slot, t_b, 4 * kSimWriteCostNs)};
}

}  // namespace detail

inline TxTrace send_multibit(MediumHandle& h, const MultiBitCfg& cfg, const BitString& bits) {
  if (cfg.files != 4 || cfg.workers != cfg.files)
    throw ConfigError("multi_bit uses 4 files with one worker per file");
  const detail::SingleTiming t = detail::multibit_timing(cfg);
  const Group2Result symbols = group2(bits);
  TxTrace tx;
  const std::uint64_t grid = h.now_ns();
  for (std::size_t j = 0; j < symbols.symbols.size(); ++j) {
    const std::uint64_t start = grid + j * t.slot_ns;
    h.sync_unit(symbols.symbols[j], t.primitive);  // the symbol picks the file
    if (slot_wait(h, start, t.slot_ns)) ++tx.overruns;
    tx.bit_done_ns.push_back(h.now_ns());
    tx.bit_done_ns.push_back(h.now_ns());  // one entry per payload bit
  }
  tx.bit_done_ns.resize(bits.size());
  return tx;
}

/// Incremental multi-bit receiver: one symbol (2 bits) per slot. All four
/// units are measured concurrently; the symbol is the argmin-latency unit,
/// flagged unless exactly one unit reads below threshold (soft decision).
class MultiBitRx {
 public:
  MultiBitRx(MediumHandle& h, const MultiBitCfg& cfg, std::uint64_t threshold_ns)
      : h_(h), t_(detail::multibit_timing(cfg)), threshold_(threshold_ns),
        units_{0, 1, 2, 3}, grid_start_(h.now_ns()) {}

  int next_bit() {
    if (pending_.empty()) decode_symbol();
    const int bit = pending_.front();
    pending_.erase(pending_.begin());
    return bit;
  }

  void finalize(RxTrace& out) {
    out = std::move(trace_);
    out.active_elapsed_ns = slot_idx_ * t_.slot_ns;
    out.span_elapsed_ns = h_.now_ns() - grid_start_;
  }

 private:
  void decode_symbol() {
    const std::uint64_t start = grid_start_ + slot_idx_ * t_.slot_ns;
    h_.wait_until(start);
    h_.dirty_group(units_);  // all four files written back to back
    h_.wait_until(start + t_.sleep_ns);
    const std::vector<std::uint64_t> lat = h_.sync_group(units_, t_.primitive);
    std::size_t best = 0;
    std::size_t below = 0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
      if (lat[i] < lat[best]) best = i;
      below += classify(lat[i], threshold_) == LatencyClass::uncached;
    }
    // Exactly one flushed file names the symbol; anything else is decoded
    // anyway (minimum latency) but flagged as suspect.
    if (below != 1) ++trace_.flagged_symbols;
    const int hi = static_cast<int>((best >> 1) & 1);
    const int lo = static_cast<int>(best & 1);
    trace_.rows.push_back({2 * slot_idx_, units_[best], lat[best],
                           static_cast<std::uint8_t>(hi), h_.now_ns()});
    trace_.rows.push_back({2 * slot_idx_ + 1, units_[best], lat[best],
                           static_cast<std::uint8_t>(lo), h_.now_ns()});
    pending_.push_back(hi);
    pending_.push_back(lo);
    if (slot_wait(h_, start, t_.slot_ns)) ++trace_.overruns;
    ++slot_idx_;
  }

  MediumHandle& h_;
  detail::SingleTiming t_;
  std::uint64_t threshold_;
  std::vector<UnitId> units_;
  std::uint64_t grid_start_;
  std::uint64_t slot_idx_ = 0;
  std::vector<int> pending_;
  RxTrace trace_;
};

inline RecvResult recv_multibit(MediumHandle& h, const MultiBitCfg& cfg, std::size_t n_bits,
                                std::uint64_t threshold_ns) {
  MultiBitRx rx(h, cfg, threshold_ns);
  RecvResult r;
  for (std::size_t i = 0; i < n_bits; ++i) r.bits.push_back(rx.next_bit());
  rx.finalize(r.trace);
  return r;
}

// ---------------------------------------------------------------------------
// Asynchronous, slotted (round-robin units, receiver one slot behind)
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t async_slot_ns(const AsyncSlotCfg& c) {
  return resolve_slot(c.slot_ns, c.t_b_hat_ns, 1.5);
}

}  // namespace detail

inline TxTrace send_async_slot(MediumHandle& h, const AsyncSlotCfg& cfg, const BitString& bits) {
  const std::uint64_t slot = detail::async_slot_ns(cfg);
  TxTrace tx;
  const std::uint64_t grid = h.now_ns();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const std::uint64_t start = grid + i * slot;
    h.wait_until(start);
    if (bits[i]) h.sync_unit(static_cast<UnitId>(i % cfg.units));
    if (slot_wait(h, start, slot)) ++tx.overruns;
    tx.bit_done_ns.push_back(h.now_ns());
  }
  return tx;
}

/// The receiver lays all unit states up front, then trails the sender by
/// exactly one slot: measure the slot's unit, re-dirty it for the next
/// wrap, and never wait for the sender again.
class AsyncSlotRx {
 public:
  AsyncSlotRx(MediumHandle& h, const AsyncSlotCfg& cfg, std::uint64_t threshold_ns)
      : h_(h), cfg_(cfg), slot_(detail::async_slot_ns(cfg)), threshold_(threshold_ns) {
    const std::uint64_t start = h_.now_ns();
    for (UnitId u = 0; u < cfg_.units; ++u) h_.dirty(u);
    grid_start_ = start + slot_;  // one slot behind the sender
  }

  int next_bit() {
    const std::uint64_t start = grid_start_ + idx_ * slot_;
    h_.wait_until(start);
    const UnitId u = static_cast<UnitId>(idx_ % cfg_.units);
    const std::uint64_t lat = h_.sync_unit(u);
    const int bit = decode_bit(lat, threshold_);
    trace_.rows.push_back({idx_, u, lat, static_cast<std::uint8_t>(bit), h_.now_ns()});
    h_.dirty(u);  // re-lay for the sender's next wrap
    if (slot_wait(h_, start, slot_)) ++trace_.overruns;
    ++idx_;
    return bit;
  }

  void finalize(RxTrace& out) {
    out = std::move(trace_);
    out.active_elapsed_ns = idx_ * slot_;
    out.span_elapsed_ns = h_.now_ns() - grid_start_;
  }

 private:
  MediumHandle& h_;
  AsyncSlotCfg cfg_;
  std::uint64_t slot_;
  std::uint64_t threshold_;
  std::uint64_t grid_start_ = 0;
  std::uint64_t idx_ = 0;
  RxTrace trace_;
};

inline RecvResult recv_async_slot(MediumHandle& h, const AsyncSlotCfg& cfg, std::size_t n_bits,
                                  std::uint64_t threshold_ns) {
  AsyncSlotRx rx(h, cfg, threshold_ns);
  RecvResult r;
  for (std::size_t i = 0; i < n_bits; ++i) r.bits.push_back(rx.next_bit());
  rx.finalize(r.trace);
  return r;
}

// ---------------------------------------------------------------------------
// Asynchronous, slot-free (whitened bits, t_s lead control, rendezvous)
// ---------------------------------------------------------------------------

namespace detail {

/// Poll a unit until its sync reads cached (someone dirtied it). Returns
/// false on timeout. The detecting sync consumes the signal.
inline bool poll_until_cached(MediumHandle& h, UnitId unit, std::uint64_t threshold_ns,
                              std::uint64_t poll_interval_ns, std::uint64_t timeout_ns) {
  const std::uint64_t deadline = h.now_ns() + timeout_ns;
  for (;;) {
    const std::uint64_t lat = h.sync_unit(unit);
    if (classify(lat, threshold_ns) == LatencyClass::cached) return true;
    if (h.now_ns() > deadline) return false;
    wait_for(h, poll_interval_ns);
  }
}

inline std::uint64_t resync_sleep_ns(const AsyncFreeCfg& cfg, std::uint64_t threshold_ns) {
  // Covers end-signal detection plus a worst-case sync-sequence send
  // before the receiver starts measuring the sequence.
  return cfg.initial_sleep_ns + 20 * threshold_ns;
}

}  // namespace detail

/// Reserved-unit index for a rendezvous/handshake medium: the unit after
/// the data units.
inline UnitId reserved_unit(std::uint32_t data_unit_count) { return data_unit_count; }

/// Slot-free transport, sender side. Bits arrive already whitened; every
/// resync_period_bits the sender stops at the rendezvous: it waits for the
/// receiver's reserved-unit signal, then re-aligns it with a plain
/// synchronization sequence.
class AsyncFreeTx {
 public:
  AsyncFreeTx(MediumHandle& h, const AsyncFreeCfg& cfg, std::uint64_t threshold_ns,
              BitString resync_seq = BitString::from_string(kDefaultSyncSeq))
      : h_(h), cfg_(cfg), threshold_(threshold_ns), seq_(std::move(resync_seq)) {}

  void send_transport_bit(int tb) {
    if (sent_ > 0 && cfg_.resync_period_bits > 0 && sent_ % cfg_.resync_period_bits == 0 &&
        last_rendezvous_ != sent_)
      rendezvous();
    emit(tb);
    ++sent_;
  }

  std::uint64_t sent() const { return sent_; }

 private:
  void emit(int tb) {
    const UnitId u = static_cast<UnitId>(cursor_ % cfg_.units);
    if (tb)
      h_.sync_unit(u);
    else
      wait_for(h_, cfg_.t_s_ns);
    ++cursor_;
  }

  void rendezvous() {
    last_rendezvous_ = sent_;
    if (h_.config().unit_count < cfg_.units + 1)
      throw ConfigError("async_free rendezvous needs units + 1 reserved unit");
    if (!detail::poll_until_cached(h_, reserved_unit(cfg_.units), threshold_,
                                   2 * threshold_, 120ull * 1'000'000'000ull))
      throw HandshakeTimeout("async_free rendezvous: receiver never signalled");
    for (std::size_t k = 0; k < seq_.size(); ++k) emit(seq_[k]);
  }

  MediumHandle& h_;
  AsyncFreeCfg cfg_;
  std::uint64_t threshold_;
  BitString seq_;
  std::uint64_t cursor_ = 0;  // unit cursor over every wire bit, sequence included
  std::uint64_t sent_ = 0;    // transport data bits, drives the rendezvous period
  std::uint64_t last_rendezvous_ = std::uint64_t(-1);
};

/// Slot-free transport, receiver side. Yields raw transport bits; the
/// first wrap of unit states is laid by begin(), and every measured unit
/// is immediately re-dirtied so wrap-around cycles sustain themselves.
class AsyncFreeRx {
 public:
  AsyncFreeRx(MediumHandle& h, const AsyncFreeCfg& cfg, std::uint64_t threshold_ns,
              BitString resync_seq = BitString::from_string(kDefaultSyncSeq))
      : h_(h), cfg_(cfg), threshold_(threshold_ns), seq_(std::move(resync_seq)) {}

  /// Lay the unit states and give the sender its initial lead.
  void begin(std::uint64_t extra_sleep_ns = 0) {
    round_start_ = h_.now_ns();
    for (UnitId u = 0; u < cfg_.units; ++u) h_.dirty(u);
    wait_for(h_, cfg_.initial_sleep_ns + extra_sleep_ns);
    begun_ = true;
  }

  int next_transport_bit() {
    if (!begun_) begin();
    if (received_ > 0 && cfg_.resync_period_bits > 0 &&
        received_ % cfg_.resync_period_bits == 0 && last_rendezvous_ != received_)
      rendezvous();
    const int tb = take();
    trace_.rows.back().seq = received_;
    ++received_;
    return tb;
  }

  void finalize(RxTrace& out) {
    out = std::move(trace_);
    out.active_elapsed_ns = h_.now_ns() - round_start_;
    out.span_elapsed_ns = out.active_elapsed_ns;
  }

 private:
  int take() {
    const UnitId u = static_cast<UnitId>(cursor_ % cfg_.units);
    const std::uint64_t lat = h_.sync_unit(u);
    const int tb = decode_bit(lat, threshold_);
    trace_.rows.push_back({0, u, lat, static_cast<std::uint8_t>(tb), h_.now_ns()});
    h_.dirty(u);  // re-lay for the next wrap
    ++cursor_;
    return tb;
  }

  void rendezvous() {
    last_rendezvous_ = received_;
    if (h_.config().unit_count < cfg_.units + 1)
      throw ConfigError("async_free rendezvous needs units + 1 reserved unit");
    h_.dirty(reserved_unit(cfg_.units));  // end-of-period signal
    wait_for(h_, detail::resync_sleep_ns(cfg_, threshold_));
    for (std::size_t k = 0; k < seq_.size(); ++k) {
      const int tb = take();
      trace_.rows.pop_back();  // alignment bits are not payload rows
      if (tb != seq_[k])
        throw AbortRound("async_free resync: synchronization sequence mismatch");
    }
  }

  MediumHandle& h_;
  AsyncFreeCfg cfg_;
  std::uint64_t threshold_;
  BitString seq_;
  RxTrace trace_;
  std::uint64_t round_start_ = 0;
  std::uint64_t cursor_ = 0;
  std::uint64_t received_ = 0;
  std::uint64_t last_rendezvous_ = std::uint64_t(-1);
  bool begun_ = false;
};

inline TxTrace send_async_free(MediumHandle& h, const AsyncFreeCfg& cfg, const BitString& bits,
                               std::uint64_t threshold_ns,
                               const BitString& sync_seq = BitString::from_string(kDefaultSyncSeq)) {
  AsyncFreeTx tx(h, cfg, threshold_ns, sync_seq);
  PrngStream prng(cfg.prng_seed);
  TxTrace trace;
  trace.bit_done_ns.reserve(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    tx.send_transport_bit(bits[i] ^ prng.next_bit());
    trace.bit_done_ns.push_back(h.now_ns());
  }
  return trace;
}

inline RecvResult recv_async_free(MediumHandle& h, const AsyncFreeCfg& cfg, std::size_t n_bits,
                                  std::uint64_t threshold_ns,
                                  const BitString& sync_seq = BitString::from_string(kDefaultSyncSeq)) {
  AsyncFreeRx rx(h, cfg, threshold_ns, sync_seq);
  rx.begin();
  PrngStream prng(cfg.prng_seed);
  RecvResult r;
  for (std::size_t i = 0; i < n_bits; ++i)
    r.bits.push_back(rx.next_transport_bit() ^ prng.next_bit());
  rx.finalize(r.trace);
  for (std::size_t i = 0; i < r.trace.rows.size(); ++i)
    r.trace.rows[i].bit = r.bits[i];  // report payload bits, not whitened ones
  return r;
}

// ---------------------------------------------------------------------------
// One-time transmission (one unit per bit, phases never overlap)
// ---------------------------------------------------------------------------

struct OneShotDirtyPhase {
  std::uint64_t start_ns = 0;
  std::uint64_t end_ns = 0;
};

/// Receiver phase 1: mark every unit dirty.
inline OneShotDirtyPhase oneshot_dirty_phase(MediumHandle& h, std::size_t n_bits) {
  OneShotDirtyPhase p;
  p.start_ns = h.now_ns();
  for (std::size_t i = 0; i < n_bits; ++i) h.dirty(static_cast<UnitId>(i));
  p.end_ns = h.now_ns();
  return p;
}

/// Sender phase: flush exactly the 1 bits' units.
inline TxTrace send_oneshot(MediumHandle& h, const OneShotCfg& cfg, const BitString& bits) {
  const std::uint32_t units = data_units(StrategyConfig{cfg}, bits.size());
  if (bits.size() > units) throw ConfigError("one_shot payload exceeds the unit pool");
  TxTrace tx;
  tx.bit_done_ns.reserve(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) h.sync_unit(static_cast<UnitId>(i));
    tx.bit_done_ns.push_back(h.now_ns());
  }
  return tx;
}

/// Receiver phase 2: time a sync on every unit, in order.
inline RecvResult oneshot_measure_phase(MediumHandle& h, std::size_t n_bits,
                                        std::uint64_t threshold_ns) {
  RecvResult r;
  for (std::size_t i = 0; i < n_bits; ++i) {
    const std::uint64_t lat = h.sync_unit(static_cast<UnitId>(i));
    const int bit = decode_bit(lat, threshold_ns);
    r.bits.push_back(bit);
    r.trace.rows.push_back({i, static_cast<UnitId>(i), lat, static_cast<std::uint8_t>(bit),
                            h.now_ns()});
  }
  return r;
}

// ---------------------------------------------------------------------------
// End-of-round handshake over the reserved unit
// ---------------------------------------------------------------------------

/// Spy side: write to the unused unit to signal that the round is over.
inline void handshake_signal_end(MediumHandle& rx, UnitId reserved) { rx.dirty(reserved); }

/// Trojan side: after sending, keep timing the reserved unit; a
/// cached-class latency means the Spy wrote its signal.
inline void handshake_await_end(MediumHandle& tx, UnitId reserved, std::uint64_t threshold_ns,
                                std::uint64_t poll_interval_ns, std::uint64_t timeout_ns) {
  if (!detail::poll_until_cached(tx, reserved, threshold_ns, poll_interval_ns, timeout_ns))
    throw HandshakeTimeout("round-end signal never arrived");
}

// ---------------------------------------------------------------------------
// Deterministic coupled rounds over a shared simulated medium
// ---------------------------------------------------------------------------

struct CoupledOptions {
  std::uint64_t oneshot_lag_ns = 0;  // extra receiver lag injected between phases
};

struct CoupledResult {
  BitString received;
  RxTrace rx;
  TxTrace tx;
};

/// Run one strategy end to end on a shared simulated medium and return the
/// decoded payload with both traces. One-shot runs its phases sequentially
/// (they must not overlap); all other strategies run sender and receiver as
/// two scheduled agents.
inline CoupledResult run_coupled_sim(const SimMediumPtr& medium, const StrategyConfig& strategy,
                                     const BitString& payload, std::uint64_t threshold_ns,
                                     const CoupledOptions& opt = {}) {
  CoupledResult result;

  if (std::holds_alternative<OneShotCfg>(strategy)) {
    const auto& cfg = std::get<OneShotCfg>(strategy);
    const std::size_t n = payload.size();
    MediumHandle rx = open_sim(medium, Role::receiver);
    const OneShotDirtyPhase dirty = oneshot_dirty_phase(rx, n);
    std::uint64_t tx_end;
    rx.pause();  // phases are sequential; the parked receiver must not gate the sender
    {
      MediumHandle tx = open_sim(medium, Role::sender);  // joins at the dirty-phase frontier
      result.tx = send_oneshot(tx, cfg, payload);
      tx_end = tx.now_ns();
    }
    rx.resume();
    const std::uint64_t measure_start = std::max(dirty.end_ns + opt.oneshot_lag_ns, tx_end);
    rx.wait_until(measure_start);
    const std::uint64_t lag = measure_start - dirty.end_ns;
    RecvResult m = oneshot_measure_phase(rx, n, threshold_ns);
    result.received = std::move(m.bits);
    result.rx = std::move(m.trace);
    if (lag > cfg.max_receiver_lag_ns)
      result.rx.warnings.push_back(
          "receiver lag " + std::to_string(lag) + " ns exceeds the write-back margin " +
          std::to_string(cfg.max_receiver_lag_ns) + " ns; bits skew toward 1");
    const std::uint64_t measure_end = rx.now_ns();
    result.rx.active_elapsed_ns = (dirty.end_ns - dirty.start_ns) + (measure_end - measure_start);
    result.rx.span_elapsed_ns = measure_end - dirty.start_ns;
    return result;
  }

  MediumHandle rx = open_sim(medium, Role::receiver);
  MediumHandle tx = open_sim(medium, Role::sender);
  RecvResult recv;
  struct V {
    MediumHandle& tx;
    MediumHandle& rx;
    const BitString& payload;
    std::uint64_t threshold;
    RecvResult& out;
    TxTrace& tx_trace;

    void operator()(const SingleFileCfg& c) {
      run_pair(tx, [&] { tx_trace = send_single(tx, c, payload); }, rx,
               [&] { out = recv_single(rx, c, payload.size(), threshold); });
    }
    void operator()(const SinglePageCfg& c) {
      run_pair(tx, [&] { tx_trace = send_single(tx, c, payload); }, rx,
               [&] { out = recv_single(rx, c, payload.size(), threshold); });
    }
    void operator()(const MultiBitCfg& c) {
      run_pair(tx, [&] { tx_trace = send_multibit(tx, c, payload); }, rx,
               [&] { out = recv_multibit(rx, c, payload.size(), threshold); });
    }
    void operator()(const AsyncSlotCfg& c) {
      run_pair(tx, [&] { tx_trace = send_async_slot(tx, c, payload); }, rx,
               [&] { out = recv_async_slot(rx, c, payload.size(), threshold); });
    }
    void operator()(const AsyncFreeCfg& c) {
      run_pair(tx, [&] { tx_trace = send_async_free(tx, c, payload, threshold); }, rx,
               [&] { out = recv_async_free(rx, c, payload.size(), threshold); });
    }
    void operator()(const OneShotCfg&) {}
  };
  std::visit(V{tx, rx, payload, threshold_ns, recv, result.tx}, strategy);
  result.received = std::move(recv.bits);
  result.rx = std::move(recv.trace);
  return result;
}

}  // namespace wbchan
