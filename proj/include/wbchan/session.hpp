#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>

#include "wbchan/calibration.hpp"
#include "wbchan/codec.hpp"
#include "wbchan/config.hpp"
#include "wbchan/error.hpp"
#include "wbchan/protocols.hpp"

namespace wbchan {

/// A complete framed round as the operator-facing send/recv commands run
/// it. Two units above the data units coordinate the processes:
///
///   ready (unit N-2): the Spy writes it when its unit states are laid and
///        it is scanning; the Trojan's poll consumes it and starts (or
///        restarts) a transmission.
///   end  (unit N-1): the Spy writes it once a valid frame arrived; the
///        Trojan's poll consumes it and stops retransmitting.
///
/// Within a round the Trojan sends sync_seq || header || payload through
/// the configured strategy; the Spy scans its decoded stream for the first
/// 1, validates the sequence, and re-arms (a fresh ready signal) when the
/// prefix does not match. Rounds repeat until the handshake window closes.

struct SessionResult {
  BitString payload;
  RxTrace trace;
  std::optional<CalibrationResult> calibration;  // set when the Spy calibrated
  std::uint32_t rounds = 0;                      // transmissions the Spy needed
};

namespace detail {

inline std::uint32_t session_data_units(const MediumConfig& medium) {
  if (medium.unit_count < 3)
    throw ConfigError("a send/recv session needs at least 3 units (data + ready + end)");
  return medium.unit_count - 2;
}

inline UnitId ready_unit(const MediumConfig& medium) { return medium.unit_count - 2; }
inline UnitId end_unit(const MediumConfig& medium) { return medium.unit_count - 1; }

inline void check_session_strategy(const StrategyConfig& strategy, const MediumConfig& medium,
                                   std::size_t wire_bits) {
  const std::uint32_t data = session_data_units(medium);
  const std::uint32_t needed = data_units(strategy, wire_bits);
  if (needed > data)
    throw ConfigError("strategy needs " + std::to_string(needed) +
                      " data units but the medium has " + std::to_string(data));
  if (const auto* af = std::get_if<AsyncFreeCfg>(&strategy)) {
    if (wire_bits > 0 && af->resync_period_bits < wire_bits)
      throw ConfigError(
          "async_free sessions must fit one resync period; raise resync_period_bits or shorten "
          "the payload");
  }

  // Both processes must tick identical slot grids, so slotted timing has
  // to come from the shared config, not from a per-process estimate.
  auto pinned = [](std::uint64_t slot, std::uint64_t t_b_hat) { return slot != 0 || t_b_hat != 0; };
  bool ok = true;
  if (const auto* c = std::get_if<SingleFileCfg>(&strategy))
    ok = pinned(c->slot_ns, c->t_b_hat_ns);
  else if (const auto* c = std::get_if<SinglePageCfg>(&strategy))
    ok = pinned(c->slot_ns, c->t_b_hat_ns);
  else if (const auto* c = std::get_if<MultiBitCfg>(&strategy))
    ok = pinned(c->slot_ns, c->t_b_hat_ns);
  else if (const auto* c = std::get_if<AsyncSlotCfg>(&strategy))
    ok = pinned(c->slot_ns, c->t_b_hat_ns);
  if (!ok)
    throw ConfigError(
        "slotted sessions need slot_ns or t_b_hat_ns in [strategy]: run `wbchan calibrate` and "
        "pin the values both processes should use");
}

/// The Trojan cannot calibrate (calibration writes). When no threshold was
/// configured it bootstraps one from its own clean polls of the end unit:
/// five baseline syncs, threshold = 5 x the fastest.
inline std::uint64_t sender_threshold(MediumHandle& tx, UnitId probe,
                                      const SessionConfig& session) {
  if (session.threshold_ns != 0) return session.threshold_ns;
  std::uint64_t fastest = std::uint64_t(-1);
  for (int i = 0; i < 5; ++i) {
    fastest = std::min(fastest, tx.sync_unit(probe));
    wait_for(tx, 1'000'000);
  }
  return 5 * fastest;
}

/// Strategy-agnostic incremental bit source for the Spy's arming scan.
class SessionRx {
 public:
  SessionRx(MediumHandle& h, const StrategyConfig& strategy, std::uint64_t threshold)
      : strategy_(strategy) {
    if (const auto* c = std::get_if<SingleFileCfg>(&strategy_))
      single_ = std::make_unique<SingleRx>(h, single_timing(*c), threshold);
    else if (const auto* c = std::get_if<SinglePageCfg>(&strategy_))
      single_ = std::make_unique<SingleRx>(h, single_timing(*c), threshold);
    else if (const auto* c = std::get_if<MultiBitCfg>(&strategy_))
      multibit_ = std::make_unique<MultiBitRx>(h, *c, threshold);
    else if (const auto* c = std::get_if<AsyncSlotCfg>(&strategy_))
      async_slot_ = std::make_unique<AsyncSlotRx>(h, *c, threshold);
    else if (const auto* c = std::get_if<AsyncFreeCfg>(&strategy_))
      async_free_ = std::make_unique<AsyncFreeRx>(h, *c, threshold);
    else
      throw ConfigError("one_shot sessions use the phase-based path");
  }

  int next_bit() {
    if (single_) return single_->next_bit();
    if (multibit_) return multibit_->next_bit();
    if (async_slot_) return async_slot_->next_bit();
    return async_free_->next_transport_bit();
  }

  /// Lay unit states and hand the sender its lead (slot-free mode only).
  void begin(std::uint64_t extra_sleep_ns) {
    if (async_free_) async_free_->begin(extra_sleep_ns);
  }

  /// Re-align the slot grid on the first decoded 1 (single-unit modes).
  void re_anchor() {
    if (single_) single_->re_anchor();
  }

  void finalize(RxTrace& out) {
    if (single_) single_->finalize(out);
    if (multibit_) multibit_->finalize(out);
    if (async_slot_) async_slot_->finalize(out);
    if (async_free_) async_free_->finalize(out);
  }

 private:
  StrategyConfig strategy_;
  std::unique_ptr<SingleRx> single_;
  std::unique_ptr<MultiBitRx> multibit_;
  std::unique_ptr<AsyncSlotRx> async_slot_;
  std::unique_ptr<AsyncFreeRx> async_free_;
};

inline BitString whiten_for_session(const StrategyConfig& strategy, const BitString& tail) {
  if (const auto* af = std::get_if<AsyncFreeCfg>(&strategy)) {
    PrngStream prng(af->prng_seed);
    return xor_encode(tail, prng);
  }
  return tail;
}

/// Upper estimate of one transmission's duration, used to size the
/// per-round windows on both sides.
inline std::uint64_t round_window_ns(std::size_t wire_bits, std::uint64_t threshold) {
  return std::max<std::uint64_t>(1'000'000'000ull,
                                 static_cast<std::uint64_t>(wire_bits) * 8 * threshold);
}

inline constexpr int kEndSignalBurst = 5;
inline constexpr std::uint64_t kEndSignalSpacingNs = 50'000'000;

/// The Spy repeats the end-of-round write a few times: a poll consumes a
/// signal whether or not it classifies it correctly, so redundancy keeps
/// one slow outlier from losing the round.
inline void signal_end_burst(MediumHandle& rx, UnitId end) {
  for (int k = 0; k < kEndSignalBurst; ++k) {
    rx.dirty(end);
    wait_for(rx, kEndSignalSpacingNs);
  }
}

/// One cached read arms a confirmation window; a second cached read within
/// it confirms the round end. A lone latency outlier stays a false alarm.
inline bool confirm_end(MediumHandle& tx, UnitId end, std::uint64_t threshold) {
  const std::uint64_t window = kEndSignalBurst * kEndSignalSpacingNs;
  const std::uint64_t deadline = tx.now_ns() + window;
  while (tx.now_ns() <= deadline) {
    if (classify(tx.sync_unit(end), threshold) == LatencyClass::cached) return true;
    wait_for(tx, kEndSignalSpacingNs / 2);
  }
  return false;
}

}  // namespace detail

/// Trojan side: transmit (and retransmit) the framed payload until the Spy
/// confirms the round.
inline void session_send(MediumHandle& tx, const StrategyConfig& strategy,
                         const SessionConfig& session, const BitString& payload) {
  const MediumConfig& medium = tx.config();
  const UnitId ready = detail::ready_unit(medium);
  const UnitId end = detail::end_unit(medium);
  if (session.sync_seq.empty() || session.sync_seq[0] != 1)
    throw ConfigError("sync_seq must begin with 1 (the Spy arms on the first 1)");

  // sync_seq stays plain so the Spy can align; the header and payload are
  // whitened in slot-free mode.
  BitString tail = frame(payload, BitString{}, session.length_header_bits);
  BitString wire = session.sync_seq;
  wire.append(detail::whiten_for_session(strategy, tail));
  detail::check_session_strategy(strategy, medium, wire.size());

  const std::uint64_t threshold = detail::sender_threshold(tx, end, session);
  const std::uint64_t deadline = tx.now_ns() + session.handshake_timeout_ns;
  const std::uint64_t poll = 2 * threshold;
  const std::uint64_t window = detail::round_window_ns(wire.size(), threshold);

  auto expired = [&] { return tx.now_ns() > deadline; };

  // Wait until the Spy laid the unit states and armed.
  while (classify(tx.sync_unit(ready), threshold) != LatencyClass::cached) {
    if (expired()) throw HandshakeTimeout("the receiver never armed");
    wait_for(tx, poll);
  }

  const bool needs_ready = std::holds_alternative<AsyncFreeCfg>(strategy);
  for (;;) {
    struct V {
      MediumHandle& tx;
      const BitString& wire;
      std::uint64_t threshold;
      void operator()(const SingleFileCfg& c) { send_single(tx, c, wire); }
      void operator()(const SinglePageCfg& c) { send_single(tx, c, wire); }
      void operator()(const MultiBitCfg& c) { send_multibit(tx, c, wire); }
      void operator()(const AsyncSlotCfg& c) { send_async_slot(tx, c, wire); }
      void operator()(const AsyncFreeCfg& c) {
        AsyncFreeTx raw(tx, c, threshold);
        for (std::size_t i = 0; i < wire.size(); ++i) raw.send_transport_bit(wire[i]);
      }
      void operator()(const OneShotCfg& c) { send_oneshot(tx, c, wire); }
    };
    std::visit(V{tx, wire, threshold}, strategy);

    // Wait for the round to resolve: end = delivered, ready = retransmit.
    const std::uint64_t round_deadline = std::min(deadline, tx.now_ns() + window);
    bool rearmed = false;
    for (;;) {
      if (classify(tx.sync_unit(end), threshold) == LatencyClass::cached &&
          detail::confirm_end(tx, end, threshold))
        return;
      if (classify(tx.sync_unit(ready), threshold) == LatencyClass::cached) {
        rearmed = true;
        break;
      }
      if (expired()) throw HandshakeTimeout("round-end signal never arrived");
      if (tx.now_ns() > round_deadline) break;
      wait_for(tx, poll);
    }
    // Slot-free mode must not restart into a mid-scan receiver (the unit
    // cursors would diverge); it resends only on a fresh ready signal.
    while (needs_ready && !rearmed) {
      if (classify(tx.sync_unit(end), threshold) == LatencyClass::cached &&
          detail::confirm_end(tx, end, threshold))
        return;
      if (classify(tx.sync_unit(ready), threshold) == LatencyClass::cached) {
        rearmed = true;
        break;
      }
      if (expired()) throw HandshakeTimeout("round-end signal never arrived");
      wait_for(tx, poll);
    }
  }
}

/// Spy side: arm, scan until a valid frame arrives, confirm it. A garbled
/// prefix discards the round and re-arms. fixed_payload_bits is required
/// when the frame carries no length header.
inline SessionResult session_recv(MediumHandle& rx, const StrategyConfig& strategy,
                                  const SessionConfig& session,
                                  std::optional<std::size_t> fixed_payload_bits = std::nullopt) {
  const MediumConfig& medium = rx.config();
  const UnitId ready = detail::ready_unit(medium);
  const UnitId end = detail::end_unit(medium);
  if (session.sync_seq.empty() || session.sync_seq[0] != 1)
    throw ConfigError("sync_seq must begin with 1 (the Spy arms on the first 1)");
  if (session.length_header_bits == 0 && !fixed_payload_bits)
    throw ConfigError("no length header configured: pass the expected payload size");

  SessionResult result;
  std::uint64_t threshold = session.threshold_ns;
  if (threshold == 0) {
    result.calibration = calibrate(rx, session.calibration_samples);
    threshold = result.calibration->threshold_ns;
  }
  const std::uint64_t deadline = rx.now_ns() + session.handshake_timeout_ns;
  // Flush any stale signals from older runs before the first arm.
  rx.sync_unit(ready);
  rx.sync_unit(end);

  if (std::holds_alternative<OneShotCfg>(strategy)) {
    // Phase-based path: lay every unit, arm, give the sender its window,
    // then measure everything and scan for the frame.
    const std::uint32_t data = detail::session_data_units(medium);
    for (;;) {
      oneshot_dirty_phase(rx, data);
      rx.dirty(ready);
      ++result.rounds;
      wait_for(rx, session.oneshot_wait_ns);
      RecvResult m = oneshot_measure_phase(rx, data, threshold);
      const DeframeResult d =
          deframe(m.bits, session.sync_seq, session.length_header_bits, fixed_payload_bits);
      if (d.status == DeframeStatus::ok) {
        result.payload = d.frame.payload;
        result.trace = std::move(m.trace);
        detail::signal_end_burst(rx, end);
        return result;
      }
      if (rx.now_ns() > deadline) throw HandshakeTimeout("no valid one-shot round arrived");
    }
  }

  detail::check_session_strategy(strategy, medium, session.sync_seq.size());
  const std::uint64_t scan_window =
      detail::round_window_ns(session.sync_seq.size() + 64, threshold) * 3;
  for (;;) {
    detail::SessionRx stream(rx, strategy, threshold);
    rx.dirty(ready);  // armed; the sender starts shortly
    ++result.rounds;
    // Slot-free mode: absorb the sender's detection latency into the lead.
    stream.begin(4 * threshold);

    const std::uint64_t round_deadline = std::min(deadline, rx.now_ns() + scan_window);
    std::optional<BitString> payload;
    for (;;) {
      // Scan to the first 1.
      int bit = 0;
      bool timed_out = false;
      do {
        if (rx.now_ns() > round_deadline) {
          timed_out = true;
          break;
        }
        bit = stream.next_bit();
      } while (bit == 0);
      if (timed_out) break;  // re-arm a fresh round
      stream.re_anchor();

      // Validate the rest of the synchronization sequence.
      bool match = true;
      for (std::size_t k = 1; k < session.sync_seq.size() && match; ++k)
        match = stream.next_bit() == session.sync_seq[k];
      if (!match) continue;  // discard the round and keep scanning

      // Header, then payload (both whitened in slot-free mode).
      PrngStream prng(std::holds_alternative<AsyncFreeCfg>(strategy)
                          ? std::get<AsyncFreeCfg>(strategy).prng_seed
                          : 0);
      const bool whitened = std::holds_alternative<AsyncFreeCfg>(strategy);
      auto next_payload_bit = [&] {
        const int raw = stream.next_bit();
        return whitened ? raw ^ prng.next_bit() : raw;
      };
      std::size_t payload_len;
      if (session.length_header_bits > 0) {
        payload_len = 0;
        for (int k = 0; k < session.length_header_bits; ++k)
          payload_len = (payload_len << 1) | static_cast<unsigned>(next_payload_bit());
        if (payload_len > (std::size_t{1} << 24)) continue;  // implausible: garbled round
      } else {
        payload_len = *fixed_payload_bits;
      }
      BitString bits;
      for (std::size_t k = 0; k < payload_len; ++k) bits.push_back(next_payload_bit());
      payload = std::move(bits);
      break;
    }

    if (payload) {
      result.payload = std::move(*payload);
      stream.finalize(result.trace);
      detail::signal_end_burst(rx, end);
      return result;
    }
    if (rx.now_ns() > deadline) throw HandshakeTimeout("no transmission within the window");
  }
}

}  // namespace wbchan
