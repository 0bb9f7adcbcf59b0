#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "wbchan/medium.hpp"

namespace wbchan {

/// One decoded bit as the receiver saw it.
struct RxRecord {
  std::uint64_t seq = 0;
  UnitId unit = 0;
  std::uint64_t latency_ns = 0;
  std::uint8_t bit = 0;
  std::uint64_t done_ns = 0;  // receiver clock when the bit was decoded
};

/// Receiver-side evidence for a round: per-bit records plus the timing
/// windows the rate metrics are computed from.
struct RxTrace {
  std::vector<RxRecord> rows;
  std::uint64_t overruns = 0;         // slots whose work spilled past the boundary
  std::uint64_t flagged_symbols = 0;  // multi-bit symbols with no unit below threshold
  std::vector<std::string> warnings;

  // Active window: time the receiver spent driving the channel, excluding
  // idle waiting for the other side (the one-shot gap between the dirtying
  // and measuring phases). Rates are computed over this window.
  std::uint64_t active_elapsed_ns = 0;
  // Full span: first dirty to last decode, idle included.
  std::uint64_t span_elapsed_ns = 0;
};

/// Sender-side timing: clock after each transmitted payload bit.
struct TxTrace {
  std::vector<std::uint64_t> bit_done_ns;
  std::uint64_t overruns = 0;
};

/// CSV export, one row per decoded bit.
inline void write_trace_csv(std::ostream& os, const RxTrace& trace) {
  os << "seq,unit,latency_ns,bit\n";
  for (const auto& r : trace.rows)
    os << r.seq << ',' << r.unit << ',' << r.latency_ns << ',' << int(r.bit) << "\n";
}

}  // namespace wbchan
