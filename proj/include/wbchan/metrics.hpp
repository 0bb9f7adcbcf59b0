#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "wbchan/bits.hpp"
#include "wbchan/calibration.hpp"
#include "wbchan/codec.hpp"
#include "wbchan/error.hpp"
#include "wbchan/protocols.hpp"

namespace wbchan {

/// One benchmark round: what went in, what came out, how long the
/// receiver's active window lasted.
struct TrialResult {
  BitString sent;
  BitString received;
  std::uint64_t elapsed_ns = 0;
  std::uint64_t overruns = 0;
};

struct Report {
  double tr_bps = 0.0;    // mean transmission rate over trials
  double peak_bps = 0.0;  // best trial
  double ber_pct = 0.0;   // mean bit error rate, percent
  double sd = 0.0;        // sample standard deviation of per-trial BER (fraction)
  double se = 0.0;        // sd / sqrt(trials)
  std::uint32_t trials = 0;
};

/// Bit error rate: Hamming distance over length. Zero for empty inputs.
inline double ber(const BitString& sent, const BitString& received) {
  if (sent.size() != received.size())
    throw CodecError("ber: length mismatch (" + std::to_string(sent.size()) + " vs " +
                     std::to_string(received.size()) + ")");
  if (sent.empty()) return 0.0;
  std::size_t errors = 0;
  for (std::size_t i = 0; i < sent.size(); ++i) errors += sent[i] != received[i];
  return static_cast<double>(errors) / static_cast<double>(sent.size());
}

/// Transmission rate in bits per second.
inline double tr(std::uint64_t n_bits, std::uint64_t elapsed_ns) {
  if (elapsed_ns == 0) throw Error("tr: elapsed time must be positive");
  return static_cast<double>(n_bits) * 1e9 / static_cast<double>(elapsed_ns);
}

inline Report aggregate(const std::vector<TrialResult>& trials) {
  if (trials.empty()) throw Error("aggregate: at least one trial required");
  Report rep;
  rep.trials = static_cast<std::uint32_t>(trials.size());
  double tr_sum = 0.0;
  double ber_sum = 0.0;
  std::vector<double> bers;
  bers.reserve(trials.size());
  for (const auto& t : trials) {
    const double rate = tr(t.sent.size(), t.elapsed_ns);
    tr_sum += rate;
    rep.peak_bps = std::max(rep.peak_bps, rate);
    const double e = ber(t.sent, t.received);
    bers.push_back(e);
    ber_sum += e;
  }
  const double n = static_cast<double>(trials.size());
  rep.tr_bps = tr_sum / n;
  const double ber_mean = ber_sum / n;
  rep.ber_pct = 100.0 * ber_mean;
  if (trials.size() > 1) {
    double ss = 0.0;
    for (double e : bers) ss += (e - ber_mean) * (e - ber_mean);
    rep.sd = std::sqrt(ss / (n - 1.0));
    rep.se = rep.sd / std::sqrt(n);
  }
  return rep;
}

struct BenchParams {
  std::uint32_t trials = 50;
  std::uint32_t bits_per_trial = 1024;
  double payload_ones_ratio = 0.5;
  std::uint64_t seed = 42;
  std::uint32_t calibration_samples = 200;
  std::uint64_t oneshot_lag_ns = 0;
};

struct BenchResult {
  Report report;
  std::vector<TrialResult> trials;
  std::vector<RxTrace> traces;
  CalibrationResult calibration;
};

namespace detail {

inline MediumConfig medium_for_trial(MediumConfig cfg, std::uint64_t master_seed,
                                     std::uint32_t trial) {
  cfg.sim.seed = derive_seed(master_seed, 2ull * trial);
  return cfg;
}

}  // namespace detail

/// The evaluation harness: repeated fixed-size rounds with seeded payloads,
/// aggregated into TR/BER/SD/SE. Simulated media are rebuilt per trial from
/// derived seeds, so a fixed master seed reproduces every latency draw.
inline BenchResult bench(const StrategyConfig& strategy, const MediumConfig& medium_cfg,
                         const BenchParams& params) {
  if (params.trials == 0) throw ConfigError("bench: trials must be positive");
  if (params.bits_per_trial == 0) throw ConfigError("bench: bits_per_trial must be positive");
  if (medium_cfg.backend != Backend::simulated)
    throw ConfigError("bench runs on the simulated backend; use send/recv for live media");

  BenchResult result;
  {
    // Calibrate once on a scratch medium with the same parameters.
    MediumConfig cal_cfg = medium_cfg;
    cal_cfg.unit_count = 1;
    cal_cfg.sim.seed = derive_seed(params.seed, 0x5ca1ab1e);
    MediumHandle h = open_medium(cal_cfg, Role::receiver);
    result.calibration = calibrate(h, params.calibration_samples);
  }
  const std::uint64_t threshold = result.calibration.threshold_ns;
  if (const auto* af = std::get_if<AsyncFreeCfg>(&strategy)) {
    // Lead control only works when the zero-bit wait undercuts the
    // uncached sync ("slightly smaller").
    if (af->t_s_ns >= result.calibration.t_u_hat_ns)
      throw ConfigError("async_free needs t_s_ns below the calibrated t_u_hat");
  }

  CoupledOptions opt;
  opt.oneshot_lag_ns = params.oneshot_lag_ns;
  for (std::uint32_t t = 0; t < params.trials; ++t) {
    const MediumConfig cfg = detail::medium_for_trial(medium_cfg, params.seed, t);
    SimMediumPtr medium = make_sim_medium(cfg);
    const BitString payload = random_payload(params.bits_per_trial,
                                             derive_seed(params.seed, 2ull * t + 1),
                                             params.payload_ones_ratio);
    CoupledResult run = run_coupled_sim(medium, strategy, payload, threshold, opt);
    TrialResult trial;
    trial.sent = payload;
    trial.received = std::move(run.received);
    trial.elapsed_ns = run.rx.active_elapsed_ns;
    trial.overruns = run.rx.overruns;
    result.traces.push_back(std::move(run.rx));
    result.trials.push_back(std::move(trial));
  }
  result.report = aggregate(result.trials);
  return result;
}

/// Line-oriented serialization consumed by scripts and the CLI.
inline void write_report(std::ostream& os, const Report& r) {
  char buf[64];
  auto emit = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    os << key << '=' << buf << '\n';
  };
  emit("tr_bps", r.tr_bps);
  emit("peak_bps", r.peak_bps);
  emit("ber_pct", r.ber_pct);
  emit("sd", r.sd);
  emit("se", r.se);
  os << "trials=" << r.trials << '\n';
}

}  // namespace wbchan
