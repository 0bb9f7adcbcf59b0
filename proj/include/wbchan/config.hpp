#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wbchan/bits.hpp"
#include "wbchan/codec.hpp"
#include "wbchan/error.hpp"
#include "wbchan/medium.hpp"
#include "wbchan/metrics.hpp"
#include "wbchan/strategies.hpp"

namespace wbchan {

/// Session-level knobs shared by send/recv: framing and the cross-process
/// handshake windows.
struct SessionConfig {
  BitString sync_seq = BitString::from_string(kDefaultSyncSeq);
  int length_header_bits = kDefaultLengthHeaderBits;
  std::uint64_t threshold_ns = 0;  // 0 = receiver calibrates at startup
  std::uint64_t handshake_timeout_ns = 60ull * 1'000'000'000ull;
  std::uint64_t oneshot_wait_ns = 3ull * 1'000'000'000ull;  // sender window before measuring
  std::uint32_t calibration_samples = 200;
};

struct OutputConfig {
  std::string report_path;
  std::string trace_path;
  std::string samples_path;
  std::string payload_path;
};

/// Everything one CLI invocation needs, parsed from a sectioned key=value
/// file. Unknown sections or keys are rejected.
struct RunConfig {
  MediumConfig medium;
  StrategyConfig strategy = SingleFileCfg{};
  BenchParams bench;
  SessionConfig session;
  OutputConfig output;
  std::vector<double> slot_factors;  // optional bench sweep, in units of t_b_hat
};

namespace detail {

using IniSection = std::map<std::string, std::string>;
using IniFile = std::map<std::string, IniSection>;

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline IniFile parse_ini(std::istream& in) {
  IniFile file;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string text = trim(line.substr(0, line.find_first_of("#;")));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section");
      section = trim(text.substr(1, text.size() - 2));
      file.try_emplace(section);
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(text.substr(0, eq));
    file[section][key] = trim(text.substr(eq + 1));
  }
  return file;
}

class SectionReader {
 public:
  SectionReader(const IniFile& file, std::string name) : name_(std::move(name)) {
    const auto it = file.find(name_);
    if (it != file.end()) entries_ = it->second;
  }

  ~SectionReader() = default;

  std::optional<std::string> take(const std::string& key) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    std::string v = it->second;
    entries_.erase(it);
    return v;
  }

  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const std::uint64_t out = std::stoull(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return out;
    } catch (...) {
      throw ConfigError("[" + name_ + "] " + key + ": expected an unsigned integer, got '" + *v + "'");
    }
  }

  double take_double(const std::string& key, double fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const double out = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return out;
    } catch (...) {
      throw ConfigError("[" + name_ + "] " + key + ": expected a number, got '" + *v + "'");
    }
  }

  std::string take_string(const std::string& key, const std::string& fallback) {
    return take(key).value_or(fallback);
  }

  /// Every key must have been consumed by now.
  void finish() const {
    if (!entries_.empty())
      throw ConfigError("[" + name_ + "] unknown key '" + entries_.begin()->first + "'");
  }

 private:
  std::string name_;
  IniSection entries_;
};

inline Backend parse_backend(const std::string& v) {
  if (v == "posix") return Backend::posix;
  if (v == "simulated" || v == "sim") return Backend::simulated;
  throw ConfigError("backend must be posix or simulated, got '" + v + "'");
}

inline Mode parse_mode(const std::string& v) {
  if (v == "file") return Mode::file;
  if (v == "page") return Mode::page;
  throw ConfigError("mode must be file or page, got '" + v + "'");
}

inline Primitive parse_primitive(const std::string& v) {
  if (v == "sync_all" || v == "sync") return Primitive::sync_all;
  if (v == "fsync") return Primitive::fsync;
  if (v == "fdatasync") return Primitive::fdatasync;
  if (v == "msync") return Primitive::msync;
  if (v == "fcntl_fullfsync") return Primitive::fcntl_fullfsync;
  throw ConfigError("unknown primitive '" + v + "'");
}

inline std::vector<double> parse_factor_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw ConfigError("slot_factors: expected a comma-separated list");
  return out;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  const detail::IniFile file = detail::parse_ini(in);
  for (const auto& [name, _] : file)
    if (name != "medium" && name != "sim" && name != "strategy" && name != "bench" &&
        name != "output")
      throw ConfigError("unknown section [" + name + "]");

  RunConfig rc;

  bool primitive_given = false;
  {
    detail::SectionReader s(file, "medium");
    if (const auto v = s.take("backend")) rc.medium.backend = detail::parse_backend(*v);
    if (const auto v = s.take("mode")) rc.medium.mode = detail::parse_mode(*v);
    rc.medium.unit_count = static_cast<std::uint32_t>(s.take_u64("unit_count", rc.medium.unit_count));
    if (const auto v = s.take("primitive")) {
      rc.medium.primitive = detail::parse_primitive(*v);
      primitive_given = true;
    }
    rc.medium.dir_path = s.take_string("dir_path", rc.medium.dir_path);
    rc.medium.page_size_bytes =
        static_cast<std::uint32_t>(s.take_u64("page_size_bytes", rc.medium.page_size_bytes));
    rc.medium.file_size_bytes = s.take_u64("file_size_bytes", rc.medium.file_size_bytes);
    s.finish();
  }
  // Page media have one primitive; remap the unset default, reject an
  // explicit mismatch at validation time.
  if (rc.medium.mode == Mode::page && !primitive_given) rc.medium.primitive = Primitive::msync;

  {
    detail::SectionReader s(file, "sim");
    rc.medium.sim.t_b_ns = s.take_u64("t_b_ns", rc.medium.sim.t_b_ns);
    rc.medium.sim.t_u_ns = s.take_u64("t_u_ns", rc.medium.sim.t_u_ns);
    rc.medium.sim.noise_frac = s.take_double("noise_frac", rc.medium.sim.noise_frac);
    rc.medium.sim.writeback_period_ns =
        s.take_u64("writeback_period_ns", rc.medium.sim.writeback_period_ns);
    rc.medium.sim.metadata_extra_ns =
        s.take_u64("metadata_extra_ns", rc.medium.sim.metadata_extra_ns);
    rc.medium.sim.seed = s.take_u64("seed", rc.medium.sim.seed);
    s.finish();
  }

  {
    detail::SectionReader s(file, "strategy");
    const std::string kind = s.take_string("kind", "single_file");
    if (kind == "single_file") {
      SingleFileCfg c;
      c.primitive = rc.medium.primitive;
      c.slot_ns = s.take_u64("slot_ns", 0);
      c.receiver_sleep_ns = s.take_u64("receiver_sleep_ns", 0);
      c.t_b_hat_ns = s.take_u64("t_b_hat_ns", 0);
      rc.strategy = c;
    } else if (kind == "single_page") {
      SinglePageCfg c;
      c.slot_ns = s.take_u64("slot_ns", 0);
      c.receiver_sleep_ns = s.take_u64("receiver_sleep_ns", 0);
      c.t_b_hat_ns = s.take_u64("t_b_hat_ns", 0);
      c.sync_len_bytes = static_cast<std::uint32_t>(s.take_u64("sync_len_bytes", rc.medium.page_size_bytes));
      rc.strategy = c;
    } else if (kind == "multi_bit") {
      MultiBitCfg c;
      c.files = static_cast<std::uint32_t>(s.take_u64("files", c.files));
      c.workers = static_cast<std::uint32_t>(s.take_u64("workers", c.workers));
      c.slot_ns = s.take_u64("slot_ns", 0);
      c.receiver_sleep_ns = s.take_u64("receiver_sleep_ns", 0);
      c.t_b_hat_ns = s.take_u64("t_b_hat_ns", 0);
      rc.strategy = c;
    } else if (kind == "async_slot") {
      AsyncSlotCfg c;
      c.units = static_cast<std::uint32_t>(s.take_u64("units", c.units));
      c.mode = rc.medium.mode;
      c.slot_ns = s.take_u64("slot_ns", 0);
      c.t_b_hat_ns = s.take_u64("t_b_hat_ns", 0);
      rc.strategy = c;
    } else if (kind == "async_free") {
      AsyncFreeCfg c;
      c.units = static_cast<std::uint32_t>(s.take_u64("units", c.units));
      c.t_s_ns = s.take_u64("t_s_ns", c.t_s_ns);
      c.resync_period_bits = static_cast<std::uint32_t>(
          s.take_u64("resync_period_bits", AsyncFreeCfg::default_resync_period(c.t_s_ns)));
      c.initial_sleep_ns = s.take_u64("initial_sleep_ns", c.initial_sleep_ns);
      c.prng_seed = s.take_u64("prng_seed", c.prng_seed);
      rc.strategy = c;
    } else if (kind == "one_shot") {
      OneShotCfg c;
      c.units = static_cast<std::uint32_t>(s.take_u64("units", 0));
      c.mode = rc.medium.mode;
      c.max_receiver_lag_ns = s.take_u64("max_receiver_lag_ns", c.max_receiver_lag_ns);
      rc.strategy = c;
    } else {
      throw ConfigError("unknown strategy kind '" + kind + "'");
    }
    if (const auto v = s.take("sync_seq")) rc.session.sync_seq = BitString::from_string(*v);
    rc.session.length_header_bits =
        static_cast<int>(s.take_u64("length_header_bits", rc.session.length_header_bits));
    rc.session.threshold_ns = s.take_u64("threshold_ns", 0);
    rc.session.handshake_timeout_ns =
        s.take_u64("handshake_timeout_ns", rc.session.handshake_timeout_ns);
    rc.session.oneshot_wait_ns = s.take_u64("oneshot_wait_ns", rc.session.oneshot_wait_ns);
    rc.session.calibration_samples =
        static_cast<std::uint32_t>(s.take_u64("calibration_samples", rc.session.calibration_samples));
    s.finish();
  }

  {
    detail::SectionReader s(file, "bench");
    rc.bench.trials = static_cast<std::uint32_t>(s.take_u64("trials", rc.bench.trials));
    rc.bench.bits_per_trial =
        static_cast<std::uint32_t>(s.take_u64("bits_per_trial", rc.bench.bits_per_trial));
    rc.bench.payload_ones_ratio = s.take_double("ones_ratio", rc.bench.payload_ones_ratio);
    rc.bench.seed = s.take_u64("seed", rc.bench.seed);
    rc.bench.calibration_samples =
        static_cast<std::uint32_t>(s.take_u64("calibration_samples", rc.bench.calibration_samples));
    rc.bench.oneshot_lag_ns = s.take_u64("oneshot_lag_ns", 0);
    if (const auto v = s.take("slot_factors")) rc.slot_factors = detail::parse_factor_list(*v);
    s.finish();
  }

  {
    detail::SectionReader s(file, "output");
    rc.output.report_path = s.take_string("report_path", "");
    rc.output.trace_path = s.take_string("trace_path", "");
    rc.output.samples_path = s.take_string("samples_path", "");
    rc.output.payload_path = s.take_string("payload_path", "");
    s.finish();
  }

  if (rc.bench.trials == 0) throw ConfigError("[bench] trials must be positive");
  if (rc.bench.payload_ones_ratio < 0.0 || rc.bench.payload_ones_ratio > 1.0)
    throw ConfigError("[bench] ones_ratio must be within [0, 1]");
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_run_config(in);
}

/// The full key reference printed by --help.
inline const char* config_reference() {
  return
      "Config file reference (sectioned key=value; # starts a comment):\n"
      "  [medium]   backend=simulated|posix  mode=file|page  unit_count=1\n"
      "             primitive=sync_all|fsync|fdatasync|msync|fcntl_fullfsync (default fdatasync;\n"
      "             page mode uses msync)  dir_path=<dir, posix only>\n"
      "             page_size_bytes=4096  file_size_bytes=4096\n"
      "  [sim]      t_b_ns=918000  t_u_ns=64000  noise_frac=0.05\n"
      "             writeback_period_ns=30000000000  metadata_extra_ns=2000000  seed=1\n"
      "  [strategy] kind=single_file|single_page|multi_bit|async_slot|async_free|one_shot\n"
      "             slot_ns=0 (auto)  receiver_sleep_ns=0 (auto)  t_b_hat_ns=0 (calibrate)\n"
      "             files=4 workers=4 (multi_bit)  units=8|500 (async)  t_s_ns=20000\n"
      "             resync_period_bits=20000  initial_sleep_ns=3000000  prng_seed=42\n"
      "             max_receiver_lag_ns=20000000000 (one_shot)  sync_len_bytes=4096 (single_page)\n"
      "             sync_seq=10101010  length_header_bits=16  threshold_ns=0 (calibrate)\n"
      "             handshake_timeout_ns=60000000000  oneshot_wait_ns=3000000000\n"
      "             calibration_samples=200\n"
      "  [bench]    trials=50  bits_per_trial=1024  ones_ratio=0.5  seed=42\n"
      "             calibration_samples=200  oneshot_lag_ns=0  slot_factors=1.0,1.5,2.0 (sweep)\n"
      "  [output]   report_path=  trace_path=  samples_path=  payload_path=\n";
}

}  // namespace wbchan
