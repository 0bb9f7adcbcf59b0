// Operator CLI for the write-buffer synchronization covert channel toolkit:
// calibration, framed send/recv over a shared directory, the simulated
// benchmark harness, and the sync-hammer degradation loop.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wbchan/config.hpp"
#include "wbchan/degrade.hpp"
#include "wbchan/session.hpp"
#include "wbchan/wbchan.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitCalibration = 2;
constexpr int kExitHandshake = 3;

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw wbchan::ConfigError("cannot write " + path);
  out << contents;
}

void probe_primitive(const wbchan::RunConfig& rc) {
  if (rc.medium.backend != wbchan::Backend::posix) return;
#ifndef F_FULLFSYNC
  if (rc.medium.primitive == wbchan::Primitive::fcntl_fullfsync)
    throw wbchan::ConfigError(
        "fcntl_fullfsync is not available on this platform; use fdatasync or fsync");
#endif
}

wbchan::BitString load_payload(const std::string& hex, const std::string& bits,
                               const std::string& file) {
  const int given = !hex.empty() + !bits.empty() + !file.empty();
  if (given != 1)
    throw wbchan::ConfigError("provide exactly one of --payload-hex, --payload-bits, --payload-file");
  if (!hex.empty()) return wbchan::BitString::from_hex(hex);
  if (!bits.empty()) return wbchan::BitString::from_string(bits);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw wbchan::ConfigError("cannot read payload file " + file);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.empty()) throw wbchan::ConfigError("payload file is empty");
  return wbchan::BitString::from_bytes(bytes);
}

int cmd_calibrate(const std::string& config_path, std::uint32_t samples) {
  wbchan::RunConfig rc = wbchan::load_run_config(config_path);
  probe_primitive(rc);
  wbchan::MediumHandle h = wbchan::open_medium(rc.medium, wbchan::Role::receiver);
  const wbchan::CalibrationResult cal = wbchan::calibrate(h, samples);
  std::cout << "t_b_hat_ns=" << cal.t_b_hat_ns << '\n'
            << "t_u_hat_ns=" << cal.t_u_hat_ns << '\n'
            << "threshold_ns=" << cal.threshold_ns << '\n';
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", cal.separation_ratio);
  std::cout << "separation_ratio=" << buf << '\n'
            << "samples_per_class=" << cal.samples_per_class << '\n';
  if (!rc.output.samples_path.empty()) {
    std::ostringstream os;
    wbchan::write_calibration_csv(os, cal);
    write_file(rc.output.samples_path, os.str());
  }
  return kExitOk;
}

void require_posix_pair(const wbchan::RunConfig& rc) {
  if (rc.medium.backend != wbchan::Backend::posix)
    throw wbchan::ConfigError(
        "send/recv pair separate processes over a shared directory; the simulated backend lives "
        "in one process only (use bench for simulated runs)");
}

int cmd_send(const std::string& config_path, const std::string& hex, const std::string& bits,
             const std::string& file) {
  wbchan::RunConfig rc = wbchan::load_run_config(config_path);
  probe_primitive(rc);
  require_posix_pair(rc);
  const wbchan::BitString payload = load_payload(hex, bits, file);
  wbchan::MediumHandle tx = wbchan::open_medium(rc.medium, wbchan::Role::sender);
  wbchan::session_send(tx, rc.strategy, rc.session, payload);
  std::cerr << "sent " << payload.size() << " payload bits\n";
  return kExitOk;
}

int cmd_recv(const std::string& config_path, std::uint64_t n_bits) {
  wbchan::RunConfig rc = wbchan::load_run_config(config_path);
  probe_primitive(rc);
  require_posix_pair(rc);
  std::optional<std::size_t> fixed;
  if (rc.session.length_header_bits == 0) {
    if (n_bits == 0) throw wbchan::ConfigError("--bits is required when length_header_bits=0");
    fixed = n_bits;
  }
  wbchan::MediumHandle rx = wbchan::open_medium(rc.medium, wbchan::Role::receiver);
  const wbchan::SessionResult r = wbchan::session_recv(rx, rc.strategy, rc.session, fixed);
  if (r.calibration)
    std::cerr << "calibrated: threshold_ns=" << r.calibration->threshold_ns
              << " separation_ratio=" << r.calibration->separation_ratio << '\n';
  if (!rc.output.payload_path.empty())
    write_file(rc.output.payload_path, r.payload.to_string() + "\n");
  else
    std::cout << r.payload.to_string() << '\n';
  if (!rc.output.trace_path.empty()) {
    std::ostringstream os;
    wbchan::write_trace_csv(os, r.trace);
    write_file(rc.output.trace_path, os.str());
  }
  return kExitOk;
}

void apply_slot(wbchan::StrategyConfig& s, std::uint64_t slot_ns, std::uint64_t t_b_hat_ns) {
  if (auto* c = std::get_if<wbchan::SingleFileCfg>(&s)) {
    c->slot_ns = slot_ns;
    c->t_b_hat_ns = t_b_hat_ns;
  } else if (auto* c = std::get_if<wbchan::SinglePageCfg>(&s)) {
    c->slot_ns = slot_ns;
    c->t_b_hat_ns = t_b_hat_ns;
  } else if (auto* c = std::get_if<wbchan::MultiBitCfg>(&s)) {
    c->slot_ns = slot_ns;
    c->t_b_hat_ns = t_b_hat_ns;
  } else if (auto* c = std::get_if<wbchan::AsyncSlotCfg>(&s)) {
    c->slot_ns = slot_ns;
    c->t_b_hat_ns = t_b_hat_ns;
  } else {
    throw wbchan::ConfigError("slot_factors applies to slotted strategies only");
  }
}

void seed_t_b_hat(wbchan::StrategyConfig& s, std::uint64_t t_b_hat_ns) {
  if (auto* c = std::get_if<wbchan::SingleFileCfg>(&s)) {
    if (c->t_b_hat_ns == 0) c->t_b_hat_ns = t_b_hat_ns;
  } else if (auto* c = std::get_if<wbchan::SinglePageCfg>(&s)) {
    if (c->t_b_hat_ns == 0) c->t_b_hat_ns = t_b_hat_ns;
  } else if (auto* c = std::get_if<wbchan::MultiBitCfg>(&s)) {
    if (c->t_b_hat_ns == 0) c->t_b_hat_ns = t_b_hat_ns;
  } else if (auto* c = std::get_if<wbchan::AsyncSlotCfg>(&s)) {
    if (c->t_b_hat_ns == 0) c->t_b_hat_ns = t_b_hat_ns;
  }
}

int cmd_bench(const std::string& config_path) {
  wbchan::RunConfig rc = wbchan::load_run_config(config_path);
  probe_primitive(rc);

  // One calibration drives the slot sizing for every sweep point.
  std::uint64_t t_b_hat = 0;
  {
    wbchan::MediumConfig cal_cfg = rc.medium;
    cal_cfg.unit_count = 1;
    cal_cfg.sim.seed = wbchan::derive_seed(rc.bench.seed, 0x5ca1ab1e);
    wbchan::MediumHandle h = wbchan::open_medium(cal_cfg, wbchan::Role::receiver);
    t_b_hat = wbchan::calibrate(h, rc.bench.calibration_samples).t_b_hat_ns;
  }

  std::ostringstream out;
  if (rc.slot_factors.empty()) {
    wbchan::StrategyConfig strategy = rc.strategy;
    seed_t_b_hat(strategy, t_b_hat);
    const wbchan::BenchResult r = wbchan::bench(strategy, rc.medium, rc.bench);
    wbchan::write_report(out, r.report);
    if (!rc.output.trace_path.empty())
      for (std::size_t i = 0; i < r.traces.size(); ++i) {
        std::ostringstream os;
        wbchan::write_trace_csv(os, r.traces[i]);
        write_file(rc.output.trace_path + "." + std::to_string(i) + ".csv", os.str());
      }
  } else {
    bool first = true;
    for (const double factor : rc.slot_factors) {
      wbchan::StrategyConfig strategy = rc.strategy;
      const auto slot = static_cast<std::uint64_t>(factor * static_cast<double>(t_b_hat));
      apply_slot(strategy, slot, t_b_hat);
      const wbchan::BenchResult r = wbchan::bench(strategy, rc.medium, rc.bench);
      if (!first) out << '\n';
      first = false;
      out << "slot_ns=" << slot << '\n';
      wbchan::write_report(out, r.report);
    }
  }

  std::cout << out.str();
  if (!rc.output.report_path.empty()) write_file(rc.output.report_path, out.str());
  return kExitOk;
}

int cmd_degrade(const std::string& config_path, const std::string& dir, double duration_s,
                std::uint64_t interval_us, bool acknowledged) {
  std::cerr <<
      "wbchan degrade repeatedly forces memory-disk synchronization, which slows every\n"
      "process writing through this filesystem. Run it only against systems you own or\n"
      "are explicitly authorized to test.\n";
  if (!acknowledged)
    throw wbchan::ConfigError("degrade requires --i-understand-this-is-a-research-tool");

  std::string target = dir;
  wbchan::Primitive primitive = wbchan::Primitive::fdatasync;
  if (!config_path.empty()) {
    const wbchan::RunConfig rc = wbchan::load_run_config(config_path);
    if (target.empty()) target = rc.medium.dir_path;
    if (rc.medium.mode == wbchan::Mode::file) primitive = rc.medium.primitive;
  }
  if (target.empty()) throw wbchan::ConfigError("degrade needs --dir or a config with dir_path");

  const wbchan::DegradeResult r = wbchan::run_degrade_loop(target, primitive, duration_s,
                                                           interval_us);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", r.calls_per_sec);
  std::cout << "calls=" << r.calls << '\n'
            << "seconds=" << r.seconds << '\n'
            << "calls_per_sec=" << buf << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "wbchan: covert channels over memory-disk synchronization timing.\n"
      "Subcommands read a sectioned key=value config file; every key and its\n"
      "default is listed below."};
  app.require_subcommand(1);
  app.footer(wbchan::config_reference());

  std::string config_path;
  std::uint32_t samples = 1000;
  auto* cal = app.add_subcommand("calibrate", "Measure cached/uncached sync latencies and derive the threshold");
  cal->add_option("-c,--config", config_path, "Run configuration file")->required();
  cal->add_option("-n,--samples", samples, "Samples per latency class")->capture_default_str();

  std::string send_cfg, payload_hex, payload_bits, payload_file;
  auto* send = app.add_subcommand("send", "Transmit a framed payload (Trojan side, posix backend)");
  send->add_option("-c,--config", send_cfg, "Run configuration file")->required();
  send->add_option("--payload-hex", payload_hex, "Payload as a hex string, e.g. 0xDEAD");
  send->add_option("--payload-bits", payload_bits, "Payload as a 0/1 string");
  send->add_option("--payload-file", payload_file, "Payload file (raw bytes)");

  std::string recv_cfg;
  std::uint64_t recv_bits = 0;
  auto* recv = app.add_subcommand("recv", "Arm, receive one framed payload and print it (Spy side)");
  recv->add_option("-c,--config", recv_cfg, "Run configuration file")->required();
  recv->add_option("-b,--bits", recv_bits,
                   "Expected payload bits (required when length_header_bits=0)");

  std::string bench_cfg;
  auto* bench = app.add_subcommand("bench", "Run the repeated-trial benchmark on the simulator");
  bench->add_option("-c,--config", bench_cfg, "Run configuration file")->required();

  std::string degrade_cfg, degrade_dir;
  double duration_s = 1.0;
  std::uint64_t interval_us = 0;
  bool acknowledged = false;
  auto* degrade = app.add_subcommand("degrade", "Performance-degradation loop: hammer a sync primitive");
  degrade->add_option("-c,--config", degrade_cfg, "Run configuration file (optional)");
  degrade->add_option("-d,--dir", degrade_dir, "Target directory");
  degrade->add_option("--duration", duration_s, "Seconds to run")->capture_default_str();
  degrade->add_option("--interval", interval_us, "Microseconds between calls")->capture_default_str();
  degrade->add_flag("--i-understand-this-is-a-research-tool", acknowledged,
                    "Acknowledge the degradation side effects");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cal->parsed()) return cmd_calibrate(config_path, samples);
    if (send->parsed()) return cmd_send(send_cfg, payload_hex, payload_bits, payload_file);
    if (recv->parsed()) return cmd_recv(recv_cfg, recv_bits);
    if (bench->parsed()) return cmd_bench(bench_cfg);
    if (degrade->parsed())
      return cmd_degrade(degrade_cfg, degrade_dir, duration_s, interval_us, acknowledged);
  } catch (const wbchan::CalibrationError& e) {
    std::cerr << "calibration failed: " << e.what() << '\n';
    return kExitCalibration;
  } catch (const wbchan::HandshakeTimeout& e) {
    std::cerr << "handshake timeout: " << e.what() << '\n';
    return kExitHandshake;
  } catch (const wbchan::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
