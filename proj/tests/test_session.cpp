#include <catch2/catch_amalgamated.hpp>

#include "wbchan/metrics.hpp"
#include "wbchan/session.hpp"

using namespace wbchan;

namespace {

MediumConfig sim_cfg(std::uint32_t units, Mode mode = Mode::file) {
  MediumConfig cfg;
  cfg.backend = Backend::simulated;
  cfg.mode = mode;
  cfg.primitive = mode == Mode::page ? Primitive::msync : Primitive::fdatasync;
  cfg.unit_count = units;
  cfg.file_size_bytes = static_cast<std::uint64_t>(units) * 4096;
  cfg.sim.noise_frac = 0.0;
  return cfg;
}

SessionResult roundtrip(const MediumConfig& medium, const StrategyConfig& strategy,
                        const SessionConfig& session, const BitString& payload,
                        std::optional<std::size_t> fixed_bits = std::nullopt) {
  SimMediumPtr m = make_sim_medium(medium);
  MediumHandle rx = open_sim(m, Role::receiver);
  MediumHandle tx = open_sim(m, Role::sender);
  SessionResult out;
  run_pair(
      tx, [&] { session_send(tx, strategy, session, payload); }, rx,
      [&] { out = session_recv(rx, strategy, session, fixed_bits); });
  return out;
}

}  // namespace

TEST_CASE("single-file session round trip with the default frame") {
  SingleFileCfg strat;
  strat.t_b_hat_ns = 918'000;
  SessionConfig session;
  session.handshake_timeout_ns = 600ull * 1'000'000'000ull;  // virtual time is free
  const BitString payload = BitString::from_hex("0xDEAD");
  REQUIRE(payload.size() == 16);

  const SessionResult r = roundtrip(sim_cfg(3), StrategyConfig{strat}, session, payload);
  CHECK(r.payload == payload);
  CHECK(r.calibration.has_value());  // no threshold configured: the Spy calibrated
  CHECK(r.calibration->threshold_ns == 491'000);
}

TEST_CASE("session uses the configured threshold without calibrating") {
  SingleFileCfg strat;
  strat.t_b_hat_ns = 918'000;
  SessionConfig session;
  session.threshold_ns = 491'000;
  session.handshake_timeout_ns = 600ull * 1'000'000'000ull;
  const BitString payload = random_payload(64, 12);

  const SessionResult r = roundtrip(sim_cfg(3), StrategyConfig{strat}, session, payload);
  CHECK(r.payload == payload);
  CHECK_FALSE(r.calibration.has_value());
}

TEST_CASE("fixed-length session (no header) delivers the expected bits") {
  SingleFileCfg strat;
  strat.t_b_hat_ns = 918'000;
  SessionConfig session;
  session.length_header_bits = 0;
  session.handshake_timeout_ns = 600ull * 1'000'000'000ull;
  const BitString payload = random_payload(32, 7);

  const SessionResult r =
      roundtrip(sim_cfg(3), StrategyConfig{strat}, session, payload, payload.size());
  CHECK(r.payload == payload);
}

TEST_CASE("one-shot session frames the payload across units") {
  OneShotCfg strat;
  SessionConfig session;
  session.handshake_timeout_ns = 600ull * 1'000'000'000ull;
  const BitString payload = BitString::from_hex("0xC0FFEE");

  // 8 sync + 16 header + 24 payload = 48 wire bits; 64 data units + 2 signals
  const SessionResult r = roundtrip(sim_cfg(66), StrategyConfig{strat}, session, payload);
  CHECK(r.payload == payload);
  CHECK(r.rounds == 1);
}

TEST_CASE("async slot-free session whitens everything after the sync sequence") {
  AsyncFreeCfg strat;
  strat.units = 64;
  strat.prng_seed = 5;
  SessionConfig session;
  session.handshake_timeout_ns = 600ull * 1'000'000'000ull;
  const BitString payload = random_payload(48, 2);

  const SessionResult r = roundtrip(sim_cfg(66), StrategyConfig{strat}, session, payload);
  CHECK(r.payload == payload);
}

TEST_CASE("session validation rejects unusable setups") {
  SessionConfig session;
  SingleFileCfg strat;
  strat.t_b_hat_ns = 918'000;

  SimMediumPtr m = make_sim_medium(sim_cfg(2));  // too small: needs data + 2 signal units
  MediumHandle rx = open_sim(m, Role::receiver);
  CHECK_THROWS_AS(session_recv(rx, StrategyConfig{strat}, session, std::nullopt), ConfigError);
  rx.finish();

  SessionConfig bad_seq = session;
  bad_seq.sync_seq = BitString::from_string("01010101");  // must start with 1
  SimMediumPtr m2 = make_sim_medium(sim_cfg(3));
  MediumHandle rx2 = open_sim(m2, Role::receiver);
  CHECK_THROWS_AS(session_recv(rx2, StrategyConfig{strat}, bad_seq, std::nullopt), ConfigError);

  SessionConfig no_header = session;
  no_header.length_header_bits = 0;  // and no fixed size either
  CHECK_THROWS_AS(session_recv(rx2, StrategyConfig{strat}, no_header, std::nullopt), ConfigError);
}

TEST_CASE("receiver times out when no sender shows up") {
  SingleFileCfg strat;
  strat.t_b_hat_ns = 918'000;
  SessionConfig session;
  session.threshold_ns = 491'000;
  session.handshake_timeout_ns = 5ull * 1'000'000'000ull;  // 5 virtual seconds

  SimMediumPtr m = make_sim_medium(sim_cfg(3));
  MediumHandle rx = open_sim(m, Role::receiver);
  CHECK_THROWS_AS(session_recv(rx, StrategyConfig{strat}, session, std::nullopt),
                  HandshakeTimeout);
}

TEST_CASE("sender times out when nobody arms") {
  SingleFileCfg strat;
  strat.t_b_hat_ns = 918'000;
  SessionConfig session;
  session.threshold_ns = 491'000;
  session.handshake_timeout_ns = 5ull * 1'000'000'000ull;

  SimMediumPtr m = make_sim_medium(sim_cfg(3));
  MediumHandle tx = open_sim(m, Role::sender);
  CHECK_THROWS_AS(session_send(tx, StrategyConfig{strat}, session, BitString::from_string("1")),
                  HandshakeTimeout);
}
