#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "wbchan/config.hpp"

using namespace wbchan;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}

}  // namespace

TEST_CASE("a minimal config gets all documented defaults") {
  const RunConfig rc = parse("[medium]\nbackend = simulated\n");
  CHECK(rc.medium.backend == Backend::simulated);
  CHECK(rc.medium.unit_count == 1);
  CHECK(rc.medium.sim.t_b_ns == 918'000);
  CHECK(rc.medium.sim.t_u_ns == 64'000);
  CHECK(rc.medium.sim.writeback_period_ns == 30'000'000'000ull);
  CHECK(rc.bench.trials == 50);
  CHECK(rc.bench.bits_per_trial == 1024);
  CHECK(rc.session.sync_seq.to_string() == "10101010");
  CHECK(rc.session.length_header_bits == 16);
  CHECK(std::holds_alternative<SingleFileCfg>(rc.strategy));
}

TEST_CASE("sections and comments parse") {
  const RunConfig rc = parse(
      "# benchmark of the one-shot page strategy\n"
      "[medium]\n"
      "backend = simulated\n"
      "mode = page\n"
      "unit_count = 1024\n"
      "file_size_bytes = 4194304\n"
      "primitive = msync\n"
      "[sim]\n"
      "noise_frac = 0.05\n"
      "seed = 7\n"
      "[strategy]\n"
      "kind = one_shot\n"
      "[bench]\n"
      "trials = 50\n"
      "ones_ratio = 0.5 ; table row\n"
      "[output]\n"
      "report_path = out.txt\n");
  CHECK(rc.medium.mode == Mode::page);
  CHECK(rc.medium.unit_count == 1024);
  CHECK(rc.medium.sim.seed == 7);
  CHECK(std::holds_alternative<OneShotCfg>(rc.strategy));
  CHECK(rc.output.report_path == "out.txt");
  CHECK_NOTHROW(rc.medium.validate());
}

TEST_CASE("unknown keys and sections are rejected") {
  CHECK_THROWS_AS(parse("[medium]\nbacknd = simulated\n"), ConfigError);
  CHECK_THROWS_AS(parse("[media]\nbackend = simulated\n"), ConfigError);
  CHECK_THROWS_AS(parse("[strategy]\nkind = single_file\nslots_ns = 10\n"), ConfigError);
  CHECK_THROWS_AS(parse("[strategy]\nkind = quantum\n"), ConfigError);
  CHECK_THROWS_AS(parse("backend = simulated\n"), ConfigError);  // key outside a section
  CHECK_THROWS_AS(parse("[medium]\nunit_count = soon\n"), ConfigError);
}

TEST_CASE("strategy sections populate their variant") {
  const RunConfig af = parse(
      "[strategy]\nkind = async_free\nunits = 250\nt_s_ns = 10000\nresync_period_bits = 5000\n"
      "prng_seed = 9\n");
  const auto& cfg = std::get<AsyncFreeCfg>(af.strategy);
  CHECK(cfg.units == 250);
  CHECK(cfg.t_s_ns == 10'000);
  CHECK(cfg.resync_period_bits == 5'000);
  CHECK(cfg.prng_seed == 9);
  CHECK(cfg.initial_sleep_ns == 3'000'000);

  const RunConfig mb = parse("[strategy]\nkind = multi_bit\nslot_ns = 2300000\n");
  CHECK(std::get<MultiBitCfg>(mb.strategy).slot_ns == 2'300'000);

  const RunConfig sweep = parse("[bench]\nslot_factors = 1.0, 1.5, 2.0, 3.0\n");
  CHECK(sweep.slot_factors == std::vector<double>{1.0, 1.5, 2.0, 3.0});
}

TEST_CASE("slot-free resync period defaults to the operating points") {
  const RunConfig with_wait = parse("[strategy]\nkind = async_free\n");
  CHECK(std::get<AsyncFreeCfg>(with_wait.strategy).resync_period_bits == 20'000);

  const RunConfig no_wait = parse("[strategy]\nkind = async_free\nt_s_ns = 0\n");
  CHECK(std::get<AsyncFreeCfg>(no_wait.strategy).resync_period_bits == 1'600);

  const RunConfig pinned = parse("[strategy]\nkind = async_free\nt_s_ns = 0\nresync_period_bits = 5000\n");
  CHECK(std::get<AsyncFreeCfg>(pinned.strategy).resync_period_bits == 5'000);
}

TEST_CASE("bench bounds are validated") {
  CHECK_THROWS_AS(parse("[bench]\ntrials = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[bench]\nones_ratio = 1.5\n"), ConfigError);
}

TEST_CASE("missing config files raise a config error") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/path/x.cfg"), ConfigError);
}
