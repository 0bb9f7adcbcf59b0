#include <catch2/catch_amalgamated.hpp>

#include "wbchan/detail/sim_backend.hpp"
#include "wbchan/medium.hpp"
#include "wbchan/wbchan.hpp"

using namespace wbchan;

namespace {

MediumConfig sim_cfg(std::uint32_t units = 1, double noise = 0.0) {
  MediumConfig cfg;
  cfg.backend = Backend::simulated;
  cfg.mode = Mode::file;
  cfg.unit_count = units;
  cfg.primitive = Primitive::fdatasync;
  cfg.sim.noise_frac = noise;
  return cfg;
}

}  // namespace

TEST_CASE("config validation rejects degenerate media") {
  MediumConfig cfg = sim_cfg(0);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // empty medium

  MediumConfig fd = sim_cfg(1023);
  fd.backend = Backend::posix;
  fd.dir_path = "/tmp";
  CHECK_THROWS_AS(fd.validate(), ConfigError);  // descriptor budget
  fd.unit_count = 1022;
  CHECK_NOTHROW(fd.validate());

  MediumConfig page = sim_cfg(4);
  page.mode = Mode::page;
  page.primitive = Primitive::msync;
  page.page_size_bytes = 4096;
  page.file_size_bytes = 3 * 4096;  // too small for 4 pages
  CHECK_THROWS_AS(page.validate(), ConfigError);
  page.file_size_bytes = 4 * 4096;
  CHECK_NOTHROW(page.validate());

  MediumConfig bad_sim = sim_cfg(1);
  bad_sim.sim.t_u_ns = bad_sim.sim.t_b_ns;
  CHECK_THROWS_AS(bad_sim.validate(), ConfigError);

  MediumConfig mismatch = sim_cfg(1);
  mismatch.primitive = Primitive::msync;  // msync needs page mode
  CHECK_THROWS_AS(mismatch.validate(), ConfigError);
}

TEST_CASE("noiseless sync latencies follow the write-buffer state machine") {
  MediumHandle h = open_medium(sim_cfg(), Role::receiver);
  h.dirty(0);
  CHECK(h.sync_unit(0) == 918'000);  // flushing a dirty unit costs t_b
  CHECK(h.sync_unit(0) == 64'000);   // already clean: t_u

  // A unit past the 30 s write-back deadline was flushed by the daemon.
  h.dirty(0);
  h.advance_clock(31'000'000'000);
  CHECK(h.sync_unit(0) == 64'000);
}

TEST_CASE("write-back deadline is strict: cached iff synced before T + period") {
  MediumHandle h = open_medium(sim_cfg(), Role::receiver);
  const std::uint64_t period = h.config().sim.writeback_period_ns;

  h.dirty(0);
  h.advance_clock(static_cast<std::int64_t>(period) - static_cast<std::int64_t>(kSimWriteCostNs) - 1);
  CHECK(h.sync_unit(0) == 918'000);  // age = period - 1

  h.dirty(0);
  h.advance_clock(static_cast<std::int64_t>(period) - static_cast<std::int64_t>(kSimWriteCostNs));
  CHECK(h.sync_unit(0) == 64'000);  // age = period exactly: already flushed
}

TEST_CASE("re-dirtying refreshes the write-back age") {
  MediumHandle h = open_medium(sim_cfg(), Role::receiver);
  h.dirty(0);
  h.advance_clock(29'000'000'000);
  h.dirty(0);  // refresh
  h.advance_clock(2'000'000'000);  // 31 s since the first write, 2 s since refresh
  CHECK(h.sync_unit(0) == 918'000);
}

TEST_CASE("advance_clock is monotone") {
  MediumHandle h = open_medium(sim_cfg(), Role::receiver);
  const std::uint64_t t0 = h.now_ns();
  h.advance_clock(0);
  CHECK(h.now_ns() == t0);
  CHECK_THROWS_AS(h.advance_clock(-1), MediumError);
}

TEST_CASE("role and range violations are rejected") {
  SimMediumPtr medium = make_sim_medium(sim_cfg(2));
  MediumHandle tx = open_sim(medium, Role::sender);
  CHECK_THROWS_AS(tx.dirty(0), MediumError);  // only the receiver writes
  CHECK_THROWS_AS(tx.sync_unit(2), MediumError);
  tx.finish();
  MediumHandle rx = open_sim(medium, Role::receiver);
  CHECK_THROWS_AS(rx.dirty(2), MediumError);
}

TEST_CASE("sender handles can synchronize without write access") {
  SimMediumPtr medium = make_sim_medium(sim_cfg(1));
  {
    MediumHandle rx = open_sim(medium, Role::receiver);
    rx.dirty(0);
  }
  MediumHandle tx = open_sim(medium, Role::sender);
  CHECK(tx.sync_unit(0) == 918'000);  // flushes the receiver's write
}

TEST_CASE("primitive/mode compatibility is enforced per call") {
  MediumHandle file = open_medium(sim_cfg(), Role::receiver);
  CHECK_THROWS_AS(file.sync_unit(0, Primitive::msync), MediumError);

  MediumConfig pcfg = sim_cfg(2);
  pcfg.mode = Mode::page;
  pcfg.primitive = Primitive::msync;
  pcfg.file_size_bytes = 2 * 4096;
  MediumHandle page = open_medium(pcfg, Role::receiver);
  CHECK_THROWS_AS(page.sync_unit(0, Primitive::fdatasync), MediumError);
  page.dirty(1);
  CHECK(page.sync_unit(1, Primitive::msync) == 918'000);
}

TEST_CASE("metadata-heavy primitives pay the extra flush cost when dirty") {
  MediumHandle h = open_medium(sim_cfg(), Role::receiver);
  h.dirty(0);
  CHECK(h.sync_unit(0, Primitive::fsync) == 918'000 + 2'000'000);
  CHECK(h.sync_unit(0, Primitive::fsync) == 64'000);  // uncached path has no extra

  h.dirty(0);
  CHECK(h.sync_unit(0, Primitive::fcntl_fullfsync) == 918'000 + 2'000'000);
}

TEST_CASE("sync_all flushes every unit") {
  MediumHandle h = open_medium(sim_cfg(3), Role::receiver);
  h.dirty(0);
  h.dirty(1);
  CHECK(h.sync_unit(2, Primitive::sync_all) == 918'000 + 2'000'000);  // something was dirty
  CHECK(h.sync_unit(0) == 64'000);
  CHECK(h.sync_unit(1) == 64'000);
  CHECK(h.sync_unit(2, Primitive::sync_all) == 64'000);  // nothing left to flush
}

TEST_CASE("clock advances by the operation costs") {
  MediumHandle h = open_medium(sim_cfg(), Role::receiver);
  const std::uint64_t t0 = h.now_ns();
  h.dirty(0);
  CHECK(h.now_ns() == t0 + kSimWriteCostNs);
  const std::uint64_t lat = h.sync_unit(0);
  CHECK(h.now_ns() == t0 + kSimWriteCostNs + lat);
  h.wait_until(t0 + 10'000'000);
  CHECK(h.now_ns() == t0 + 10'000'000);
  h.wait_until(t0);  // waiting into the past is a no-op
  CHECK(h.now_ns() == t0 + 10'000'000);
}

TEST_CASE("seeded noise replays bit-identically across runs") {
  auto run_script = [] {
    MediumConfig cfg = sim_cfg(3, 0.05);
    cfg.sim.seed = 77;
    MediumHandle h = open_medium(cfg, Role::receiver);
    std::vector<std::uint64_t> lat;
    for (int rep = 0; rep < 50; ++rep) {
      h.dirty(static_cast<UnitId>(rep % 3));
      lat.push_back(h.sync_unit(static_cast<UnitId>(rep % 3)));
      h.advance_clock(rep * 1000);
      lat.push_back(h.sync_unit(static_cast<UnitId>((rep + 1) % 3)));
    }
    return lat;
  };
  CHECK(run_script() == run_script());
}

TEST_CASE("noiseless separation matches the configured operating point") {
  MediumConfig cfg = sim_cfg();
  const double ratio = static_cast<double>(cfg.sim.t_b_ns) / static_cast<double>(cfg.sim.t_u_ns);
  CHECK(ratio > 10.0);
  CHECK_THAT(ratio, Catch::Matchers::WithinAbs(14.34, 0.1));
}

TEST_CASE("one-shot capacity of a 25 MB page file is 6400 bits") {
  MediumConfig cfg;
  cfg.mode = Mode::page;
  cfg.primitive = Primitive::msync;
  cfg.unit_count = 6400;
  cfg.page_size_bytes = 4096;
  cfg.file_size_bytes = 25ull * 1024 * 1024;
  CHECK(cfg.capacity_bits() == 6400);
}
