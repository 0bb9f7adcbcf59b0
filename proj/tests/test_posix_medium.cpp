#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wbchan/calibration.hpp"
#include "wbchan/degrade.hpp"
#include "wbchan/detail/posix_backend.hpp"
#include "wbchan/metrics.hpp"
#include "wbchan/protocols.hpp"

using namespace wbchan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("wbchan_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

MediumConfig posix_cfg(const fs::path& dir, std::uint32_t units, Mode mode = Mode::file) {
  MediumConfig cfg;
  cfg.backend = Backend::posix;
  cfg.mode = mode;
  cfg.primitive = mode == Mode::page ? Primitive::msync : Primitive::fdatasync;
  cfg.unit_count = units;
  cfg.dir_path = dir.string();
  cfg.file_size_bytes = mode == Mode::page ? units * 4096ull : 4096;
  return cfg;
}

}  // namespace

TEST_CASE("posix file medium: receiver creates the unit files") {
  TempDir dir;
  MediumHandle rx = open_medium(posix_cfg(dir.path, 3), Role::receiver);
  for (int i = 0; i < 3; ++i) {
    CAPTURE(i);
    CHECK(fs::exists(dir.path / ("unit_" + std::to_string(i) + ".dat")));
  }
  CHECK(fs::file_size(dir.path / "unit_0.dat") == 4096);
  rx.dirty(0);
  CHECK(rx.sync_unit(0) > 0);
}

TEST_CASE("posix file medium: the sender cannot create files") {
  TempDir dir;
  CHECK_THROWS_AS(open_medium(posix_cfg(dir.path, 1), Role::sender), MediumError);
}

TEST_CASE("posix medium: a missing directory is an error") {
  MediumConfig cfg = posix_cfg("/nonexistent/wbchan/dir", 1);
  CHECK_THROWS_AS(open_medium(cfg, Role::receiver), MediumError);
}

TEST_CASE("posix file medium: read-only sender can fdatasync") {
  TempDir dir;
  MediumHandle rx = open_medium(posix_cfg(dir.path, 1), Role::receiver);
  rx.dirty(0);
  MediumHandle tx = open_medium(posix_cfg(dir.path, 1), Role::sender);
  CHECK_THROWS_AS(tx.dirty(0), MediumError);  // role stays enforced
  CHECK_NOTHROW(tx.sync_unit(0));             // the read-only descriptor still syncs
}

TEST_CASE("posix page medium: mapping, dirtying and msync") {
  TempDir dir;
  MediumHandle rx = open_medium(posix_cfg(dir.path, 4, Mode::page), Role::receiver);
  CHECK(fs::exists(dir.path / "pages.dat"));
  rx.dirty(3);
  CHECK_NOTHROW(rx.sync_unit(3));
  CHECK_THROWS_AS(rx.sync_unit(4), MediumError);

  MediumHandle tx = open_medium(posix_cfg(dir.path, 4, Mode::page), Role::sender);
  CHECK_NOTHROW(tx.sync_unit(0));  // read-only mapping accepts msync
}

TEST_CASE("posix medium: advance_clock is rejected") {
  TempDir dir;
  MediumHandle rx = open_medium(posix_cfg(dir.path, 1), Role::receiver);
  CHECK_THROWS_AS(rx.advance_clock(1000), MediumError);
}

TEST_CASE("posix medium: sync_group measures all units concurrently") {
  TempDir dir;
  MediumHandle rx = open_medium(posix_cfg(dir.path, 4), Role::receiver);
  for (UnitId u = 0; u < 4; ++u) rx.dirty(u);
  const std::vector<std::uint64_t> lat = rx.sync_group({0, 1, 2, 3});
  REQUIRE(lat.size() == 4);
  for (auto l : lat) CHECK(l > 0);
}

TEST_CASE("degrade loop: liveness and the interval rate cap") {
  TempDir dir;
  const wbchan::DegradeResult fast =
      wbchan::run_degrade_loop(dir.path.string(), Primitive::fdatasync, 0.3, 0);
  CHECK(fast.calls_per_sec > 100.0);

  const wbchan::DegradeResult slow =
      wbchan::run_degrade_loop(dir.path.string(), Primitive::fdatasync, 0.3, 10'000);
  CHECK(slow.calls_per_sec <= 100.0);  // a 10 ms pause caps the rate
}

// Kernel-timing-dependent checks; enable with WBCHAN_LINUX_TESTS=ON (the
// separation only exists on a disk-backed filesystem).
TEST_CASE("linux timing separation and channel round trip", "[.][linux-integration]") {
  TempDir dir;

  SECTION("measured separation ratio is at least 5") {
    MediumHandle rx = open_medium(posix_cfg(dir.path, 1), Role::receiver);
    const CalibrationResult cal = calibrate(rx, 100);
    CHECK(cal.separation_ratio >= 5.0);
  }

  SECTION("128 bits over a single file arrive with BER below 5 percent") {
    MediumConfig cfg = posix_cfg(dir.path, 1);
    MediumHandle rx = open_medium(cfg, Role::receiver);
    const CalibrationResult cal = calibrate(rx, 100);

    SingleFileCfg strat;
    strat.t_b_hat_ns = cal.t_b_hat_ns;
    const BitString payload = random_payload(128, 5);

    MediumHandle tx = open_medium(cfg, Role::sender);
    RecvResult rr;
    run_pair(
        tx, [&] { send_single(tx, strat, payload); }, rx,
        [&] { rr = recv_single(rx, strat, payload.size(), cal.threshold_ns); });
    CHECK(ber(payload, rr.bits) <= 0.05);
  }
}
