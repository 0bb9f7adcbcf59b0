#include <catch2/catch_amalgamated.hpp>

#include "wbchan/calibration.hpp"
#include "wbchan/detail/sim_backend.hpp"
#include "wbchan/detail/posix_backend.hpp"

using namespace wbchan;

namespace {

MediumConfig sim_cfg(double noise, std::uint64_t seed = 1) {
  MediumConfig cfg;
  cfg.backend = Backend::simulated;
  cfg.unit_count = 1;
  cfg.sim.noise_frac = noise;
  cfg.sim.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("classify splits on a strict threshold") {
  CHECK(classify(64'000, 491'000) == LatencyClass::uncached);
  CHECK(classify(918'000, 491'000) == LatencyClass::cached);
  CHECK(classify(491'000, 491'000) == LatencyClass::cached);  // tie goes to cached
  CHECK(decode_bit(64'000, 491'000) == 1);
  CHECK(decode_bit(918'000, 491'000) == 0);
}

TEST_CASE("classification is monotone in latency") {
  U64Stream rng(3);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t threshold = 1 + rng.next() % 1'000'000;
    const std::uint64_t t1 = rng.next() % 2'000'000;
    const std::uint64_t t2 = t1 + rng.next() % 1'000'000;
    if (classify(t1, threshold) == LatencyClass::cached)
      REQUIRE(classify(t2, threshold) == LatencyClass::cached);
  }
}

TEST_CASE("noiseless calibration recovers the simulator parameters exactly") {
  MediumHandle h = open_medium(sim_cfg(0.0), Role::receiver);
  const CalibrationResult r = calibrate(h, 10);
  CHECK(r.t_b_hat_ns == 918'000);
  CHECK(r.t_u_hat_ns == 64'000);
  CHECK(r.threshold_ns == 491'000);
  CHECK_THAT(r.separation_ratio, Catch::Matchers::WithinAbs(14.34, 0.01));
  CHECK(r.cached_samples.size() == 10);
  CHECK(r.uncached_samples.size() == 10);
}

TEST_CASE("default threshold sits near the reported operating point") {
  // 0.476 ms lies strictly between the class medians and within 10% of the
  // midpoint 0.491 ms.
  const std::uint64_t midpoint = (918'000 + 64'000) / 2;
  CHECK(midpoint == 491'000);
  CHECK(476'000 > 64'000);
  CHECK(476'000 < 918'000);
  CHECK(std::abs(491'000 - 476'000) < 0.05 * 491'000 + 1);
}

TEST_CASE("noisy calibration recovers both medians within 3 percent") {
  MediumHandle h = open_medium(sim_cfg(0.05, 99), Role::receiver);
  const CalibrationResult r = calibrate(h, 1000);
  CHECK(std::abs(static_cast<double>(r.t_b_hat_ns) - 918'000.0) < 0.03 * 918'000.0);
  CHECK(std::abs(static_cast<double>(r.t_u_hat_ns) - 64'000.0) < 0.03 * 64'000.0);
  CHECK(r.t_u_hat_ns < r.threshold_ns);
  CHECK(r.threshold_ns < r.t_b_hat_ns);
}

TEST_CASE("calibration fails when the classes overlap") {
  MediumConfig cfg = sim_cfg(0.0);
  cfg.sim.t_b_ns = 100'000;
  cfg.sim.t_u_ns = 90'000;  // ratio 1.11, below the usability floor
  MediumHandle h = open_medium(cfg, Role::receiver);
  CHECK_THROWS_AS(calibrate(h, 10), CalibrationError);
}

TEST_CASE("calibration preconditions") {
  MediumHandle h = open_medium(sim_cfg(0.0), Role::receiver);
  CHECK_THROWS_AS(calibrate(h, 9), CalibrationError);

  SimMediumPtr medium = make_sim_medium(sim_cfg(0.0));
  MediumHandle tx = open_sim(medium, Role::sender);
  CHECK_THROWS_AS(calibrate(tx, 10), CalibrationError);
}

TEST_CASE("any threshold between the observed classes decodes identically") {
  MediumHandle h = open_medium(sim_cfg(0.05, 5), Role::receiver);
  const CalibrationResult r = calibrate(h, 200);
  const std::uint64_t max_uncached =
      *std::max_element(r.uncached_samples.begin(), r.uncached_samples.end());
  const std::uint64_t min_cached =
      *std::min_element(r.cached_samples.begin(), r.cached_samples.end());
  REQUIRE(max_uncached < min_cached);

  auto classifications = [&](std::uint64_t threshold) {
    std::vector<LatencyClass> out;
    for (auto s : r.uncached_samples) out.push_back(classify(s, threshold));
    for (auto s : r.cached_samples) out.push_back(classify(s, threshold));
    return out;
  };
  const auto base = classifications(max_uncached + 1);
  CHECK(base == classifications(min_cached));
  CHECK(base == classifications((max_uncached + min_cached) / 2));
}

TEST_CASE("calibration csv lists both sample classes") {
  MediumHandle h = open_medium(sim_cfg(0.0), Role::receiver);
  const CalibrationResult r = calibrate(h, 10);
  std::ostringstream os;
  write_calibration_csv(os, r);
  const std::string text = os.str();
  CHECK(text.rfind("index,class,latency_ns\n", 0) == 0);
  CHECK(text.find(",cached,918000") != std::string::npos);
  CHECK(text.find(",uncached,64000") != std::string::npos);
}
