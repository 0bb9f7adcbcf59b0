#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <vector>

#include "wbchan/error.hpp"
#include "wbchan/medium.hpp"

namespace wbchan {

enum class LatencyClass { cached, uncached };

/// Measured operating point of a medium: the cached/uncached sync latency
/// medians and the decision threshold between them.
struct CalibrationResult {
  std::uint64_t t_b_hat_ns = 0;   // median latency flushing a dirty unit
  std::uint64_t t_u_hat_ns = 0;   // median latency with nothing to flush
  std::uint64_t threshold_ns = 0; // decision boundary
  double separation_ratio = 0.0;  // t_b_hat / t_u_hat
  std::uint32_t samples_per_class = 0;
  std::vector<std::uint64_t> cached_samples;
  std::vector<std::uint64_t> uncached_samples;
};

/// A sync faster than the threshold means the other party already flushed
/// the unit; under the channel's convention that decodes as bit 1.
inline LatencyClass classify(std::uint64_t latency_ns, std::uint64_t threshold_ns) {
  return latency_ns < threshold_ns ? LatencyClass::uncached : LatencyClass::cached;
}

inline int decode_bit(std::uint64_t latency_ns, std::uint64_t threshold_ns) {
  return classify(latency_ns, threshold_ns) == LatencyClass::uncached ? 1 : 0;
}

/// The usability floor: below this cached/uncached ratio the channel
/// cannot be decoded reliably (some kernels show no difference at all).
inline constexpr double kMinSeparationRatio = 2.0;

namespace detail {

inline std::uint64_t median(std::vector<std::uint64_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return (v[n / 2 - 1] + v[n / 2]) / 2;
}

}  // namespace detail

/// Measure both latency distributions on unit 0 by alternating
/// dirty+sync (cached sample) with a second sync (uncached sample).
/// Medians rather than means keep occasional blocked-syscall outliers from
/// skewing the threshold. The threshold is the arithmetic midpoint of the
/// two medians.
inline CalibrationResult calibrate(MediumHandle& handle, Primitive primitive, std::uint32_t n) {
  if (n < 10) throw CalibrationError("calibration needs at least 10 samples per class");
  if (handle.role() != Role::receiver)
    throw CalibrationError("calibration requires a receiver handle (it must dirty units)");

  CalibrationResult r;
  r.samples_per_class = n;
  r.cached_samples.reserve(n);
  r.uncached_samples.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    handle.dirty(0);
    r.cached_samples.push_back(handle.sync_unit(0, primitive));
    r.uncached_samples.push_back(handle.sync_unit(0, primitive));
  }
  r.t_b_hat_ns = detail::median(r.cached_samples);
  r.t_u_hat_ns = detail::median(r.uncached_samples);
  r.threshold_ns = (r.t_b_hat_ns + r.t_u_hat_ns) / 2;
  r.separation_ratio =
      r.t_u_hat_ns == 0 ? 0.0 : static_cast<double>(r.t_b_hat_ns) / static_cast<double>(r.t_u_hat_ns);
  if (r.separation_ratio < kMinSeparationRatio)
    throw CalibrationError("calibration failed: cached/uncached separation ratio " +
                           std::to_string(r.separation_ratio) + " is below " +
                           std::to_string(kMinSeparationRatio) + "; channel unusable");
  return r;
}

inline CalibrationResult calibrate(MediumHandle& handle, std::uint32_t n) {
  return calibrate(handle, handle.config().primitive, n);
}

/// Raw samples as CSV: index,class,latency_ns.
inline void write_calibration_csv(std::ostream& os, const CalibrationResult& r) {
  os << "index,class,latency_ns\n";
  for (std::size_t i = 0; i < r.cached_samples.size(); ++i)
    os << i << ",cached," << r.cached_samples[i] << "\n";
  for (std::size_t i = 0; i < r.uncached_samples.size(); ++i)
    os << i << ",uncached," << r.uncached_samples[i] << "\n";
}

}  // namespace wbchan
