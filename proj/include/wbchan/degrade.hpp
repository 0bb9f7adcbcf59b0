#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <string>

#include "wbchan/detail/posix_backend.hpp"
#include "wbchan/error.hpp"
#include "wbchan/medium.hpp"

namespace wbchan {

struct DegradeResult {
  std::uint64_t calls = 0;
  double seconds = 0.0;
  double calls_per_sec = 0.0;
};

/// Hammer a synchronization primitive against one file for a fixed
/// duration, forcing the kernel to keep flushing whatever other processes
/// buffered. Returns the sustained call rate. The victim-side measurement
/// is out of scope here; pair it with an external I/O benchmark.
inline DegradeResult run_degrade_loop(const std::string& dir_path, Primitive primitive,
                                      double duration_s, std::uint64_t interval_us) {
  if (duration_s <= 0) throw ConfigError("degrade: duration must be positive");
  if (primitive == Primitive::msync)
    throw ConfigError("degrade drives file primitives; use fdatasync, fsync or sync_all");

  const std::string path = dir_path + "/degrade_target.dat";
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd < 0)
    throw MediumError("degrade: cannot open " + path + ": " + std::strerror(errno));

  DegradeResult result;
  const std::uint64_t start = detail::monotonic_now_ns();
  const std::uint64_t deadline = start + static_cast<std::uint64_t>(duration_s * 1e9);
  unsigned char byte = 0;
  while (detail::monotonic_now_ns() < deadline) {
    // Keep a write in flight so every pass has something to flush.
    if (::pwrite(fd, &byte, 1, 0) != 1) {
      ::close(fd);
      throw MediumError("degrade: pwrite failed on " + path);
    }
    ++byte;
    switch (primitive) {
      case Primitive::sync_all: ::sync(); break;
      case Primitive::fsync: ::fsync(fd); break;
      case Primitive::fcntl_fullfsync:
#ifdef F_FULLFSYNC
        ::fcntl(fd, F_FULLFSYNC);
        break;
#endif
      case Primitive::fdatasync:
      default: ::fdatasync(fd); break;
    }
    ++result.calls;
    if (interval_us > 0) ::usleep(static_cast<useconds_t>(interval_us));
  }
  ::close(fd);
  ::unlink(path.c_str());
  result.seconds = static_cast<double>(detail::monotonic_now_ns() - start) / 1e9;
  result.calls_per_sec = static_cast<double>(result.calls) / result.seconds;
  return result;
}

}  // namespace wbchan
