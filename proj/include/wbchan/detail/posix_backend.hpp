#pragma once

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <time.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "wbchan/detail/sim_backend.hpp"
#include "wbchan/error.hpp"
#include "wbchan/medium.hpp"

namespace wbchan::detail {

inline std::uint64_t monotonic_now_ns() {
  timespec ts;
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return static_cast<std::uint64_t>(ts.tv_sec) * 1'000'000'000ull +
         static_cast<std::uint64_t>(ts.tv_nsec);
}

/// Persistent worker pool for concurrent unit measurements. Workers are
/// created once and reused across rounds.
class SyncPool {
 public:
  ~SyncPool() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  void ensure_size(std::size_t n) {
    std::lock_guard lk(mu_);
    while (workers_.size() < n)
      workers_.emplace_back([this] { worker_loop(); });
  }

  /// Runs all tasks on the pool and blocks until every one finished.
  void run_all(const std::vector<std::function<void()>>& tasks) {
    {
      std::lock_guard lk(mu_);
      for (const auto& t : tasks) queue_.push_back(&t);
      remaining_ = tasks.size();
    }
    cv_.notify_all();
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [&] { return remaining_ == 0; });
  }

 private:
  void worker_loop() {
    std::unique_lock lk(mu_);
    for (;;) {
      cv_.wait(lk, [&] { return stop_ || !queue_.empty(); });
      if (stop_) return;
      const std::function<void()>* task = queue_.back();
      queue_.pop_back();
      lk.unlock();
      (*task)();
      lk.lock();
      if (--remaining_ == 0) done_cv_.notify_all();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<const std::function<void()>*> queue_;
  std::size_t remaining_ = 0;
  bool stop_ = false;
  std::vector<std::thread> workers_;
};

/// Real-kernel medium: regular files (unit_<i>.dat) or one mmapped file
/// (pages.dat). The receiver creates and writes; the sender opens
/// everything read-only, which is the property the channel exploits.
class PosixBackend final : public BackendRep {
 public:
  PosixBackend(MediumConfig cfg, Role role) : cfg_(std::move(cfg)), role_(role) {
    cfg_.validate();
    if (cfg_.backend != Backend::posix) throw ConfigError("PosixBackend requires backend=posix");
    struct stat st{};
    if (stat(cfg_.dir_path.c_str(), &st) != 0 || !S_ISDIR(st.st_mode))
      throw MediumError("path missing or not a directory: " + cfg_.dir_path);

    if (cfg_.mode == Mode::file) {
      fds_.reserve(cfg_.unit_count);
      for (std::uint32_t i = 0; i < cfg_.unit_count; ++i) {
        const std::string path = unit_path(i);
        int fd;
        if (role_ == Role::receiver) {
          fd = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
          if (fd >= 0 && ::ftruncate(fd, static_cast<off_t>(cfg_.file_size_bytes)) != 0) {
            ::close(fd);
            fd = -1;
          }
        } else {
          fd = ::open(path.c_str(), O_RDONLY);
        }
        if (fd < 0) {
          const int err = errno;
          close_all();
          if (role_ == Role::sender && err == ENOENT)
            throw MediumError("unit file missing; the sender cannot create files: " + path);
          if (err == EMFILE || err == ENFILE)
            throw MediumError("descriptor budget exceeded opening " + path);
          throw MediumError("open failed for " + path + ": " + std::strerror(err));
        }
        fds_.push_back(fd);
      }
    } else {
      const std::string path = page_file_path();
      int fd = role_ == Role::receiver ? ::open(path.c_str(), O_RDWR | O_CREAT, 0644)
                                       : ::open(path.c_str(), O_RDONLY);
      if (fd < 0) {
        const int err = errno;
        if (role_ == Role::sender && err == ENOENT)
          throw MediumError("page file missing; the sender cannot create it: " + path);
        throw MediumError("open failed for " + path + ": " + std::strerror(err));
      }
      if (role_ == Role::receiver &&
          ::ftruncate(fd, static_cast<off_t>(cfg_.file_size_bytes)) != 0) {
        ::close(fd);
        throw MediumError("ftruncate failed for " + path);
      }
      map_len_ = static_cast<std::size_t>(cfg_.unit_count) * cfg_.page_size_bytes;
      const int prot = role_ == Role::receiver ? PROT_READ | PROT_WRITE : PROT_READ;
      void* base = ::mmap(nullptr, map_len_, prot, MAP_SHARED, fd, 0);
      if (base == MAP_FAILED) {
        const int err = errno;
        ::close(fd);
        throw MediumError(std::string("mapping failure: ") + std::strerror(err));
      }
      map_base_ = static_cast<volatile unsigned char*>(base);
      fds_.push_back(fd);
    }
  }

  ~PosixBackend() override { close_all(); }

  const MediumConfig& config() const override { return cfg_; }
  bool simulated() const override { return false; }
  int attach(Role) override { return 0; }
  void detach(int) override {}

  void dirty(int, UnitId unit) override {
    check_unit(unit);
    // One byte at the unit's start is enough to leave a dirty page behind.
    const unsigned char value = static_cast<unsigned char>(dirty_counter_.fetch_add(1) & 0xff);
    if (cfg_.mode == Mode::file) {
      if (::pwrite(fds_[unit], &value, 1, 0) != 1)
        throw MediumError("pwrite failed on unit " + std::to_string(unit));
    } else {
      map_base_[static_cast<std::size_t>(unit) * cfg_.page_size_bytes] = value;
    }
  }

  void dirty_group(int agent, const std::vector<UnitId>& group) override {
    for (UnitId u : group) dirty(agent, u);
  }

  std::uint64_t sync_unit(int, UnitId unit, Primitive p) override {
    check_unit(unit);
    MediumConfig::check_primitive_mode(p, cfg_.mode);
    const std::uint64_t t0 = monotonic_now_ns();
    int rc = 0;
    switch (p) {
      case Primitive::sync_all:
        ::sync();
        break;
      case Primitive::fsync:
        rc = ::fsync(fds_[unit]);
        break;
      case Primitive::fdatasync:
        rc = ::fdatasync(fds_[unit]);
        break;
      case Primitive::fcntl_fullfsync:
#ifdef F_FULLFSYNC
        rc = ::fcntl(fds_[unit], F_FULLFSYNC);
#else
        throw MediumError("fcntl_fullfsync is not available on this platform");
#endif
        break;
      case Primitive::msync: {
        volatile unsigned char* addr =
            map_base_ + static_cast<std::size_t>(unit) * cfg_.page_size_bytes;
        rc = ::msync(const_cast<unsigned char*>(addr), cfg_.page_size_bytes, MS_SYNC);
        break;
      }
    }
    if (rc != 0)
      throw MediumError(std::string(to_string(p)) + " failed on unit " + std::to_string(unit) +
                        ": " + std::strerror(errno));
    return monotonic_now_ns() - t0;
  }

  std::vector<std::uint64_t> sync_group(int agent, const std::vector<UnitId>& group,
                                        Primitive p) override {
    pool_.ensure_size(group.size());
    std::vector<std::uint64_t> latencies(group.size());
    std::vector<std::function<void()>> tasks;
    tasks.reserve(group.size());
    for (std::size_t i = 0; i < group.size(); ++i)
      tasks.emplace_back([this, agent, &group, &latencies, i, p] {
        latencies[i] = sync_unit(agent, group[i], p);
      });
    pool_.run_all(tasks);
    return latencies;
  }

  void advance_clock(int, std::int64_t) override {
    throw MediumError("advance_clock requires the simulated backend; sleep in real time instead");
  }

  std::uint64_t now_ns(int) override { return monotonic_now_ns(); }

  void set_active(int, bool) override {}

  void wait_until(int, std::uint64_t t_ns) override {
    timespec ts;
    ts.tv_sec = static_cast<time_t>(t_ns / 1'000'000'000ull);
    ts.tv_nsec = static_cast<long>(t_ns % 1'000'000'000ull);
    while (clock_nanosleep(CLOCK_MONOTONIC, TIMER_ABSTIME, &ts, nullptr) == EINTR) {
    }
  }

  std::string unit_path(UnitId unit) const {
    return cfg_.dir_path + "/unit_" + std::to_string(unit) + ".dat";
  }
  std::string page_file_path() const { return cfg_.dir_path + "/pages.dat"; }

 private:
  void check_unit(UnitId unit) const {
    if (unit >= cfg_.unit_count) throw MediumError("unit out of range");
  }

  void close_all() {
    for (int fd : fds_)
      if (fd >= 0) ::close(fd);
    fds_.clear();
    if (map_base_ != nullptr) {
      ::munmap(const_cast<unsigned char*>(map_base_), map_len_);
      map_base_ = nullptr;
    }
  }

  MediumConfig cfg_;
  Role role_;
  std::vector<int> fds_;
  volatile unsigned char* map_base_ = nullptr;
  std::size_t map_len_ = 0;
  std::atomic<unsigned> dirty_counter_{0};
  SyncPool pool_;
};

}  // namespace wbchan::detail

namespace wbchan {

/// Open a medium for one role. The posix backend opens real files in
/// dir_path (the receiver creates them); the simulated backend gets a
/// fresh private write-buffer state.
inline MediumHandle open_medium(const MediumConfig& cfg, Role role) {
  cfg.validate();
  if (cfg.backend == Backend::simulated)
    return MediumHandle(std::make_shared<detail::SimBackend>(cfg), role);
  return MediumHandle(std::make_shared<detail::PosixBackend>(cfg, role), role);
}

using SimMediumPtr = std::shared_ptr<detail::SimBackend>;

/// Create one simulated medium that a sender and a receiver handle can
/// share inside a single process (see run_pair).
inline SimMediumPtr make_sim_medium(const MediumConfig& cfg) {
  return std::make_shared<detail::SimBackend>(cfg);
}

inline MediumHandle open_sim(SimMediumPtr medium, Role role) {
  return MediumHandle(std::move(medium), role);
}

}  // namespace wbchan
