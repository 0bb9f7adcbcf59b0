#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wbchan/error.hpp"

namespace wbchan {

enum class Backend { posix, simulated };
enum class Mode { file, page };
enum class Role { sender, receiver };

/// Memory-disk synchronization primitives. sync_all flushes every unit
/// (sync(2)); the others act on one unit's descriptor or mapped range.
enum class Primitive { sync_all, fsync, fdatasync, msync, fcntl_fullfsync };

/// Index of one synchronizable unit: a file in file mode, a page of the
/// backing file in page mode.
using UnitId = std::uint32_t;

/// Cost charged to the virtual clock for one buffered write.
inline constexpr std::uint64_t kSimWriteCostNs = 1'000;

/// Per-process descriptor budget: 1024 minus stdio.
inline constexpr std::uint32_t kPosixFileUnitBudget = 1022;

/// Simulated kernel write-buffer model. Defaults reproduce the measured
/// operating point of fdatasync on ext4: ~0.918 ms to flush a dirty unit,
/// ~64 us when there is nothing to flush, and a 30 s background write-back
/// deadline after which the flusher daemon has already cleaned the unit.
struct SimParams {
  std::uint64_t t_b_ns = 918'000;
  std::uint64_t t_u_ns = 64'000;
  double noise_frac = 0.05;
  std::uint64_t writeback_period_ns = 30'000'000'000ull;
  std::uint64_t metadata_extra_ns = 2'000'000;  // fsync/sync_all/fcntl metadata cost
  std::uint64_t seed = 1;
};

struct MediumConfig {
  Backend backend = Backend::simulated;
  Mode mode = Mode::file;
  std::uint32_t unit_count = 1;
  Primitive primitive = Primitive::fdatasync;
  std::string dir_path;  // posix only
  std::uint32_t page_size_bytes = 4096;
  std::uint64_t file_size_bytes = 4096;
  SimParams sim;

  void validate() const {
    if (unit_count == 0) throw ConfigError("empty medium: unit_count must be positive");
    if (page_size_bytes == 0) throw ConfigError("page_size_bytes must be positive");
    if (file_size_bytes == 0) throw ConfigError("file_size_bytes must be positive");
    if (backend == Backend::posix && mode == Mode::file && unit_count > kPosixFileUnitBudget)
      throw ConfigError("descriptor budget exceeded: file mode is limited to " +
                        std::to_string(kPosixFileUnitBudget) + " units per process");
    if (mode == Mode::page &&
        file_size_bytes < static_cast<std::uint64_t>(unit_count) * page_size_bytes)
      throw ConfigError("file_size_bytes must cover unit_count pages");
    if (backend == Backend::posix && dir_path.empty())
      throw ConfigError("posix backend requires dir_path");
    if (backend == Backend::simulated) {
      if (sim.t_u_ns >= sim.t_b_ns) throw ConfigError("sim requires t_u_ns < t_b_ns");
      if (sim.noise_frac < 0) throw ConfigError("sim noise_frac must be >= 0");
      if (sim.writeback_period_ns == 0) throw ConfigError("sim writeback_period_ns must be positive");
    }
    try {
      check_primitive_mode(primitive, mode);
    } catch (const MediumError& e) {
      throw ConfigError(e.what());
    }
  }

  static void check_primitive_mode(Primitive p, Mode m) {
    if (m == Mode::page && p != Primitive::msync)
      throw MediumError("page mode synchronizes via msync only");
    if (m == Mode::file && p == Primitive::msync)
      throw MediumError("msync requires page mode");
  }

  /// Bits a one-shot round can mark with this medium (one unit per bit).
  std::uint64_t capacity_bits() const {
    if (mode == Mode::page) return file_size_bytes / page_size_bytes;
    return unit_count;
  }
};

namespace detail {

/// Backend contract shared by the simulated write buffer and the real
/// kernel. Agents are the attachment points for per-role handles; the
/// simulated backend orders their operations on a virtual timeline.
class BackendRep {
 public:
  virtual ~BackendRep() = default;
  virtual const MediumConfig& config() const = 0;
  virtual int attach(Role role) = 0;
  virtual void detach(int agent) = 0;
  virtual void dirty(int agent, UnitId unit) = 0;
  virtual void dirty_group(int agent, const std::vector<UnitId>& units) = 0;
  virtual std::uint64_t sync_unit(int agent, UnitId unit, Primitive p) = 0;
  virtual std::vector<std::uint64_t> sync_group(int agent, const std::vector<UnitId>& units,
                                                Primitive p) = 0;
  virtual void advance_clock(int agent, std::int64_t dt_ns) = 0;
  virtual std::uint64_t now_ns(int agent) = 0;
  virtual void wait_until(int agent, std::uint64_t t_ns) = 0;
  virtual void set_active(int agent, bool active) = 0;
  virtual bool simulated() const = 0;
};

}  // namespace detail

/// Handle over a medium, bound to one role. Sender handles are read-only:
/// they can synchronize units (and time it) but never dirty them.
///
/// Simulated handles sharing one medium must be driven concurrently (see
/// run_pair): each shared-state operation rendezvouses with the other live
/// agent so the virtual timeline stays deterministic.
class MediumHandle {
 public:
  MediumHandle() = default;
  MediumHandle(std::shared_ptr<detail::BackendRep> rep, Role role)
      : rep_(std::move(rep)), role_(role), agent_(rep_->attach(role)) {}

  MediumHandle(MediumHandle&& other) noexcept { *this = std::move(other); }
  MediumHandle& operator=(MediumHandle&& other) noexcept {
    if (this != &other) {
      finish();
      rep_ = std::move(other.rep_);
      role_ = other.role_;
      agent_ = other.agent_;
      other.agent_ = -1;
      other.rep_.reset();
    }
    return *this;
  }
  MediumHandle(const MediumHandle&) = delete;
  MediumHandle& operator=(const MediumHandle&) = delete;
  ~MediumHandle() { finish(); }

  /// Detach from the medium; further operations are invalid. Idempotent.
  void finish() {
    if (rep_ && agent_ >= 0) rep_->detach(agent_);
    agent_ = -1;
  }

  bool valid() const { return rep_ != nullptr && agent_ >= 0; }
  Role role() const { return role_; }
  const MediumConfig& config() const { return check().config(); }

  /// Buffer one byte into the unit, leaving it dirty. Receiver role only.
  void dirty(UnitId unit) {
    if (role_ != Role::receiver) throw MediumError("dirty requires the receiver role");
    check().dirty(agent_, unit);
  }

  /// Dirty several units as one step (the multi-file protocols write all
  /// their files back to back at slot start).
  void dirty_group(const std::vector<UnitId>& units) {
    if (role_ != Role::receiver) throw MediumError("dirty requires the receiver role");
    check().dirty_group(agent_, units);
  }

  /// Synchronize the unit with the configured primitive; returns the call
  /// latency in nanoseconds on this handle's clock.
  std::uint64_t sync_unit(UnitId unit) { return sync_unit(unit, config().primitive); }
  std::uint64_t sync_unit(UnitId unit, Primitive p) { return check().sync_unit(agent_, unit, p); }

  /// Synchronize several units concurrently (one worker per unit) and
  /// return each latency; the handle's clock advances by the slowest.
  std::vector<std::uint64_t> sync_group(const std::vector<UnitId>& units, Primitive p) {
    return check().sync_group(agent_, units, p);
  }
  std::vector<std::uint64_t> sync_group(const std::vector<UnitId>& units) {
    return sync_group(units, config().primitive);
  }

  /// Advance the virtual clock (simulated backend only).
  void advance_clock(std::int64_t dt_ns) { check().advance_clock(agent_, dt_ns); }

  std::uint64_t now_ns() { return check().now_ns(agent_); }
  void wait_until(std::uint64_t t_ns) { check().wait_until(agent_, t_ns); }

  /// Park this agent while another handle is driven from the same thread
  /// (sequential phases); a paused agent does not block event ordering.
  void pause() { check().set_active(agent_, false); }
  void resume() { check().set_active(agent_, true); }

  bool simulated() const { return rep_ && rep_->simulated(); }

 private:
  detail::BackendRep& check() const {
    if (!rep_ || agent_ < 0) throw MediumError("operation on a finished or empty handle");
    return *rep_;
  }

  std::shared_ptr<detail::BackendRep> rep_;
  Role role_ = Role::receiver;
  int agent_ = -1;
};

inline const char* to_string(Primitive p) {
  switch (p) {
    case Primitive::sync_all: return "sync_all";
    case Primitive::fsync: return "fsync";
    case Primitive::fdatasync: return "fdatasync";
    case Primitive::msync: return "msync";
    case Primitive::fcntl_fullfsync: return "fcntl_fullfsync";
  }
  return "?";
}

}  // namespace wbchan
