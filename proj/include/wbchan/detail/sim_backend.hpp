#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <vector>

#include "wbchan/error.hpp"
#include "wbchan/medium.hpp"
#include "wbchan/prng.hpp"

namespace wbchan::detail {

/// Deterministic write-buffer simulator.
///
/// Each attached agent (receiver = 0, sender = 1) advances its own virtual
/// clock; shared unit state is mutated at the timestamp of the issuing
/// agent. When both agents are live, every state-touching operation waits
/// until it is the earliest pending one (ties go to the receiver), which
/// gives a discrete-event schedule that is independent of OS thread
/// scheduling. Latency noise is drawn from a truncated-at-zero normal with
/// relative sigma = noise_frac, so a fixed seed replays bit-identical
/// latency sequences.
///
/// The background flusher is applied lazily: a unit whose dirty age has
/// passed writeback_period_ns at sync time behaves as already cleaned.
class SimBackend final : public BackendRep {
 public:
  explicit SimBackend(MediumConfig cfg)
      : cfg_(std::move(cfg)), units_(cfg_.unit_count), rng_(cfg_.sim.seed) {
    cfg_.validate();
    if (cfg_.backend != Backend::simulated)
      throw ConfigError("SimBackend requires backend=simulated");
  }

  const MediumConfig& config() const override { return cfg_; }
  bool simulated() const override { return true; }

  int attach(Role role) override {
    std::lock_guard lk(mu_);
    const int idx = role == Role::receiver ? 0 : 1;
    if (agents_[idx].attached && !agents_[idx].done)
      throw MediumError("role already attached to this simulated medium");
    // Joining late (e.g. the sender after calibration) starts at the
    // current virtual frontier, never in the other agent's past.
    const std::uint64_t frontier = std::max(agents_[0].clock, agents_[1].clock);
    agents_[idx] = AgentState{};
    agents_[idx].attached = true;
    agents_[idx].clock = frontier;
    cv_.notify_all();
    return idx;
  }

  void detach(int agent) override {
    std::lock_guard lk(mu_);
    agents_[static_cast<std::size_t>(agent)].done = true;
    cv_.notify_all();
  }

  void dirty(int agent, UnitId unit) override {
    check_unit(unit);
    run_ordered(agent, [&](AgentState& me) {
      UnitState& u = units_[unit];
      u.dirty = true;
      u.since = me.clock;  // re-dirtying refreshes the age
      me.clock += kSimWriteCostNs;
    });
  }

  void dirty_group(int agent, const std::vector<UnitId>& group) override {
    for (UnitId u : group) check_unit(u);
    run_ordered(agent, [&](AgentState& me) {
      for (UnitId id : group) {
        UnitState& u = units_[id];
        u.dirty = true;
        u.since = me.clock;
      }
      me.clock += kSimWriteCostNs * group.size();
    });
  }

  std::uint64_t sync_unit(int agent, UnitId unit, Primitive p) override {
    check_unit(unit);
    MediumConfig::check_primitive_mode(p, cfg_.mode);
    std::uint64_t latency = 0;
    run_ordered(agent, [&](AgentState& me) {
      latency = sync_locked(unit, p, me.clock);
      me.clock += latency;
    });
    return latency;
  }

  std::vector<std::uint64_t> sync_group(int agent, const std::vector<UnitId>& group,
                                        Primitive p) override {
    for (UnitId u : group) check_unit(u);
    MediumConfig::check_primitive_mode(p, cfg_.mode);
    std::vector<std::uint64_t> latencies(group.size());
    run_ordered(agent, [&](AgentState& me) {
      // Concurrent measurers all start at the same instant; the caller
      // resumes when the slowest one returns.
      std::uint64_t worst = 0;
      for (std::size_t i = 0; i < group.size(); ++i) {
        latencies[i] = sync_locked(group[i], p, me.clock);
        worst = std::max(worst, latencies[i]);
      }
      me.clock += worst;
    });
    return latencies;
  }

  void advance_clock(int agent, std::int64_t dt_ns) override {
    if (dt_ns < 0) throw MediumError("advance_clock: the virtual clock is monotone");
    std::lock_guard lk(mu_);
    agents_[static_cast<std::size_t>(agent)].clock += static_cast<std::uint64_t>(dt_ns);
  }

  std::uint64_t now_ns(int agent) override {
    std::lock_guard lk(mu_);
    return agents_[static_cast<std::size_t>(agent)].clock;
  }

  void wait_until(int agent, std::uint64_t t_ns) override {
    std::lock_guard lk(mu_);
    AgentState& me = agents_[static_cast<std::size_t>(agent)];
    me.clock = std::max(me.clock, t_ns);
  }

  void set_active(int agent, bool active) override {
    std::lock_guard lk(mu_);
    agents_[static_cast<std::size_t>(agent)].paused = !active;
    cv_.notify_all();
  }

  /// Peek at a unit's dirty flag (tests only; not part of the channel).
  bool unit_dirty(UnitId unit) {
    std::lock_guard lk(mu_);
    check_unit(unit);
    return units_[unit].dirty;
  }

 private:
  struct UnitState {
    bool dirty = false;
    std::uint64_t since = 0;
  };
  struct AgentState {
    bool attached = false;
    bool done = false;
    bool paused = false;
    bool arrived = false;
    std::uint64_t clock = 0;
    std::uint64_t pending = 0;
  };

  void check_unit(UnitId unit) const {
    if (unit >= cfg_.unit_count) throw MediumError("unit out of range");
  }

  // Blocks until this agent holds the earliest pending operation among the
  // live agents, then applies op under the lock.
  template <class F>
  void run_ordered(int agent, F&& op) {
    std::unique_lock lk(mu_);
    AgentState& me = agents_[static_cast<std::size_t>(agent)];
    if (!me.attached || me.done) throw MediumError("operation on a detached agent");
    if (me.paused) throw MediumError("operation on a paused agent");
    me.pending = me.clock;
    me.arrived = true;
    cv_.notify_all();
    cv_.wait(lk, [&] { return my_turn(agent); });
    op(me);
    me.arrived = false;
    cv_.notify_all();
  }

  bool my_turn(int agent) const {
    const AgentState& me = agents_[static_cast<std::size_t>(agent)];
    for (int j = 0; j < 2; ++j) {
      if (j == agent) continue;
      const AgentState& other = agents_[static_cast<std::size_t>(j)];
      if (!other.attached || other.done || other.paused) continue;
      if (!other.arrived) return false;
      if (other.pending < me.pending) return false;
      if (other.pending == me.pending && j < agent) return false;
    }
    return true;
  }

  std::uint64_t sync_locked(UnitId unit, Primitive p, std::uint64_t now) {
    bool slow_flush = false;
    if (p == Primitive::sync_all) {
      for (auto& u : units_) {
        apply_background_flush(u, now);
        slow_flush = slow_flush || u.dirty;
        u.dirty = false;
      }
    } else {
      UnitState& u = units_[unit];
      apply_background_flush(u, now);
      slow_flush = u.dirty;
      u.dirty = false;
    }
    const std::uint64_t mean =
        slow_flush ? cfg_.sim.t_b_ns + metadata_extra(p) : cfg_.sim.t_u_ns;
    return draw_latency(mean);
  }

  void apply_background_flush(UnitState& u, std::uint64_t now) const {
    if (u.dirty && now >= u.since && now - u.since >= cfg_.sim.writeback_period_ns)
      u.dirty = false;
  }

  std::uint64_t metadata_extra(Primitive p) const {
    switch (p) {
      case Primitive::fsync:
      case Primitive::sync_all:
      case Primitive::fcntl_fullfsync:
        return cfg_.sim.metadata_extra_ns;
      default:
        return 0;
    }
  }

  std::uint64_t draw_latency(std::uint64_t mean) {
    if (cfg_.sim.noise_frac <= 0.0) return mean;
    const double m = static_cast<double>(mean);
    const double sigma = cfg_.sim.noise_frac * m;
    double v;
    do {
      v = m + sigma * next_gaussian();
    } while (v <= 0.0);
    return static_cast<std::uint64_t>(std::llround(v));
  }

  // Box-Muller without caching: two uniforms in, one normal out. Keeps the
  // draw count a pure function of the operation sequence.
  double next_gaussian() {
    const double u1 = rng_.next_unit();
    const double u2 = rng_.next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  MediumConfig cfg_;
  std::vector<UnitState> units_;
  U64Stream rng_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::array<AgentState, 2> agents_{};
};

}  // namespace wbchan::detail
