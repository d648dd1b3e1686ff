#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <vector>

#include "udi/common/time.hpp"

namespace udi {

/// Discrete-event core. Events run in (time, insertion order); the shared
/// ManualClock is moved to each event's time before it runs.
///
/// Daemon events (periodic sweeps, heartbeats) run in order with the rest but
/// do not keep run() going on their own.
class EventQueue {
public:
    using Action = std::function<void()>;

    explicit EventQueue(ManualClock& clock) : clock_(clock) {}

    void schedule(Timestamp at, Action action, bool daemon = false);
    void schedule_in(Duration delay, Action action, bool daemon = false) {
        schedule(now() + delay, std::move(action), daemon);
    }

    /// Runs until no non-daemon events remain.
    void run();
    /// Runs every event with time <= `until`, then moves the clock to `until`.
    void run_until(Timestamp until);
    bool idle() const { return work_pending_ == 0; }

    Timestamp now() const { return clock_.now(); }
    std::uint64_t executed() const { return executed_; }

private:
    struct Event {
        Timestamp at;
        std::uint64_t seq;
        bool daemon;
        Action action;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    void run_one();

    ManualClock& clock_;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t work_pending_ = 0;
    std::uint64_t executed_ = 0;
};

/// Event log, one line per event: time<TAB>entity<TAB>event<TAB>details.
/// Times are virtual seconds with six decimals.
class Trace {
public:
    void add(Timestamp at, const std::string& entity, const std::string& event, const std::string& details = "");
    void append(const Trace& other);
    const std::vector<std::string>& lines() const { return lines_; }
    std::string text() const;
    std::size_t count(const std::string& event) const;
    void clear() { lines_.clear(); }
    /// Turns recording off (counters that rely on lines will see nothing).
    void set_enabled(bool on) { enabled_ = on; }

private:
    std::vector<std::string> lines_;
    bool enabled_ = true;
};

}  // namespace udi
