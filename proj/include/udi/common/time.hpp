#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>

namespace udi {

using Duration = std::chrono::microseconds;

// Tag type for timestamps. In service mode the epoch is the Unix epoch, under
// the simulator it is the start of the run.
struct TimeBase {
    using rep = std::int64_t;
    using period = std::micro;
    using duration = Duration;
    static constexpr bool is_steady = true;
};

using Timestamp = std::chrono::time_point<TimeBase, Duration>;

constexpr Timestamp from_micros(std::int64_t us) { return Timestamp{Duration{us}}; }
constexpr std::int64_t to_micros(Timestamp t) { return t.time_since_epoch().count(); }

Duration seconds(double s);
double to_seconds(Duration d);
double to_seconds(Timestamp t);
Timestamp timestamp_from_seconds(double s);

/// Fixed six-decimal rendering, exact for microsecond timestamps.
std::string format_seconds(Timestamp t);
std::string format_seconds(Duration d);

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override;
};

/// Settable clock shared by the simulator and tests. Never moves backwards.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp start = Timestamp{}) : now_us_(to_micros(start)) {}

    Timestamp now() const override { return from_micros(now_us_.load()); }
    void set(Timestamp t);
    void advance(Duration d) { set(now() + d); }

private:
    std::atomic<std::int64_t> now_us_;
};

}  // namespace udi
