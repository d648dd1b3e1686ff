#include "udi/common/time.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace udi {

Duration seconds(double s) {
    return Duration{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

double to_seconds(Duration d) { return static_cast<double>(d.count()) / 1e6; }

double to_seconds(Timestamp t) { return to_seconds(t.time_since_epoch()); }

Timestamp timestamp_from_seconds(double s) { return Timestamp{seconds(s)}; }

std::string format_seconds(Duration d) {
    auto us = d.count();
    const char* sign = us < 0 ? "-" : "";
    if (us < 0) us = -us;
    return fmt::format("{}{}.{:06d}", sign, us / 1000000, us % 1000000);
}

std::string format_seconds(Timestamp t) { return format_seconds(t.time_since_epoch()); }

Timestamp SystemClock::now() const {
    auto since = std::chrono::system_clock::now().time_since_epoch();
    return Timestamp{std::chrono::duration_cast<Duration>(since)};
}

void ManualClock::set(Timestamp t) {
    auto target = to_micros(t);
    auto current = now_us_.load();
    while (current <= target) {
        if (now_us_.compare_exchange_weak(current, target)) return;
    }
    throw std::logic_error("virtual clock cannot move backwards");
}

}  // namespace udi
