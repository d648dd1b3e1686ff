#include "udi/nodeagent/identity.hpp"

#include <algorithm>

#include "udi/common/rng.hpp"

namespace udi {

IdentityBackend::IdentityBackend(IdentityConfig config, GroupDirectory directory)
    : config_(config), directory_(std::move(directory)) {
    if (config_.concurrency_cap < 1) fail(ErrorCode::InvalidConfig, "identity concurrency cap must be positive");
}

IdentityBackend::Outcome IdentityBackend::request(std::uint32_t uid, Timestamp arrival, std::uint64_t node,
                                                  std::uint64_t ordinal) {
    std::lock_guard lock(mu_);
    arrival = std::max(arrival, latest_arrival_);
    latest_arrival_ = arrival;
    ++stats_.requests;

    // Servers that finished before this arrival are free again.
    while (!busy_until_.empty() && busy_until_.top() <= arrival) busy_until_.pop();

    Outcome out;
    out.arrival = arrival;
    // Wait for the earliest servers to free up until one is available.
    std::vector<Timestamp> freed;
    while (static_cast<int>(busy_until_.size()) >= config_.concurrency_cap) {
        freed.push_back(busy_until_.top());
        busy_until_.pop();
    }
    Timestamp start = freed.empty() ? arrival : std::max(arrival, freed.back());
    if (start - arrival > config_.timeout) {
        for (auto t : freed) busy_until_.push(t);
        ++stats_.timeouts;
        out.error = ErrorCode::IdentityTimeout;
        out.started = out.done = arrival + config_.timeout;
        return out;
    }

    double u = keyed_uniform(config_.seed, {static_cast<std::uint64_t>(Stream::IdentityService), node, ordinal});
    double factor = std::max(0.0, 1.0 + config_.jitter * (2.0 * u - 1.0));
    auto service = Duration(static_cast<std::int64_t>(static_cast<double>(config_.service_mean.count()) * factor));
    out.started = start;
    out.done = start + service;
    busy_until_.push(out.done);
    served_.emplace_back(out.started, out.done);

    // Every pending finish is at or after `start`.
    stats_.max_in_flight = std::max(stats_.max_in_flight, static_cast<int>(busy_until_.size()));

    auto it = directory_.find(uid);
    if (it == directory_.end()) {
        ++stats_.not_found;
        out.error = ErrorCode::IdentityNotFound;
    } else {
        out.gids = it->second;
    }
    return out;
}

IdentityBackend::Stats IdentityBackend::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

std::vector<std::pair<Timestamp, Timestamp>> IdentityBackend::served_intervals() const {
    std::lock_guard lock(mu_);
    return served_;
}

void IdentityBackend::reset_stats() {
    std::lock_guard lock(mu_);
    stats_ = {};
    served_.clear();
}

void IdentityBackend::set_concurrency_cap(int cap) {
    if (cap < 1) fail(ErrorCode::InvalidConfig, "identity concurrency cap must be positive");
    std::lock_guard lock(mu_);
    config_.concurrency_cap = cap;
}

void IdentityBackend::set_directory(GroupDirectory directory) {
    std::lock_guard lock(mu_);
    directory_ = std::move(directory);
}

}  // namespace udi
