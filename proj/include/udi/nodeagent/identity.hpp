#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <vector>

#include "udi/common/error.hpp"
#include "udi/common/time.hpp"

namespace udi {

using GroupDirectory = std::map<std::uint32_t, std::vector<std::uint32_t>>;

struct IdentityConfig {
    Duration service_mean = std::chrono::seconds(2);
    /// Service time is mean * (1 + jitter * U(-1, 1)).
    double jitter = 0.0;
    int concurrency_cap = 500;
    Duration timeout = std::chrono::seconds(5);
    std::uint64_t seed = 1;
};

/// Shared directory service (the LDAP stand-in), modelled analytically as a
/// FIFO queue in front of `concurrency_cap` servers. A request that would wait
/// longer than `timeout` for a server fails at arrival + timeout without ever
/// occupying one. Requests must be submitted in arrival order; later arrivals
/// are clamped to the latest seen so the queue stays FIFO.
class IdentityBackend {
public:
    struct Outcome {
        std::optional<std::vector<std::uint32_t>> gids;  // empty on failure
        ErrorCode error = ErrorCode::NotFound;           // IdentityTimeout or IdentityNotFound
        Timestamp arrival{};
        Timestamp started{};  // == arrival + timeout for timeouts
        Timestamp done{};
        bool ok() const { return gids.has_value(); }
    };

    struct Stats {
        int requests = 0;
        int timeouts = 0;
        int not_found = 0;
        int max_in_flight = 0;
    };

    IdentityBackend(IdentityConfig config, GroupDirectory directory);

    /// `draw_key` picks the service-time jitter, e.g. {node, ordinal}.
    Outcome request(std::uint32_t uid, Timestamp arrival, std::uint64_t node, std::uint64_t ordinal);

    Stats stats() const;
    /// (start, end) of every request that got a server, in start order.
    std::vector<std::pair<Timestamp, Timestamp>> served_intervals() const;
    void reset_stats();

    const IdentityConfig& config() const { return config_; }
    void set_concurrency_cap(int cap);
    void set_directory(GroupDirectory directory);

private:
    mutable std::mutex mu_;
    IdentityConfig config_;
    GroupDirectory directory_;
    // Times at which each busy server frees up (min-heap); size <= cap.
    std::priority_queue<Timestamp, std::vector<Timestamp>, std::greater<>> busy_until_;
    Timestamp latest_arrival_{};
    Stats stats_;
    std::vector<std::pair<Timestamp, Timestamp>> served_;
};

}  // namespace udi
