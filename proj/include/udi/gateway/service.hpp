#pragma once

#include <atomic>
#include <thread>
#include <vector>

#include "udi/gateway/gateway.hpp"

namespace udi {

/// Service-mode driver: worker_pool_size threads claiming and running pull
/// tasks, plus a sweeper calling sweep_stale every sweep_interval of wall time.
class GatewayService {
public:
    explicit GatewayService(Gateway& gateway);
    ~GatewayService();
    GatewayService(const GatewayService&) = delete;
    GatewayService& operator=(const GatewayService&) = delete;

    void start();
    void stop();

private:
    void worker_loop();
    void sweeper_loop();

    Gateway& gateway_;
    std::atomic<bool> running_{false};
    std::vector<std::thread> threads_;
};

}  // namespace udi
