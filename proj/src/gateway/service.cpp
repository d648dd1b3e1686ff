#include "udi/gateway/service.hpp"

#include <spdlog/spdlog.h>

namespace udi {

using namespace std::chrono_literals;

GatewayService::GatewayService(Gateway& gateway) : gateway_(gateway) {}

GatewayService::~GatewayService() { stop(); }

void GatewayService::start() {
    if (running_.exchange(true)) return;
    for (int i = 0; i < gateway_.config().worker_pool_size; ++i) threads_.emplace_back([this] { worker_loop(); });
    threads_.emplace_back([this] { sweeper_loop(); });
}

void GatewayService::stop() {
    if (!running_.exchange(false)) return;
    gateway_.notify_waiters();
    for (auto& t : threads_) t.join();
    threads_.clear();
}

void GatewayService::worker_loop() {
    while (running_) {
        auto task = gateway_.claim_task();
        if (!task) {
            gateway_.wait_for_task(200ms);
            continue;
        }
        try {
            auto record = gateway_.worker_run(*task);
            spdlog::info("gateway: {} -> {}", record.ref.canonical(), to_string(record.state));
        } catch (const std::exception& e) {
            spdlog::error("gateway worker: {}", e.what());
        }
    }
}

void GatewayService::sweeper_loop() {
    auto interval = std::chrono::duration_cast<std::chrono::milliseconds>(gateway_.config().sweep_interval);
    auto next = std::chrono::steady_clock::now() + interval;
    while (running_) {
        std::this_thread::sleep_for(50ms);
        if (std::chrono::steady_clock::now() < next) continue;
        next += interval;
        for (const auto& r : gateway_.sweep_stale(gateway_.clock().now())) {
            spdlog::warn("gateway: {} failed: {}", r.ref.canonical(), r.last_error);
        }
    }
}

}  // namespace udi
