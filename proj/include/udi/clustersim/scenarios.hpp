#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "udi/common/time.hpp"

namespace udi {

struct ScenarioParams {
    std::uint64_t seed = 1;
    /// Scratch space; a private temporary directory when empty.
    std::filesystem::path work_dir;

    // 2: corrupted conversions
    int iterations = 1000;
    // 3: restart storm
    int duplicate_pulls = 8;
    int restart_cycles = 4;
    // 4: auth outage
    int nodes = 16;
    int auth_down = 3;
    // 5: identity storm
    int storm_nodes = 2048;
    int identity_cap = 500;
    Duration identity_timeout = std::chrono::seconds(5);
    Duration identity_service = std::chrono::seconds(2);
    int warmup_batch = 400;
};

struct ScenarioReport {
    int scenario = 0;
    std::string title;
    bool passed = false;
    std::vector<std::pair<std::string, double>> metrics;  // in report order
    std::vector<std::string> notes;
    std::string trace;  // event trace of every cluster the scenario ran

    /// Throws NotFound.
    double metric(const std::string& name) const;
    std::string to_text() const;
};

/// Runs fault scenario 1..5 against a fresh simulated cluster and reports
/// whether the designed fix held. Throws UnknownScenario.
ScenarioReport inject_fault(int scenario, const ScenarioParams& params = {});

inline constexpr int kScenarioCount = 5;

}  // namespace udi
