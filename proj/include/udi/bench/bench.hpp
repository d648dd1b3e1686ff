#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "udi/clustersim/cluster.hpp"
#include "udi/clustersim/job_spec.hpp"

namespace udi {

struct BenchRow {
    int nodes = 0;
    int ranks_per_node = 0;
    ImageMode image_mode = ImageMode::Directive;
    std::uint64_t image_size_bytes = 0;
    double startup_seconds = 0;  // virtual
    std::uint64_t seed = 0;

    friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

inline constexpr std::string_view kBenchCsvHeader =
    "nodes,ranks_per_node,image_mode,image_size_bytes,startup_seconds,seed";

std::string to_csv(const std::vector<BenchRow>& rows);
/// Inverse of to_csv. Throws InvalidSpec naming the offending line.
std::vector<BenchRow> parse_csv(std::string_view text);

struct BenchConfig {
    std::vector<int> node_counts{1, 2, 4, 8};
    std::vector<int> ranks{1};
    std::vector<std::uint64_t> image_sizes{36'000'000};
    std::vector<ImageMode> modes{ImageMode::Directive};
    std::uint64_t seed = 1;
    /// Latency model and identity backend; node count, seed and storage are
    /// set per row.
    ClusterConfig cluster;
    /// Fill every node's group cache before the job, so rows measure the
    /// mount path rather than a directory storm.
    bool warm_identity = true;
    /// Scratch space; a private temporary directory when empty.
    std::filesystem::path work_dir;
};

struct BenchFailure {
    int nodes = 0;
    int ranks_per_node = 0;
    ImageMode image_mode = ImageMode::Directive;
    std::uint64_t image_size_bytes = 0;
    std::string reason;
};

struct BenchResult {
    std::vector<BenchRow> rows;  // completed measurements, in input order
    std::vector<BenchFailure> failures;
    /// SHA-256 over every row's event trace, in row order.
    std::string trace_digest;
};

/// One simulated job per (mode, image size, node count, ranks) combination,
/// in that nesting order, on a fresh cluster each time. Images are pulled once
/// up front, so startup is allocation to first command start.
BenchResult bench_startup(const BenchConfig& config);

/// Reference of the synthetic image of a given size.
std::string bench_image_ref(std::uint64_t size_bytes);

}  // namespace udi
