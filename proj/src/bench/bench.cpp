#include "udi/bench/bench.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "udi/clustersim/fixtures.hpp"
#include "udi/common/config.hpp"
#include "udi/common/crypto.hpp"
#include "udi/common/error.hpp"

namespace udi {

namespace fs = std::filesystem;

std::string to_csv(const std::vector<BenchRow>& rows) {
    std::string out(kBenchCsvHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},{:.6f},{}\n", r.nodes, r.ranks_per_node, to_string(r.image_mode),
                           r.image_size_bytes, r.startup_seconds, r.seed);
    }
    return out;
}

namespace {

template <typename T>
T parse_number(const std::string& field, int line, const char* what) {
    T value{};
    auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || p != field.data() + field.size()) {
        fail(ErrorCode::InvalidSpec, fmt::format("csv line {}: bad {} '{}'", line, what, field));
    }
    return value;
}

double parse_seconds(const std::string& field, int line) {
    char* end = nullptr;
    double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size()) {
        fail(ErrorCode::InvalidSpec, fmt::format("csv line {}: bad startup_seconds '{}'", line, field));
    }
    return v;
}

}  // namespace

std::vector<BenchRow> parse_csv(std::string_view text) {
    std::vector<BenchRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line != kBenchCsvHeader) fail(ErrorCode::InvalidSpec, "csv header must be: " + std::string(kBenchCsvHeader));
            header = true;
            continue;
        }
        auto f = split(line, ',');
        if (f.size() != 6) fail(ErrorCode::InvalidSpec, fmt::format("csv line {}: expected 6 fields", lineno));
        BenchRow r;
        r.nodes = parse_number<int>(f[0], lineno, "nodes");
        r.ranks_per_node = parse_number<int>(f[1], lineno, "ranks_per_node");
        auto mode = parse_image_mode(f[2]);
        if (!mode) fail(ErrorCode::InvalidSpec, fmt::format("csv line {}: bad image_mode '{}'", lineno, f[2]));
        r.image_mode = *mode;
        r.image_size_bytes = parse_number<std::uint64_t>(f[3], lineno, "image_size_bytes");
        r.startup_seconds = parse_seconds(f[4], lineno);
        r.seed = parse_number<std::uint64_t>(f[5], lineno, "seed");
        if (r.nodes < 1 || r.ranks_per_node < 1 || r.image_size_bytes == 0 || !(r.startup_seconds > 0)) {
            fail(ErrorCode::InvalidSpec, fmt::format("csv line {}: values must be positive", lineno));
        }
        rows.push_back(r);
    }
    if (!header) fail(ErrorCode::InvalidSpec, "csv is empty");
    return rows;
}

std::string bench_image_ref(std::uint64_t size_bytes) { return fmt::format("udibench:{}", size_bytes); }

namespace {

class Scratch {
public:
    explicit Scratch(const fs::path& given) {
        if (!given.empty()) {
            fs::create_directories(given);
            path_ = given;
            return;
        }
        auto pattern = (fs::temp_directory_path() / "udi-bench-XXXXXX").string();
        if (::mkdtemp(pattern.data()) == nullptr) fail(ErrorCode::StorageIoError, "cannot create scratch directory");
        path_ = pattern;
        owned_ = true;
    }
    ~Scratch() {
        std::error_code ec;
        if (owned_) fs::remove_all(path_, ec);
    }
    Scratch(const Scratch&) = delete;
    Scratch& operator=(const Scratch&) = delete;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    bool owned_ = false;
};

}  // namespace

BenchResult bench_startup(const BenchConfig& config) {
    if (config.node_counts.empty() || config.ranks.empty() || config.image_sizes.empty() || config.modes.empty()) {
        fail(ErrorCode::InvalidConfig, "bench needs node counts, ranks, image sizes and modes");
    }
    for (int n : config.node_counts) {
        if (n < 1) fail(ErrorCode::InvalidConfig, fmt::format("node count {} is not positive", n));
    }
    for (int r : config.ranks) {
        if (r < 1) fail(ErrorCode::InvalidConfig, fmt::format("rank count {} is not positive", r));
    }
    for (auto s : config.image_sizes) {
        if (s == 0) fail(ErrorCode::InvalidConfig, "image size must be positive");
    }

    Scratch scratch(config.work_dir);
    const auto system = config.cluster.system;
    MemoryRegistry registry;
    for (auto size : config.image_sizes) {
        registry.publish(ImageReference::parse(bench_image_ref(size), system), sized_image_layers(size));
    }
    VerificationCache verifier;  // shared: one full verification per image file

    auto row_config = [&](int nodes) {
        auto cc = config.cluster;
        cc.total_nodes = nodes;
        cc.seed = config.seed;
        cc.storage_dir = scratch.path() / "gateway";
        return cc;
    };

    // Pull every image once; each row's gateway recovers them as READY.
    {
        Cluster setup(row_config(1), registry, verifier);
        for (auto size : config.image_sizes) {
            auto ref = ImageReference::parse(bench_image_ref(size), system);
            auto rec = setup.ensure_ready_now(ref);
            if (rec.state != ImageState::Ready) {
                fail(ErrorCode::ConversionError,
                     fmt::format("could not pre-pull {}: {}", ref.canonical(), rec.last_error));
            }
        }
    }

    BenchResult result;
    std::string digests;
    for (auto mode : config.modes) {
        for (auto size : config.image_sizes) {
            auto ref = ImageReference::parse(bench_image_ref(size), system);
            for (int nodes : config.node_counts) {
                for (int ranks : config.ranks) {
                    Cluster cluster(row_config(nodes), registry, verifier);
                    if (config.warm_identity) {
                        auto it = config.cluster.directory.find(1000);
                        if (it != config.cluster.directory.end()) {
                            for (int i = 0; i < nodes; ++i) cluster.node(i).seed_cache(1000, it->second, cluster.now());
                        }
                    }
                    JobSpec spec;
                    spec.job_id = "bench";
                    spec.nodes = nodes;
                    spec.ranks_per_node = ranks;
                    spec.mode = mode;
                    spec.gres = {kUdiGres};
                    if (mode == ImageMode::Directive) {
                        spec.image = ref;
                        spec.script = {JobCommand{"bench-app", std::nullopt}};
                    } else {
                        spec.script = {JobCommand{"bench-app", ref}};
                    }
                    auto id = cluster.submit(spec);
                    cluster.run();
                    const auto& r = cluster.result(id);
                    digests += sha256_hex(cluster.trace().text());
                    auto startup = r.startup();
                    if (r.success && startup && *startup > Duration{0}) {
                        result.rows.push_back(
                            BenchRow{nodes, ranks, mode, size, to_seconds(*startup), config.seed});
                    } else {
                        spdlog::warn("bench row nodes={} ranks={} mode={} size={} failed: {}", nodes, ranks,
                                     to_string(mode), size, r.reason);
                        result.failures.push_back(BenchFailure{nodes, ranks, mode, size, r.reason});
                    }
                }
            }
        }
    }
    result.trace_digest = sha256_hex(digests);
    return result;
}

}  // namespace udi
