#include "udi/clustersim/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>

#include <fmt/core.h>

#include "udi/clustersim/cluster.hpp"
#include "udi/clustersim/fixtures.hpp"
#include "udi/common/crypto.hpp"
#include "udi/common/error.hpp"
#include "udi/common/rng.hpp"

namespace udi {

namespace fs = std::filesystem;

double ScenarioReport::metric(const std::string& name) const {
    for (const auto& [k, v] : metrics) {
        if (k == name) return v;
    }
    fail(ErrorCode::NotFound, "no metric '" + name + "'");
}

std::string ScenarioReport::to_text() const {
    std::string out = fmt::format("scenario {}: {} -> {}\n", scenario, title, passed ? "PASS" : "FAIL");
    for (const auto& [k, v] : metrics) out += fmt::format("  {} = {}\n", k, v);
    for (const auto& n : notes) out += "  note: " + n + "\n";
    return out;
}

namespace {

class Scratch {
public:
    explicit Scratch(const fs::path& given) {
        if (!given.empty()) {
            fs::create_directories(given);
            path_ = given;
            return;
        }
        auto pattern = (fs::temp_directory_path() / "udi-scenario-XXXXXX").string();
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

constexpr const char* kSystem = "cluster";

ImageReference ref(const std::string& text) { return ImageReference::parse(text, kSystem); }

ClusterConfig base_config(const ScenarioParams& p, const fs::path& storage) {
    ClusterConfig cc;
    cc.system = kSystem;
    cc.seed = p.seed;
    cc.storage_dir = storage;
    cc.gateway.durable = false;
    return cc;
}

JobSpec directive_job(const std::string& image, int nodes) {
    JobSpec spec;
    spec.nodes = nodes;
    spec.mode = ImageMode::Directive;
    spec.image = ref(image);
    spec.gres = {kUdiGres};
    spec.script = {JobCommand{"/opt/app/bin/hello", std::nullopt}};
    return spec;
}

void add_part(Trace& out, const std::string& name, const Cluster& c) {
    out.add(Timestamp{}, "scenario", "part", name);
    out.append(c.trace());
}

std::optional<StateChange> first_change(const Cluster& c, const std::string& canonical, ImageState to,
                                        Timestamp after = Timestamp{}) {
    for (const auto& ch : c.state_history()) {
        if (ch.ref == canonical && ch.to == to && ch.at >= after) return ch;
    }
    return std::nullopt;
}

int count_udi_files(const fs::path& dir) {
    int n = 0;
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        if (it->is_regular_file() && it->path().extension() == ".udi") ++n;
    }
    return n;
}

// 1: a worker dies mid-download; the sweep must notice within one interval.
ScenarioReport stale_lease(const ScenarioParams& p, const fs::path& dir) {
    ScenarioReport rep;
    rep.title = "abandoned download is swept to FAILED; re-pull succeeds";
    Trace trace;

    MemoryRegistry reg;
    publish_demo_images(reg, kSystem);
    FileTree bulk;
    bulk.put_with_parents("/data/table.bin", FileEntry::file(std::string(1 << 20, 'x')));
    reg.publish(ref("bulkdata:1"), {bulk});

    auto cc = base_config(p, dir / "s1");
    cc.total_nodes = 4;
    VerificationCache vc;
    Cluster c(cc, reg, vc);
    auto centos = ref("centos:7");

    // a) worker lost right after PULLING
    c.abandon_worker_after_pulling(centos);
    auto job1 = c.submit(directive_job("centos:7", 2));
    c.run();
    auto pulling = first_change(c, centos.canonical(), ImageState::Pulling);
    auto failed = pulling ? first_change(c, centos.canonical(), ImageState::Failed, pulling->at) : std::nullopt;
    const auto sweep = cc.gateway.sweep_interval;
    bool swept = false;
    if (pulling && failed) {
        auto expiry = pulling->at + cc.gateway.lease_duration;
        auto delay = failed->at - expiry;
        rep.metrics.emplace_back("lease_expiry_s", to_seconds(expiry));
        rep.metrics.emplace_back("failed_at_s", to_seconds(failed->at));
        rep.metrics.emplace_back("detection_delay_s", to_seconds(delay));
        swept = delay > Duration{0} && delay <= sweep && failed->error.find("lease expired") != std::string::npos;
    } else {
        rep.notes.push_back("record never left the transient state");
    }
    rep.metrics.emplace_back("sweep_interval_s", to_seconds(sweep));
    bool job1_failed = !c.result(job1).success;
    rep.metrics.emplace_back("job_failed_on_stale_record", job1_failed ? 1 : 0);

    // b) transfer aborted mid-layer: FAILED at once, nothing left on disk
    auto bulkref = ref("bulkdata:1");
    c.registry().set_faults(RegistryFaults{false, 0.5, false});
    auto udi_before = count_udi_files(cc.storage_dir);
    auto t_pull = c.now();
    c.client_pull(bulkref);
    c.run();
    auto aborted = first_change(c, bulkref.canonical(), ImageState::Failed, t_pull);
    bool abort_fast = aborted && aborted->error.rfind("RegistryIoError", 0) == 0 &&
                      aborted->at - t_pull < cc.gateway.lease_duration;
    if (aborted) rep.metrics.emplace_back("abort_failed_after_s", to_seconds(aborted->at - t_pull));
    bool no_residue = count_udi_files(cc.storage_dir) == udi_before;
    rep.metrics.emplace_back("stray_udi_files", no_residue ? 0 : 1);

    // c) faults cleared: re-pulls go through
    c.registry().set_faults({});
    auto job2 = c.submit(directive_job("centos:7", 2));
    c.run();
    bool job2_ok = c.result(job2).success;
    bool bulk_ready = c.ensure_ready_now(bulkref).state == ImageState::Ready;
    rep.metrics.emplace_back("repull_job_ok", job2_ok ? 1 : 0);
    rep.metrics.emplace_back("repull_after_abort_ready", bulk_ready ? 1 : 0);
    rep.metrics.emplace_back("residual_mounts", c.residual_mounts());

    rep.passed = swept && job1_failed && abort_fast && no_residue && job2_ok && bulk_ready && c.residual_mounts() == 0;
    add_part(trace, "stale-lease", c);
    rep.trace = trace.text();
    return rep;
}

// 2: every conversion is corrupted after it is written; nothing may become
// READY and no forged copy may be mounted.
ScenarioReport false_ready(const ScenarioParams& p, const fs::path& dir) {
    ScenarioReport rep;
    rep.title = "corrupted conversions never reach READY or a mount";
    Trace trace;

    MemoryRegistry reg;
    publish_demo_images(reg, kSystem);
    auto cc = base_config(p, dir / "s2");
    cc.total_nodes = 2;
    VerificationCache vc;
    Cluster c(cc, reg, vc);
    auto image = ref("busybox:latest");
    auto planted_dir = dir / "s2-planted";
    fs::create_directories(planted_dir);

    int iteration = 0;
    int truncations = 0;
    int flips = 0;
    std::optional<UdiDescriptor> forged;
    c.set_udi_write_fault([&](const fs::path& path) {
        auto size = fs::file_size(path);
        auto key = static_cast<std::uint64_t>(iteration);
        bool truncate = keyed_uniform(p.seed, {static_cast<std::uint64_t>(Stream::Noise), 2, key, 0}) < 0.5;
        if (truncate) {
            auto keep = keyed_bits(p.seed, {static_cast<std::uint64_t>(Stream::Noise), 2, key, 1}) % size;
            fs::resize_file(path, keep);
            ++truncations;
        } else {
            auto pos = keyed_bits(p.seed, {static_cast<std::uint64_t>(Stream::Noise), 2, key, 2}) % size;
            auto mask = static_cast<char>(1 + keyed_bits(p.seed, {static_cast<std::uint64_t>(Stream::Noise), 2, key, 3}) % 255);
            std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
            f.seekg(static_cast<std::streamoff>(pos));
            char b = 0;
            f.get(b);
            f.seekp(static_cast<std::streamoff>(pos));
            f.put(static_cast<char>(b ^ mask));
            ++flips;
        }
        // Plant a copy with a descriptor forged from the corrupt bytes.
        auto planted = planted_dir / fmt::format("forged-{}.udi", iteration);
        fs::copy_file(path, planted, fs::copy_options::overwrite_existing);
        std::ifstream in(planted, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        UdiDescriptor d;
        d.path = planted;
        d.size_bytes = bytes.size();
        d.created_at = c.now();
        d.source_ref = image;
        if (bytes.size() >= kUdiTrailerSize) {
            auto tail = std::string_view(bytes).substr(bytes.size() - kUdiTrailerSize);
            d.content_digest =
                to_hex(std::span(reinterpret_cast<const std::uint8_t*>(tail.data()), tail.size()));
        }
        forged = d;
    });

    int settled_failed = 0;
    int verify_errors = 0;
    for (iteration = 0; iteration < p.iterations; ++iteration) {
        forged.reset();
        if (iteration > 0) c.admin_expire(image);
        c.client_pull(image);
        c.run();
        auto record = c.lookup(image);
        if (record.state == ImageState::Failed) ++settled_failed;
        if (record.last_error.rfind("VerifyError", 0) == 0) ++verify_errors;
        if (forged) {
            c.inject_mount(0, *forged, fmt::format("forge-{}", iteration));
            std::error_code ec;
            fs::remove(forged->path, ec);
        }
    }
    c.set_udi_write_fault({});
    // A job asking for the image sees the failure rather than a mount.
    c.admin_expire(image);
    c.set_udi_write_fault([&](const fs::path& path) { fs::resize_file(path, fs::file_size(path) / 2); });
    auto job = c.submit(directive_job("busybox:latest", 2));
    c.run();
    bool job_refused = !c.result(job).success;

    rep.metrics.emplace_back("iterations", p.iterations);
    rep.metrics.emplace_back("truncations", truncations);
    rep.metrics.emplace_back("byte_flips", flips);
    rep.metrics.emplace_back("failed_records", settled_failed);
    rep.metrics.emplace_back("verify_errors", verify_errors);
    rep.metrics.emplace_back("ready_reached", c.ready_transitions());
    rep.metrics.emplace_back("corrupt_mount_successes", c.injected_mount_successes() + c.bypass_violations());
    rep.metrics.emplace_back("job_refused", job_refused ? 1 : 0);
    rep.passed = c.ready_transitions() == 0 && c.injected_mount_successes() == 0 && c.bypass_violations() == 0 &&
                 settled_failed == p.iterations && job_refused;
    add_part(trace, "false-ready", c);
    rep.trace = trace.text();
    return rep;
}

// 3: duplicate pulls queued across repeated gateway crashes.
ScenarioReport restart_storm(const ScenarioParams& p, const fs::path& dir) {
    ScenarioReport rep;
    rep.title = "restart storm keeps downloads within pool size and attempt cap";
    Trace trace;

    MemoryRegistry reg;
    publish_demo_images(reg, kSystem);
    auto cc = base_config(p, dir / "s3");
    cc.total_nodes = 2;
    VerificationCache vc;
    Cluster c(cc, reg, vc);
    auto target = ref("centos:7");
    std::vector<ImageReference> others{ref("ubuntu:16.04"), ref("pyhpc:1.0")};
    c.registry().reset_counters();

    int max_for_target = 0;
    auto observe = [&] { max_for_target = std::max(max_for_target, c.active_workers_for(target)); };
    for (int cycle = 0; cycle < p.restart_cycles; ++cycle) {
        for (int k = 0; k < p.duplicate_pulls; ++k) {
            c.client_pull(target);
            observe();
        }
        for (const auto& o : others) c.client_pull(o);
        observe();
        // Workers get as far as the manifest, then the gateway dies.
        c.run_until(c.now() + std::chrono::milliseconds(10));
        observe();
        c.crash_gateway();
        c.restart_gateway();
    }
    // After the last recovery a single client pull.
    auto after = c.client_pull(target);
    observe();
    int fetches = c.registry().manifest_fetches(target);
    rep.metrics.emplace_back("restart_cycles", p.restart_cycles);
    rep.metrics.emplace_back("duplicate_pulls", p.duplicate_pulls);
    rep.metrics.emplace_back("max_active_downloads", c.max_active_jobs());
    rep.metrics.emplace_back("worker_pool_size", cc.gateway.worker_pool_size);
    rep.metrics.emplace_back("max_active_for_image", max_for_target);
    rep.metrics.emplace_back("manifest_fetches", fetches);
    rep.metrics.emplace_back("attempts_cap", cc.gateway.max_attempts);
    rep.notes.push_back(fmt::format("after recovery the image is {} with {} attempts", to_string(after.state),
                                    after.attempts));

    // An administrator resets the budget; the image then converts normally.
    c.admin_expire(target);
    bool ready = c.ensure_ready_now(target).state == ImageState::Ready;
    rep.metrics.emplace_back("ready_after_expire", ready ? 1 : 0);

    rep.passed = c.max_active_jobs() <= cc.gateway.worker_pool_size && max_for_target <= 1 &&
                 fetches <= cc.gateway.max_attempts && ready;
    add_part(trace, "restart-storm", c);
    rep.trace = trace.text();
    return rep;
}

// 4: authentication daemons down on some nodes.
ScenarioReport auth_outage(const ScenarioParams& p, const fs::path& dir) {
    ScenarioReport rep;
    rep.title = "auth outage fails the prologue naming a node";
    Trace trace;
    if (p.nodes < 1 || p.auth_down < 0 || p.auth_down > p.nodes) {
        fail(ErrorCode::InvalidConfig, "scenario 4 needs 0 <= auth_down <= nodes");
    }

    MemoryRegistry reg;
    publish_demo_images(reg, kSystem);
    auto cc = base_config(p, dir / "s4");
    cc.total_nodes = p.nodes;
    VerificationCache vc;
    Cluster c(cc, reg, vc);
    c.ensure_ready_now(ref("centos:7"));

    std::vector<int> order(static_cast<std::size_t>(p.nodes));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        auto ka = keyed_bits(p.seed, {static_cast<std::uint64_t>(Stream::Noise), 4, static_cast<std::uint64_t>(a)});
        auto kb = keyed_bits(p.seed, {static_cast<std::uint64_t>(Stream::Noise), 4, static_cast<std::uint64_t>(b)});
        return ka != kb ? ka < kb : a < b;
    });
    std::vector<int> down(order.begin(), order.begin() + p.auth_down);
    std::sort(down.begin(), down.end());
    c.set_auth_down(down);
    std::string down_names;
    for (int d : down) down_names += (down_names.empty() ? "" : ",") + c.node(d).id();
    rep.notes.push_back("auth down on: " + (down_names.empty() ? std::string("none") : down_names));

    auto job = c.submit(directive_job("centos:7", p.nodes));
    c.run();
    const auto& r = c.result(job);
    bool outcome_ok;
    if (p.auth_down > 0) {
        bool names = std::any_of(down.begin(), down.end(),
                                 [&](int d) { return r.reason.find(c.node(d).id()) != std::string::npos; });
        outcome_ok = !r.success && r.error == ErrorCode::AuthServiceDown && names;
        rep.metrics.emplace_back("failure_names_down_node", names ? 1 : 0);
        rep.notes.push_back("failure: " + r.reason);
    } else {
        outcome_ok = r.success;
    }
    rep.metrics.emplace_back("down_nodes", p.auth_down);
    rep.metrics.emplace_back("job_failed", r.success ? 0 : 1);
    int residual_after_failure = c.residual_mounts();

    c.set_auth_down({});
    auto healthy = c.submit(directive_job("centos:7", p.nodes));
    c.run();
    bool healthy_ok = c.result(healthy).success;
    rep.metrics.emplace_back("k0_job_ok", healthy_ok ? 1 : 0);
    rep.metrics.emplace_back("residual_mounts", residual_after_failure + c.residual_mounts());

    rep.passed = outcome_ok && healthy_ok && residual_after_failure == 0 && c.residual_mounts() == 0;
    add_part(trace, "auth-outage", c);
    rep.trace = trace.text();
    return rep;
}

// 5: a wide job floods the directory service; per-node group caches fix it.
ScenarioReport identity_storm(const ScenarioParams& p, const fs::path& dir) {
    ScenarioReport rep;
    rep.title = "identity storm: cache off times out, warmed cache succeeds";
    Trace trace;
    auto wall_start = std::chrono::steady_clock::now();
    if (p.warmup_batch < 1 || p.warmup_batch > p.identity_cap) {
        fail(ErrorCode::InvalidConfig, "scenario 5 warm-up batch must be in [1, identity cap]");
    }

    MemoryRegistry reg;
    publish_demo_images(reg, kSystem);
    auto configure = [&](const fs::path& storage, bool cache) {
        auto cc = base_config(p, storage);
        cc.total_nodes = p.storm_nodes;
        cc.identity.concurrency_cap = p.identity_cap;
        cc.identity.timeout = p.identity_timeout;
        cc.identity.service_mean = p.identity_service;
        cc.node.cache_enabled = cache;
        return cc;
    };
    VerificationCache vc;

    // Cache off: every node asks the directory at the same instant.
    bool off_failed = false;
    {
        Cluster c(configure(dir / "s5-off", false), reg, vc);
        c.ensure_ready_now(ref("centos:7"));
        c.identity().reset_stats();
        auto job = c.submit(directive_job("centos:7", p.storm_nodes));
        c.run();
        const auto& r = c.result(job);
        auto st = c.identity().stats();
        off_failed = !r.success && r.error == ErrorCode::IdentityTimeout;
        rep.metrics.emplace_back("cache_off_job_failed", r.success ? 0 : 1);
        rep.metrics.emplace_back("cache_off_backend_requests", st.requests);
        rep.metrics.emplace_back("cache_off_timeouts", st.timeouts);
        rep.metrics.emplace_back("cache_off_residual_mounts", c.residual_mounts());
        if (!r.success) rep.notes.push_back("cache off: " + r.reason);
        add_part(trace, "cache-off", c);
    }

    // Cache on: earlier, smaller jobs fill the node caches; each stays within
    // the directory's capacity. They keep their nodes busy so the next one
    // lands on fresh nodes.
    bool on_ok = false;
    {
        auto cc = configure(dir / "s5-on", true);
        int batches = (p.storm_nodes + p.warmup_batch - 1) / p.warmup_batch;
        auto stagger = p.identity_service + std::chrono::seconds(1);
        cc.command_duration = std::max<Duration>(std::chrono::seconds(30), stagger * (batches + 1));
        Cluster c(cc, reg, vc);
        c.ensure_ready_now(ref("centos:7"));
        c.identity().reset_stats();
        int warm_failed = 0;
        std::vector<std::string> warm_jobs;
        for (int left = p.storm_nodes; left > 0; left -= p.warmup_batch) {
            warm_jobs.push_back(c.submit(directive_job("centos:7", std::min(left, p.warmup_batch))));
            c.run_until(c.now() + stagger);
        }
        c.run();
        for (const auto& id : warm_jobs) warm_failed += c.result(id).success ? 0 : 1;
        auto warm = c.identity().stats();
        c.identity().reset_stats();

        auto job = c.submit(directive_job("centos:7", p.storm_nodes));
        c.run();
        const auto& r = c.result(job);
        auto st = c.identity().stats();
        on_ok = r.success && warm_failed == 0 && st.requests <= p.identity_cap && st.timeouts == 0;
        rep.metrics.emplace_back("warmup_jobs", static_cast<double>(warm_jobs.size()));
        rep.metrics.emplace_back("warmup_backend_requests", warm.requests);
        rep.metrics.emplace_back("warmup_timeouts", warm.timeouts);
        rep.metrics.emplace_back("cache_on_job_ok", r.success ? 1 : 0);
        rep.metrics.emplace_back("cache_on_backend_requests", st.requests);
        rep.metrics.emplace_back("cache_on_timeouts", st.timeouts);
        rep.metrics.emplace_back("identity_cap", p.identity_cap);
        if (auto s = r.startup()) rep.metrics.emplace_back("cache_on_startup_s", to_seconds(*s));
        if (!r.success) rep.notes.push_back("cache on: " + r.reason);
        add_part(trace, "cache-on", c);
    }

    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    rep.notes.push_back(fmt::format("replayed in {:.2f} s of wall time", wall));
    rep.passed = off_failed && on_ok && wall < 30.0;
    rep.trace = trace.text();
    return rep;
}

}  // namespace

ScenarioReport inject_fault(int scenario, const ScenarioParams& params) {
    if (scenario < 1 || scenario > kScenarioCount) {
        fail(ErrorCode::UnknownScenario, fmt::format("no scenario {} (valid: 1..{})", scenario, kScenarioCount));
    }
    Scratch scratch(params.work_dir);
    ScenarioReport rep;
    switch (scenario) {
    case 1: rep = stale_lease(params, scratch.path()); break;
    case 2: rep = false_ready(params, scratch.path()); break;
    case 3: rep = restart_storm(params, scratch.path()); break;
    case 4: rep = auth_outage(params, scratch.path()); break;
    default: rep = identity_storm(params, scratch.path()); break;
    }
    rep.scenario = scenario;
    return rep;
}

}  // namespace udi
