#include "udi/cli/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "udi/bench/bench.hpp"
#include "udi/bench/scaling.hpp"
#include "udi/clustersim/fixtures.hpp"
#include "udi/clustersim/scenarios.hpp"
#include "udi/gateway/http_api.hpp"
#include "udi/gateway/service.hpp"
#include "udi/imagekit/registry_http.hpp"

namespace udi {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidReference:
    case ErrorCode::NotFound:
    case ErrorCode::Forbidden:
    case ErrorCode::MacMismatch:
    case ErrorCode::Expired:
    case ErrorCode::MalformedCredential:
    case ErrorCode::RegistryUnknownImage:
    case ErrorCode::MissingGres:
    case ErrorCode::InvalidSpec:
    case ErrorCode::UnknownScenario:
    case ErrorCode::InsufficientData:
    case ErrorCode::InvalidConfig: return kExitUserError;
    default: return kExitSystemError;
    }
}

const std::vector<std::string>& settings_keys() {
    static const std::vector<std::string> keys{
        // gateway
        "system", "storage_dir", "log_path", "secret", "secret_file", "registry", "site_config", "durable",
        "heartbeat_interval", "lease_duration", "sweep_interval", "credential_ttl", "worker_pool_size",
        "max_attempts",
        // node agents and identity backend
        "cache_enabled", "negative_cache", "cache_ttl", "mount_base", "mount_jitter_mean", "identity_service",
        "identity_jitter", "identity_cap", "identity_timeout",
        // simulator latency model
        "total_nodes", "seed", "gateway_poll", "ready_timeout", "manifest_latency", "registry_bandwidth",
        "convert_rate", "rank_setup_base", "rank_setup_jitter_mean", "command_duration", "epilogue_latency",
        "cleanup_hooks"};
    return keys;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::InvalidConfig, "cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int positive(const KeyValueConfig& kv, const std::string& key, int fallback) {
    auto v = kv.get_int(key, fallback);
    if (v < 1) fail(ErrorCode::InvalidConfig, fmt::format("{} must be positive", key));
    return static_cast<int>(v);
}

}  // namespace

ClusterConfig cluster_config_from(const KeyValueConfig& kv, const fs::path& base_dir) {
    auto unknown = kv.unknown_keys(settings_keys());
    if (!unknown.empty()) fail(ErrorCode::InvalidConfig, "unknown setting '" + unknown.front() + "'");

    ClusterConfig c;
    c.system = kv.get_string("system", c.system);
    if (kv.contains("storage_dir")) c.storage_dir = resolve(base_dir, kv.get_string("storage_dir", ""));
    if (kv.contains("secret_file")) {
        auto text = read_text(resolve(base_dir, kv.get_string("secret_file", "")));
        c.secret = trim(text.substr(0, text.find('\n')));
        if (c.secret.empty()) fail(ErrorCode::InvalidConfig, "secret file is empty");
    } else {
        c.secret = kv.get_string("secret", c.secret);
    }

    auto& g = c.gateway;
    if (kv.contains("log_path")) g.log_path = resolve(base_dir, kv.get_string("log_path", ""));
    if (kv.contains("site_config")) g.site = SiteConfig::load(resolve(base_dir, kv.get_string("site_config", "")));
    g.durable = kv.get_bool("durable", g.durable);
    g.heartbeat_interval = kv.get_duration("heartbeat_interval", g.heartbeat_interval);
    g.lease_duration = kv.get_duration("lease_duration", g.lease_duration);
    g.sweep_interval = kv.get_duration("sweep_interval", g.sweep_interval);
    g.credential_ttl = kv.get_duration("credential_ttl", g.credential_ttl);
    g.worker_pool_size = positive(kv, "worker_pool_size", g.worker_pool_size);
    g.max_attempts = positive(kv, "max_attempts", g.max_attempts);

    auto& n = c.node;
    n.cache_enabled = kv.get_bool("cache_enabled", n.cache_enabled);
    n.negative_cache = kv.get_bool("negative_cache", n.negative_cache);
    n.cache_ttl = kv.get_duration("cache_ttl", n.cache_ttl);
    n.mount_base = kv.get_duration("mount_base", n.mount_base);
    n.mount_jitter_mean = kv.get_duration("mount_jitter_mean", n.mount_jitter_mean);

    auto& id = c.identity;
    id.service_mean = kv.get_duration("identity_service", id.service_mean);
    id.jitter = kv.get_double("identity_jitter", id.jitter);
    id.concurrency_cap = positive(kv, "identity_cap", id.concurrency_cap);
    id.timeout = kv.get_duration("identity_timeout", id.timeout);

    c.total_nodes = positive(kv, "total_nodes", c.total_nodes);
    auto seed = kv.get_int("seed", static_cast<long long>(c.seed));
    if (seed < 0) fail(ErrorCode::InvalidConfig, "seed must not be negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.gateway_poll = kv.get_duration("gateway_poll", c.gateway_poll);
    c.ready_timeout = kv.get_duration("ready_timeout", c.ready_timeout);
    c.manifest_latency = kv.get_duration("manifest_latency", c.manifest_latency);
    c.registry_bandwidth = kv.get_double("registry_bandwidth", c.registry_bandwidth);
    c.convert_rate = kv.get_double("convert_rate", c.convert_rate);
    if (!(c.registry_bandwidth > 0) || !(c.convert_rate > 0)) {
        fail(ErrorCode::InvalidConfig, "registry_bandwidth and convert_rate must be positive");
    }
    c.rank_setup_base = kv.get_duration("rank_setup_base", c.rank_setup_base);
    c.rank_setup_jitter_mean = kv.get_duration("rank_setup_jitter_mean", c.rank_setup_jitter_mean);
    c.command_duration = kv.get_duration("command_duration", c.command_duration);
    c.epilogue_latency = kv.get_duration("epilogue_latency", c.epilogue_latency);
    if (kv.contains("cleanup_hooks")) {
        c.cleanup_hooks.clear();
        for (auto& h : split(kv.get_string("cleanup_hooks", ""), ',')) {
            auto t = trim(h);
            if (!t.empty()) c.cleanup_hooks.push_back(t);
        }
    }
    return c;
}

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_stop_signal(int) { g_stop.store(true); }

// Blocks until SIGINT/SIGTERM, or for `seconds` when positive.
void wait_for_stop(double seconds) {
    g_stop.store(false);
    auto prev_int = std::signal(SIGINT, on_stop_signal);
    auto prev_term = std::signal(SIGTERM, on_stop_signal);
    auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    while (!g_stop.load() && (seconds <= 0 || std::chrono::steady_clock::now() < until)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    std::signal(SIGINT, prev_int);
    std::signal(SIGTERM, prev_term);
}

struct Settings {
    KeyValueConfig kv;
    ClusterConfig cluster;
};

Settings load_settings(const std::string& path) {
    Settings s;
    fs::path base;
    if (!path.empty()) {
        s.kv = KeyValueConfig::load(path);
        base = fs::path(path).parent_path();
    }
    s.cluster = cluster_config_from(s.kv, base);
    return s;
}

// Scratch directory for simulated runs.
class Scratch {
public:
    Scratch() {
        auto pattern = (fs::temp_directory_path() / "udictl-XXXXXX").string();
        if (::mkdtemp(pattern.data()) == nullptr) fail(ErrorCode::StorageIoError, "cannot create scratch directory");
        path_ = pattern;
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    Scratch(const Scratch&) = delete;
    Scratch& operator=(const Scratch&) = delete;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text)) fail(ErrorCode::StorageIoError, "cannot write " + path);
}

// Runs one job on a simulated cluster holding the demo images.
int simulate_job(JobSpec spec, const Settings& settings, const std::string& trace_path, std::ostream& out,
                 std::ostream& err) {
    spec.validate();
    Scratch scratch;
    MemoryRegistry registry;
    publish_demo_images(registry, settings.cluster.system);
    VerificationCache verifier;
    auto cc = settings.cluster;
    cc.total_nodes = std::max(cc.total_nodes, spec.nodes);
    cc.storage_dir = scratch.path() / "gateway";
    cc.gateway.durable = false;
    Cluster cluster(cc, registry, verifier);
    auto id = cluster.submit(std::move(spec));
    cluster.run();
    const auto& r = cluster.result(id);
    out << r.summary();
    if (!trace_path.empty()) write_file(trace_path, cluster.trace().text());
    if (r.success) return kExitOk;
    err << "udictl: job " << id << " failed: " << r.reason << "\n";
    return r.error ? exit_code_for(*r.error) : kExitSystemError;
}

Registry* open_registry(const std::string& where, const std::string& system, std::unique_ptr<Registry>& holder) {
    if (where.empty()) fail(ErrorCode::InvalidConfig, "no registry: pass --registry or set 'registry'");
    if (where.rfind("http://", 0) == 0 || where.rfind("https://", 0) == 0) {
        holder = std::make_unique<HttpRegistry>(where, system);
    } else {
        holder = std::make_unique<DirectoryRegistry>(where, system);
    }
    return holder.get();
}

std::vector<std::uint32_t> groups_of(const ClusterConfig& c, std::uint32_t uid) {
    auto it = c.directory.find(uid);
    return it == c.directory.end() ? std::vector<std::uint32_t>{} : it->second;
}

std::string record_json(const ImageRecord& r) {
    nlohmann::json j = r;
    return j.dump(2);
}

std::vector<ImageMode> modes_from(const std::string& mode) {
    if (mode == "both") return {ImageMode::Directive, ImageMode::PerCommand};
    auto m = parse_image_mode(mode);
    if (!m) fail(ErrorCode::InvalidConfig, "mode must be directive, per-command or both");
    return {*m};
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Image gateway, node agents and cluster simulator", "udictl"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "settings file (key = value)")->check(CLI::ExistingFile);

    // gateway serve
    auto* gateway = app.add_subcommand("gateway", "image gateway service");
    gateway->require_subcommand(1);
    auto* gw_serve = gateway->add_subcommand("serve", "run the gateway HTTP API with its worker pool");
    std::string host = "127.0.0.1";
    int port = 8480;
    std::string registry_where;
    double serve_for = 0;
    gw_serve->add_option("--config", config_path, "settings file")->check(CLI::ExistingFile);
    gw_serve->add_option("--host", host);
    gw_serve->add_option("--port", port, "0 picks a free port");
    gw_serve->add_option("--registry", registry_where, "registry URL or directory");
    gw_serve->add_option("--serve-for", serve_for, "stop after this many seconds (default: until interrupted)");

    // registry serve
    auto* registry = app.add_subcommand("registry", "fake container registry");
    registry->require_subcommand(1);
    auto* reg_serve = registry->add_subcommand("serve", "serve a directory registry over HTTP");
    std::string registry_root;
    bool with_demo = false;
    std::string reg_system = "cluster";
    reg_serve->add_option("--root", registry_root, "registry directory")->required();
    reg_serve->add_option("--host", host);
    reg_serve->add_option("--port", port, "0 picks a free port");
    reg_serve->add_option("--system", reg_system);
    reg_serve->add_flag("--demo", with_demo, "publish the demo images into the root first");
    reg_serve->add_option("--serve-for", serve_for, "stop after this many seconds (default: until interrupted)");

    // job submit
    auto* job = app.add_subcommand("job", "batch jobs on the simulated cluster");
    job->require_subcommand(1);
    auto* submit = job->add_subcommand("submit", "run a job script on a simulated cluster");
    std::optional<int> nodes, ranks;
    std::string udi_image;
    bool per_command = false;
    std::vector<std::string> gres;
    std::string script_path, trace_path, job_id;
    std::optional<std::uint64_t> seed;
    submit->add_option("--config", config_path, "settings file")->check(CLI::ExistingFile);
    submit->add_option("--nodes", nodes)->check(CLI::PositiveNumber);
    submit->add_option("--ranks", ranks, "ranks per node")->check(CLI::PositiveNumber);
    auto* udi_opt = submit->add_option("--udi", udi_image, "image for the whole job");
    auto* pc_flag = submit->add_flag("--per-command", per_command, "images are chosen per command");
    udi_opt->excludes(pc_flag);
    submit->add_option("--gres", gres, "generic resources; containerized jobs need 'udi'")->delimiter(',');
    submit->add_option("--job-id", job_id);
    submit->add_option("--seed", seed);
    submit->add_option("--trace", trace_path, "write the event trace here");
    submit->add_option("script", script_path, "job script")->required()->check(CLI::ExistingFile);

    // run
    auto* run = app.add_subcommand("run", "run one command inside an image on a simulated allocation");
    std::string run_image;
    std::vector<std::string> command;
    run->add_option("--config", config_path, "settings file")->check(CLI::ExistingFile);
    run->add_option("--image", run_image)->required();
    run->add_option("--nodes", nodes)->check(CLI::PositiveNumber);
    run->add_option("--ranks", ranks, "ranks per node")->check(CLI::PositiveNumber);
    run->add_option("--seed", seed);
    run->add_option("--trace", trace_path, "write the event trace here");
    run->add_option("command", command, "command after --")->required();

    // chaos run
    auto* chaos = app.add_subcommand("chaos", "fault scenarios");
    chaos->require_subcommand(1);
    auto* chaos_run = chaos->add_subcommand("run", "run a fault scenario and report whether the fix held");
    int scenario = 0;
    std::optional<int> iterations;
    chaos_run->add_option("--scenario", scenario, fmt::format("1..{}", kScenarioCount))->required();
    chaos_run->add_option("--seed", seed);
    chaos_run->add_option("--iterations", iterations, "corruption count for scenario 2")->check(CLI::PositiveNumber);
    chaos_run->add_option("--trace", trace_path, "write the event trace here");

    // bench
    auto* bench = app.add_subcommand("bench", "startup benchmark and scaling classification");
    bench->require_subcommand(1);
    auto* bench_start = bench->add_subcommand("startup", "measure job startup over node counts, ranks and sizes");
    std::vector<int> node_counts{1, 2, 4, 8, 16, 32, 64, 128};
    std::vector<int> rank_counts{1};
    std::vector<std::uint64_t> sizes{kSmallImageBytes};
    std::string mode = "directive";
    std::string csv_path, report_path, format = "text";
    bool cold_identity = false;
    bool no_report = false;
    ScalingOptions scaling;
    bench_start->add_option("--config", config_path, "settings file")->check(CLI::ExistingFile);
    bench_start->add_option("--nodes", node_counts, "node counts")->delimiter(',')->capture_default_str();
    bench_start->add_option("--ranks", rank_counts, "ranks per node")->delimiter(',')->capture_default_str();
    bench_start->add_option("--sizes", sizes, "image sizes in bytes")->delimiter(',')->capture_default_str();
    bench_start->add_option("--mode", mode, "directive, per-command or both")->capture_default_str();
    bench_start->add_option("--seed", seed);
    bench_start->add_flag("--cold-identity", cold_identity, "do not pre-fill node group caches");
    bench_start->add_option("--csv", csv_path, "write rows here instead of the output stream");
    bench_start->add_option("--report", report_path, "write the regime report here");
    bench_start->add_flag("--no-report", no_report, "skip the regime report");
    bench_start->add_option("--format", format, "report format: text or json")->check(CLI::IsMember({"text", "json"}));
    bench_start->add_option("--window", scaling.window, "points per sliding fit")->capture_default_str();
    bench_start->add_option("--low", scaling.low, "slope below this is sublinear")->capture_default_str();
    bench_start->add_option("--high", scaling.high, "slope above this is superlinear")->capture_default_str();

    auto* bench_classify = bench->add_subcommand("classify", "classify the scaling regimes of a bench CSV");
    std::string classify_csv;
    bench_classify->add_option("csv", classify_csv)->required()->check(CLI::ExistingFile);
    bench_classify->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
    bench_classify->add_option("--window", scaling.window)->capture_default_str();
    bench_classify->add_option("--low", scaling.low)->capture_default_str();
    bench_classify->add_option("--high", scaling.high)->capture_default_str();

    // admin / image clients
    std::string gateway_url = "http://127.0.0.1:8480";
    std::string image;
    std::uint32_t uid = 1000;
    auto* admin = app.add_subcommand("admin", "administrative gateway calls");
    admin->require_subcommand(1);
    auto* expire = admin->add_subcommand("expire", "expire an image so the next pull fetches it again");
    expire->add_option("--config", config_path, "settings file (for the secret)")->check(CLI::ExistingFile);
    expire->add_option("--gateway", gateway_url)->capture_default_str();
    expire->add_option("image", image)->required();

    auto* image_cmd = app.add_subcommand("image", "gateway client calls");
    image_cmd->require_subcommand(1);
    auto* pull = image_cmd->add_subcommand("pull", "request an image");
    auto* lookup = image_cmd->add_subcommand("lookup", "show an image record");
    auto* list = image_cmd->add_subcommand("list", "list the system's image records");
    for (auto* sub : {pull, lookup, list}) {
        sub->add_option("--config", config_path, "settings file")->check(CLI::ExistingFile);
        sub->add_option("--gateway", gateway_url)->capture_default_str();
    }
    pull->add_option("--uid", uid)->capture_default_str();
    pull->add_option("image", image)->required();
    lookup->add_option("image", image)->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUserError;
    }

    try {
        auto settings = load_settings(config_path);
        const auto& system = settings.cluster.system;
        if (seed) settings.cluster.seed = *seed;

        if (gw_serve->parsed()) {
            auto& cc = settings.cluster;
            if (cc.storage_dir.empty()) fail(ErrorCode::InvalidConfig, "gateway serve needs 'storage_dir'");
            if (!settings.kv.contains("secret") && !settings.kv.contains("secret_file")) {
                fail(ErrorCode::InvalidConfig, "gateway serve needs 'secret_file' or 'secret'");
            }
            if (registry_where.empty()) registry_where = settings.kv.get_string("registry", "");
            std::unique_ptr<Registry> holder;
            auto* reg = open_registry(registry_where, system, holder);
            auto gc = cc.gateway;
            gc.system = system;
            gc.storage_dir = cc.storage_dir;
            gc.secret = cc.secret;
            SystemClock clock;
            Gateway gw(gc, clock, *reg);
            auto failed = gw.recover_on_startup();
            if (!failed.empty()) err << "recovered: " << failed.size() << " unfinished pulls marked FAILED\n";
            GatewayService service(gw);
            service.start();
            GatewayServer server(gw);
            int bound = server.start(host, port);
            out << fmt::format("gateway for '{}' listening on http://{}:{}", system, host, bound) << std::endl;
            wait_for_stop(serve_for);
            server.stop();
            service.stop();
            return kExitOk;
        }

        if (reg_serve->parsed()) {
            fs::create_directories(registry_root);
            DirectoryRegistry reg(registry_root, reg_system);
            if (with_demo) {
                for (const auto& img : demo_images()) {
                    reg.publish(ImageReference::parse(img.ref, reg_system), img.layers);
                }
            }
            RegistryServer server(reg);
            int bound = server.start(host, port);
            out << fmt::format("registry {} listening on http://{}:{}", registry_root, host, bound) << std::endl;
            wait_for_stop(serve_for);
            server.stop();
            return kExitOk;
        }

        if (submit->parsed()) {
            auto spec = JobSpec::parse(read_text(script_path), system);
            if (nodes) spec.nodes = *nodes;
            if (ranks) spec.ranks_per_node = *ranks;
            if (!job_id.empty()) spec.job_id = job_id;
            if (!udi_image.empty()) {
                try {
                    spec.image = ImageReference::parse(udi_image, system);
                } catch (const Error& e) {
                    fail(ErrorCode::InvalidSpec, "--udi: " + e.detail());
                }
                spec.mode = ImageMode::Directive;
            } else if (per_command) {
                spec.mode = ImageMode::PerCommand;
            }
            for (auto& g : gres) {
                if (std::find(spec.gres.begin(), spec.gres.end(), g) == spec.gres.end()) spec.gres.push_back(g);
            }
            return simulate_job(std::move(spec), settings, trace_path, out, err);
        }

        if (run->parsed()) {
            JobSpec spec;
            spec.job_id = "run";
            spec.nodes = nodes.value_or(1);
            spec.ranks_per_node = ranks.value_or(1);
            spec.mode = ImageMode::PerCommand;
            spec.gres = {std::string(kUdiGres)};
            std::string text;
            for (const auto& part : command) text += (text.empty() ? "" : " ") + part;
            ImageReference ref;
            try {
                ref = ImageReference::parse(run_image, system);
            } catch (const Error& e) {
                fail(ErrorCode::InvalidSpec, "--image: " + e.detail());
            }
            spec.script = {JobCommand{text, ref}};
            return simulate_job(std::move(spec), settings, trace_path, out, err);
        }

        if (chaos_run->parsed()) {
            ScenarioParams params;
            params.seed = settings.cluster.seed;
            if (iterations) params.iterations = *iterations;
            auto report = inject_fault(scenario, params);
            out << report.to_text();
            if (!trace_path.empty()) write_file(trace_path, report.trace);
            return report.passed ? kExitOk : kExitSystemError;
        }

        if (bench_start->parsed()) {
            BenchConfig bc;
            bc.node_counts = node_counts;
            bc.ranks = rank_counts;
            bc.image_sizes = sizes;
            bc.modes = modes_from(mode);
            bc.seed = settings.cluster.seed;
            bc.cluster = settings.cluster;
            bc.warm_identity = !cold_identity;
            auto result = bench_startup(bc);
            for (const auto& f : result.failures) {
                err << fmt::format("failed row: nodes={} ranks={} mode={} size={}: {}\n", f.nodes, f.ranks_per_node,
                                   to_string(f.image_mode), f.image_size_bytes, f.reason);
            }
            auto csv = to_csv(result.rows);
            if (csv_path.empty()) out << csv;
            else write_file(csv_path, csv);
            if (!no_report) {
                std::string text;
                try {
                    auto rep = classify_scaling(result.rows, scaling);
                    text = format == "json" ? rep.to_json() + "\n" : rep.to_text();
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::InsufficientData) throw;
                    err << "regime report skipped: " << e.detail() << "\n";
                }
                if (!text.empty()) {
                    if (!report_path.empty()) write_file(report_path, text);
                    else out << (csv_path.empty() ? "\n" : "") << text;
                }
            }
            return kExitOk;
        }

        if (bench_classify->parsed()) {
            auto rep = classify_scaling(parse_csv(read_text(classify_csv)), scaling);
            out << (format == "json" ? rep.to_json() + "\n" : rep.to_text());
            return kExitOk;
        }

        if (expire->parsed()) {
            auto ref = ImageReference::parse(image, system);
            auto cred = issue_credential(0, {0}, Scope::Admin, settings.cluster.secret, SystemClock().now());
            GatewayClient client(gateway_url);
            out << record_json(client.expire(ref, cred)) << "\n";
            return kExitOk;
        }

        if (pull->parsed()) {
            auto ref = ImageReference::parse(image, system);
            auto cred =
                issue_credential(uid, groups_of(settings.cluster, uid), Scope::User, settings.cluster.secret,
                                 SystemClock().now());
            GatewayClient client(gateway_url);
            out << record_json(client.pull(ref, cred)) << "\n";
            return kExitOk;
        }
        if (lookup->parsed()) {
            GatewayClient client(gateway_url);
            out << record_json(client.lookup(ImageReference::parse(image, system))) << "\n";
            return kExitOk;
        }
        if (list->parsed()) {
            GatewayClient client(gateway_url);
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& r : client.list(system)) arr.push_back(r);
            out << arr.dump(2) << "\n";
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "udictl: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "udictl: " << e.what() << "\n";
        return kExitSystemError;
    }
    err << "udictl: nothing to do\n";
    return kExitUserError;
}

int cli_dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace udi
