#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "udi/auth/credential.hpp"
#include "udi/clustersim/event_queue.hpp"
#include "udi/clustersim/job_spec.hpp"
#include "udi/common/error.hpp"
#include "udi/common/time.hpp"
#include "udi/gateway/gateway.hpp"
#include "udi/imagekit/registry.hpp"
#include "udi/nodeagent/identity.hpp"
#include "udi/nodeagent/node_agent.hpp"
#include "udi/nodeagent/verification_cache.hpp"

namespace udi {

struct ClusterConfig {
    std::string system = "cluster";
    int total_nodes = 16;
    std::uint64_t seed = 1;
    std::string secret = "cluster-secret";
    std::filesystem::path storage_dir;

    // system/storage_dir/secret are taken from the fields above.
    GatewayConfig gateway;
    NodeAgentConfig node;
    IdentityConfig identity;
    GroupDirectory directory{{1000, {100, 1000}}};

    // Virtual costs of gateway work.
    Duration gateway_poll = std::chrono::seconds(1);
    Duration ready_timeout = std::chrono::hours(1);
    Duration manifest_latency = std::chrono::milliseconds(50);
    double registry_bandwidth = 100e6;  // bytes per second
    double convert_rate = 200e6;        // bytes per second

    // Per-rank setup of a per-command launch: base + Exp(mean), serialized per node.
    Duration rank_setup_base = std::chrono::milliseconds(15);
    Duration rank_setup_jitter_mean = std::chrono::milliseconds(5);

    Duration command_duration = std::chrono::seconds(1);
    Duration epilogue_latency = std::chrono::milliseconds(10);
    /// Site cleanup steps the epilogue runs after unmounting.
    std::vector<std::string> cleanup_hooks{"flush-node-caches"};
};

struct CommandResult {
    std::string text;
    std::optional<std::string> image;  // canonical ref
    bool ok = true;
    std::string error;
    Timestamp start{};
    Timestamp end{};
};

struct JobResult {
    std::string job_id;
    Timestamp submitted{};
    Timestamp started{};  // nodes allocated
    std::optional<Timestamp> first_command_start;
    Timestamp finished{};
    Duration prologue_duration{};
    Duration exec_duration{};
    Duration epilogue_duration{};
    std::vector<std::string> per_node_events;
    std::vector<CommandResult> commands;
    bool success = false;
    std::string reason;  // set when !success
    std::optional<ErrorCode> error;

    /// Time from allocation to the first command's start.
    std::optional<Duration> startup() const;
    std::string summary() const;
};

/// One observed record state change in the embedded gateway.
struct StateChange {
    Timestamp at{};
    std::string ref;  // canonical
    std::optional<ImageState> from;
    ImageState to = ImageState::Enqueued;
    std::string error;  // last_error when `to` is FAILED
};

/// Deterministic virtual-time cluster: a FIFO scheduler, one NodeAgent per
/// node, a shared identity backend and an embedded gateway whose workers are
/// stepped by events. Everything runs on the caller's thread.
class Cluster {
public:
    using UdiWriteFault = std::function<void(const std::filesystem::path&)>;

    Cluster(ClusterConfig config, Registry& registry, VerificationCache& verifier);
    ~Cluster();
    Cluster(const Cluster&) = delete;
    Cluster& operator=(const Cluster&) = delete;

    /// Validates, queues and (if nodes are free) starts the job now.
    /// Throws MissingGres or InvalidSpec.
    std::string submit(JobSpec spec);
    void run() { events_.run(); }
    void run_until(Timestamp t) { events_.run_until(t); }
    /// Kills the job at virtual time `at`; the epilogue still runs.
    void kill(const std::string& job_id, Timestamp at);
    /// Unmounts everything the job holds and frees its nodes. Idempotent.
    void epilogue(const std::string& job_id);

    bool finished(const std::string& job_id) const;
    /// Throws NotFound.
    const JobResult& result(const std::string& job_id) const;

    // Client-side gateway access, as a user or an administrator would have it.
    ImageRecord client_pull(const ImageReference& ref);
    ImageRecord admin_expire(const ImageReference& ref);
    std::optional<UdiDescriptor> descriptor(const ImageReference& ref) const;
    ImageRecord lookup(const ImageReference& ref) const;
    /// Pulls and runs the simulation until the image settles.
    ImageRecord ensure_ready_now(const ImageReference& ref);

    // Faults.
    void crash_gateway();
    void restart_gateway();
    bool gateway_up() const { return gateway_ != nullptr; }
    /// The next worker for `ref` dies after reaching PULLING.
    void abandon_worker_after_pulling(const ImageReference& ref);
    void set_udi_write_fault(UdiWriteFault fault) { write_fault_ = std::move(fault); }
    void set_auth_down(const std::vector<int>& node_indices);
    /// A mount that did not come from a gateway descriptor. Returns true if
    /// the node accepted it.
    bool inject_mount(int node_index, const UdiDescriptor& forged, const std::string& job_id);

    Credential user_credential(std::uint32_t uid) const;
    Credential admin_credential() const;

    Gateway& gateway();
    InstrumentedRegistry& registry() { return registry_; }
    NodeAgent& node(int index) { return *nodes_.at(static_cast<std::size_t>(index)); }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    IdentityBackend& identity() { return identity_; }
    EventQueue& events() { return events_; }
    Trace& trace() { return trace_; }
    const Trace& trace() const { return trace_; }
    const ClusterConfig& config() const { return config_; }
    Timestamp now() const { return clock_.now(); }

    int residual_mounts() const;
    /// Successful mounts of paths that were never READY in the gateway.
    int bypass_violations() const { return bypass_violations_; }
    int injected_mount_successes() const { return injected_successes_; }
    int max_active_jobs() const { return max_active_jobs_; }
    /// READY transitions observed (across gateway restarts).
    int ready_transitions() const { return ready_transitions_; }
    const std::vector<StateChange>& state_history() const { return history_; }
    /// Workers currently holding a claimed task for `ref`.
    int active_workers_for(const ImageReference& ref) const;
    int free_nodes() const { return static_cast<int>(free_.size()); }

private:
    struct Job;
    struct ReadyFailure {
        std::string message;
        std::optional<ErrorCode> code;  // empty for gateway-side failures such as lease expiry
    };
    using ReadyResult = std::variant<UdiDescriptor, ReadyFailure>;

    void build_gateway();
    void pump();
    void step_worker(std::uint64_t worker, std::uint64_t generation);
    void heartbeat_tick();
    void sweep_tick();

    void try_start_jobs();
    void start_job(Job& job);
    void job_event(Job& job, Timestamp at, std::function<void()> fn, bool always = false);
    void ensure_ready(Job& job, const ImageReference& ref, std::function<void(const ReadyResult&)> done);
    void poll_ready(Job& job, const ImageReference& ref, Timestamp deadline,
                    std::function<void(const ReadyResult&)> done);
    void prologue(Job& job);
    void mount_fanout(Job& job, const UdiDescriptor& udi, std::function<void()> all_done);
    void run_command(Job& job, std::size_t index);
    void command_finished(Job& job, std::size_t index, bool ok, const std::string& error);
    void fail_job(Job& job, const std::string& reason, std::optional<ErrorCode> code);
    void finish_if_quiet(Job& job);
    void note_mount(const MountHandle& handle, int node_index);

    Job& job(const std::string& id);
    std::string node_entity(int index) const;
    static std::string short_digest(const std::string& digest);

    ClusterConfig config_;
    ManualClock clock_;
    EventQueue events_;
    Trace trace_;
    InstrumentedRegistry registry_;
    VerificationCache& verifier_;
    IdentityBackend identity_;
    std::vector<std::unique_ptr<NodeAgent>> nodes_;

    std::unique_ptr<Gateway> gateway_;
    std::uint64_t generation_ = 0;
    std::uint64_t next_worker_ = 0;
    std::map<std::uint64_t, std::unique_ptr<WorkerJob>> workers_;
    std::set<std::string> abandon_;  // canonical refs
    UdiWriteFault write_fault_;

    std::map<std::string, std::unique_ptr<Job>> jobs_;
    std::vector<std::string> pending_;  // FIFO of queued job ids
    std::set<int> free_;
    std::uint64_t next_job_ = 0;

    std::set<std::string> ever_ready_;  // UDI paths published READY
    int bypass_violations_ = 0;
    int injected_successes_ = 0;
    int max_active_jobs_ = 0;
    int ready_transitions_ = 0;
    std::vector<StateChange> history_;
};

}  // namespace udi
