#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "udi/auth/credential.hpp"
#include "udi/common/time.hpp"
#include "udi/gateway/image_record.hpp"
#include "udi/gateway/metadata_log.hpp"
#include "udi/imagekit/file_tree.hpp"
#include "udi/imagekit/registry.hpp"
#include "udi/imagekit/site_config.hpp"
#include "udi/imagekit/udi_format.hpp"

namespace udi {

struct GatewayConfig {
    std::string system = "cluster";
    std::filesystem::path storage_dir;  // UDI files live under <storage_dir>/<system>/
    std::filesystem::path log_path;     // defaults to <storage_dir>/metadata.log
    std::string secret;                 // shared with the auth daemons

    Duration heartbeat_interval = std::chrono::seconds(10);
    Duration lease_duration = std::chrono::seconds(60);
    Duration sweep_interval = std::chrono::seconds(15);
    Duration credential_ttl = kDefaultCredentialTtl;
    int worker_pool_size = 2;
    int max_attempts = 3;

    SiteConfig site;
    bool durable = true;  // fsync the log and UDI files
};

/// Observation and fault-injection points. All callbacks run synchronously on
/// the calling thread; record callbacks run while that image is locked and
/// must not call back into the gateway.
struct GatewayHooks {
    enum class Change { Created, Transition, Updated };
    /// `before` is empty for Created.
    std::function<void(Change, const std::optional<ImageRecord>& before, const ImageRecord& after)> on_record;
    /// Runs right after a UDI is written and before it is verified.
    std::function<void(const std::filesystem::path&)> after_udi_write;
    /// Runs after a UDI passed full verification.
    std::function<void(const std::filesystem::path&)> on_verified;
};

class Gateway;

/// One claimed PullTask, run in three stages so the simulator can put virtual
/// time between them:
///
///   Begin    ENQUEUED→PULLING, fetch the manifest
///   Fetch    fetch + check layers, flatten, record content digest, →CONVERTING
///   Convert  site mods, write UDI, verify, →READY
///
/// Any error lands the record in FAILED. If the lease was revoked in the
/// meantime (sweep, expire, restart) the job's output is discarded.
class WorkerJob {
public:
    enum class Stage { Begin, Fetch, Convert, Done };

    ~WorkerJob();
    WorkerJob(const WorkerJob&) = delete;
    WorkerJob& operator=(const WorkerJob&) = delete;

    Stage next_stage() const { return stage_; }
    bool done() const { return stage_ == Stage::Done; }
    /// Runs the next stage. Returns false once the job is done.
    bool step();
    /// Renews the lease. False if it was revoked.
    bool heartbeat();

    const PullTask& task() const { return task_; }
    /// Manifest total size; known after Begin.
    std::uint64_t expected_bytes() const { return manifest_ ? manifest_->total_size : 0; }
    /// Final record (or the record as it stood when the job was discarded).
    const ImageRecord& result() const { return result_; }
    bool discarded() const { return discarded_; }

private:
    friend class Gateway;
    WorkerJob(Gateway& gateway, PullTask task);

    void run_begin();
    void run_fetch();
    void run_convert();
    void finish();
    void maybe_heartbeat();

    Gateway& gw_;
    PullTask task_;
    Stage stage_ = Stage::Begin;
    std::optional<Manifest> manifest_;
    std::optional<FileTree> tree_;
    std::filesystem::path udi_path_;
    Timestamp last_heartbeat_{};
    ImageRecord result_;
    bool discarded_ = false;
    bool released_ = false;
};

class Gateway {
public:
    Gateway(GatewayConfig config, const Clock& clock, Registry& registry, GatewayHooks hooks = {});
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Loads the metadata log, fails every transient record and removes files
    /// left by unfinished work. Must run before any other call. Throws
    /// PersistenceCorrupt, after which the gateway refuses all requests.
    std::vector<ImageRecord> recover_on_startup();
    bool serving() const { return phase_.load() == Phase::Serving; }

    ImageRecord pull(const ImageReference& ref, const Credential& cred);
    /// Throws NotFound.
    ImageRecord lookup(const ImageReference& ref) const;
    std::vector<ImageRecord> list(const std::string& system) const;
    /// Needs an admin credential (Forbidden otherwise).
    ImageRecord expire(const ImageReference& ref, const Credential& cred);

    /// Next live task, FIFO. Empty when the queue is empty or worker_pool_size
    /// jobs are already active.
    std::optional<PullTask> claim_task();
    std::unique_ptr<WorkerJob> start_job(PullTask task);
    /// All stages on the calling thread.
    ImageRecord worker_run(const PullTask& task);
    std::vector<ImageRecord> sweep_stale(Timestamp now);

    /// Blocks up to `timeout` (wall time) for a task to become claimable.
    bool wait_for_task(std::chrono::milliseconds timeout);
    /// Wakes every waiter in wait_for_task.
    void notify_waiters();

    /// The descriptor published when `ref` became READY; empty otherwise.
    std::optional<UdiDescriptor> descriptor(const ImageReference& ref) const;

    std::size_t queued_tasks() const;
    int active_jobs() const;
    const GatewayConfig& config() const { return config_; }
    const Clock& clock() const { return clock_; }
    Registry& registry() { return registry_; }

    /// Where attempt `attempts` of `ref` is stored.
    std::filesystem::path udi_path_for(const ImageReference& ref, int attempts) const;

private:
    friend class WorkerJob;

    enum class Phase { Starting, Serving, Refused };

    struct Slot {
        std::mutex mu;
        std::optional<ImageRecord> record;
        int retry_base = 0;
        std::string lease_id;  // empty: no live lease
        std::optional<UdiDescriptor> udi;
    };

    void require_serving() const;
    Principal authenticate(const Credential& cred, bool admin) const;
    void check_system(const ImageReference& ref) const;
    std::shared_ptr<Slot> slot_for(const std::string& key, bool create) const;
    std::vector<std::shared_ptr<Slot>> all_slots() const;

    std::string next_lease_id();
    void enqueue(const PullTask& task);
    void release(const std::string& lease_id);
    void write_entry(const Slot& slot, const ImageRecord& record);

    // Both run with slot.mu held. The slot keeps `udi` only while READY.
    void transition(Slot& slot, ImageState to, const std::function<void(ImageRecord&)>& edit,
                    std::optional<UdiDescriptor> udi = std::nullopt);
    void revoke(Slot& slot);

    /// Commits `to` only if `lease_id` still owns the record. Returns false
    /// (and changes nothing) if the lease was revoked.
    bool commit_if_owner(const PullTask& task, ImageState from, ImageState to,
                         const std::function<void(ImageRecord&)>& edit, ImageRecord& out,
                         std::optional<UdiDescriptor> udi = std::nullopt);
    bool renew_if_owner(const PullTask& task);
    ImageRecord current(const ImageReference& ref) const;

    GatewayConfig config_;
    const Clock& clock_;
    Registry& registry_;
    GatewayHooks hooks_;
    MetadataLog log_;
    std::atomic<Phase> phase_{Phase::Starting};
    std::atomic<std::uint64_t> lease_counter_{0};

    mutable std::mutex map_mu_;
    mutable std::map<std::string, std::shared_ptr<Slot>> slots_;

    mutable std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<PullTask> queue_;
    std::set<std::string> active_;  // lease ids of claimed jobs
};

}  // namespace udi
