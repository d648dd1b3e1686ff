#include "udi/gateway/gateway.hpp"

#include <algorithm>
#include <system_error>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "udi/common/error.hpp"
#include "udi/imagekit/layer.hpp"

namespace udi {

namespace fs = std::filesystem;

namespace {

// Thrown out of a progress callback when the job's lease is gone.
struct LeaseRevoked {};

std::string encode_component(const std::string& text) {
    std::string out;
    for (char c : text) {
        if (c == '/') {
            out += "%2F";
        } else if (c == '%') {
            out += "%25";
        } else {
            out += c;
        }
    }
    return out;
}

bool is_temp_name(const fs::path& p) { return p.filename().string().find(".tmp.") != std::string::npos; }

}  // namespace

// ---------------------------------------------------------------------------
// WorkerJob

WorkerJob::WorkerJob(Gateway& gateway, PullTask task) : gw_(gateway), task_(std::move(task)) {}

WorkerJob::~WorkerJob() {
    if (!released_) gw_.release(task_.lease_id);
}

bool WorkerJob::step() {
    if (done()) return false;
    try {
        switch (stage_) {
        case Stage::Begin: run_begin(); break;
        case Stage::Fetch: run_fetch(); break;
        case Stage::Convert: run_convert(); break;
        case Stage::Done: break;
        }
    } catch (const LeaseRevoked&) {
        discarded_ = true;
        result_ = gw_.current(task_.ref);
        finish();
    } catch (const std::exception& e) {
        // run_begin advances the stage right after its commit, so the stage
        // names the state this job holds.
        auto held = stage_ == Stage::Begin   ? ImageState::Enqueued
                    : stage_ == Stage::Fetch ? ImageState::Pulling
                                             : ImageState::Converting;
        std::error_code ec;
        if (!udi_path_.empty()) fs::remove(udi_path_, ec);
        std::string message = e.what();
        try {
            if (!gw_.commit_if_owner(task_, held, ImageState::Failed,
                                     [&](ImageRecord& r) { r.last_error = message; }, result_)) {
                discarded_ = true;
                result_ = gw_.current(task_.ref);
            }
        } catch (const std::exception& inner) {
            spdlog::error("gateway: could not record failure of {}: {}", task_.ref.canonical(), inner.what());
            result_ = gw_.current(task_.ref);
        }
        finish();
    }
    return !done();
}

bool WorkerJob::heartbeat() {
    last_heartbeat_ = gw_.clock_.now();
    return gw_.renew_if_owner(task_);
}

void WorkerJob::maybe_heartbeat() {
    if (gw_.clock_.now() - last_heartbeat_ < gw_.config_.heartbeat_interval) return;
    if (!heartbeat()) throw LeaseRevoked{};
}

void WorkerJob::finish() {
    stage_ = Stage::Done;
    tree_.reset();
    if (discarded_) {
        std::error_code ec;
        if (!udi_path_.empty()) fs::remove(udi_path_, ec);
    }
    if (!released_) {
        released_ = true;
        gw_.release(task_.lease_id);
    }
}

void WorkerJob::run_begin() {
    if (!gw_.commit_if_owner(task_, ImageState::Enqueued, ImageState::Pulling, {}, result_)) throw LeaseRevoked{};
    last_heartbeat_ = gw_.clock_.now();
    stage_ = Stage::Fetch;  // from here on a failure is PULLING→FAILED
    manifest_ = gw_.registry_.fetch_manifest(task_.ref);
}

void WorkerJob::run_fetch() {
    if (!heartbeat()) throw LeaseRevoked{};
    std::vector<FileTree> layers;
    layers.reserve(manifest_->layers.size());
    for (const auto& digest : manifest_->layers) {
        auto blob = fetch_layer(gw_.registry_, task_.ref, digest,
                                [this](std::uint64_t, std::uint64_t) { maybe_heartbeat(); });
        layers.push_back(decode_layer(blob));
        maybe_heartbeat();
    }
    tree_ = flatten(layers);
    layers.clear();
    auto digest = tree_digest(*tree_);
    if (!gw_.commit_if_owner(task_, ImageState::Pulling, ImageState::Converting,
                             [&](ImageRecord& r) { r.content_digest = digest; }, result_)) {
        throw LeaseRevoked{};
    }
    stage_ = Stage::Convert;
}

void WorkerJob::run_convert() {
    if (!heartbeat()) throw LeaseRevoked{};
    FileTree modified;
    try {
        modified = apply_site_mods(std::move(*tree_), gw_.config_.site);
    } catch (const Error& e) {
        fail(ErrorCode::ConversionError, e.what());
    }
    tree_.reset();
    maybe_heartbeat();

    udi_path_ = gw_.udi_path_for(task_.ref, result_.attempts);
    std::error_code ec;
    fs::create_directories(udi_path_.parent_path(), ec);
    if (ec) fail(ErrorCode::StorageIoError, "cannot create " + udi_path_.parent_path().string());
    UdiDescriptor udi;
    try {
        udi = write_udi(modified, udi_path_, task_.ref, gw_.clock_.now(), gw_.config_.site.summary(),
                        WriteOptions{gw_.config_.durable});
    } catch (const Error& e) {
        if (e.code() == ErrorCode::StorageIoError) throw;
        fail(ErrorCode::ConversionError, e.what());
    }
    if (gw_.hooks_.after_udi_write) gw_.hooks_.after_udi_write(udi_path_);
    maybe_heartbeat();

    auto verdict = verify_udi(udi_path_);
    if (!verdict) {
        fail(ErrorCode::VerifyError, fmt::format("{}: {}", to_string(verdict.reason), verdict.detail));
    }
    if (gw_.hooks_.on_verified) gw_.hooks_.on_verified(udi_path_);

    auto size = udi.size_bytes;
    auto path = udi_path_.string();
    if (!gw_.commit_if_owner(
            task_, ImageState::Converting, ImageState::Ready,
            [&](ImageRecord& r) {
                r.udi_path = path;
                r.size_bytes = size;
                r.last_error.clear();
            },
            result_, udi)) {
        throw LeaseRevoked{};
    }
    finish();
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(GatewayConfig config, const Clock& clock, Registry& registry, GatewayHooks hooks)
    : config_(std::move(config)),
      clock_(clock),
      registry_(registry),
      hooks_(std::move(hooks)),
      log_(config_.log_path.empty() ? config_.storage_dir / "metadata.log" : config_.log_path, config_.durable) {
    if (config_.storage_dir.empty()) fail(ErrorCode::InvalidConfig, "gateway storage_dir is not set");
    if (config_.worker_pool_size < 1) fail(ErrorCode::InvalidConfig, "worker_pool_size must be at least 1");
    if (config_.max_attempts < 1) fail(ErrorCode::InvalidConfig, "max_attempts must be at least 1");
    if (config_.lease_duration <= Duration::zero()) fail(ErrorCode::InvalidConfig, "lease duration must be positive");
    std::error_code ec;
    fs::create_directories(config_.storage_dir, ec);
    if (ec) fail(ErrorCode::StorageIoError, "cannot create " + config_.storage_dir.string() + ": " + ec.message());
}

Gateway::~Gateway() = default;

fs::path Gateway::udi_path_for(const ImageReference& ref, int attempts) const {
    return config_.storage_dir / encode_component(ref.system) /
           fmt::format("{}.{}.udi", encode_component(ref.canonical()), attempts);
}

void Gateway::require_serving() const {
    switch (phase_.load()) {
    case Phase::Serving: return;
    case Phase::Refused: fail(ErrorCode::PersistenceCorrupt, "gateway refused to start; metadata store is corrupt");
    case Phase::Starting: throw std::logic_error("gateway used before recover_on_startup");
    }
}

Principal Gateway::authenticate(const Credential& cred, bool admin) const {
    auto who = verify_credential(cred, config_.secret, clock_.now(), config_.credential_ttl);
    if (admin && who.scope != Scope::Admin) fail(ErrorCode::Forbidden, "admin credential required");
    return who;
}

void Gateway::check_system(const ImageReference& ref) const {
    if (ref.system != config_.system) {
        fail(ErrorCode::InvalidReference,
             fmt::format("gateway serves system '{}', not '{}'", config_.system, ref.system));
    }
}

std::shared_ptr<Gateway::Slot> Gateway::slot_for(const std::string& key, bool create) const {
    std::lock_guard lock(map_mu_);
    auto it = slots_.find(key);
    if (it != slots_.end()) return it->second;
    if (!create) return nullptr;
    auto slot = std::make_shared<Slot>();
    slots_.emplace(key, slot);
    return slot;
}

std::vector<std::shared_ptr<Gateway::Slot>> Gateway::all_slots() const {
    std::lock_guard lock(map_mu_);
    std::vector<std::shared_ptr<Slot>> out;
    out.reserve(slots_.size());
    for (const auto& [key, slot] : slots_) out.push_back(slot);
    return out;
}

std::string Gateway::next_lease_id() { return fmt::format("lease-{}", ++lease_counter_); }

void Gateway::write_entry(const Slot& slot, const ImageRecord& record) {
    log_.append(LogEntry{record, slot.retry_base, record.state == ImageState::Ready ? slot.udi : std::nullopt});
}

void Gateway::transition(Slot& slot, ImageState to, const std::function<void(ImageRecord&)>& edit,
                         std::optional<UdiDescriptor> udi) {
    const ImageRecord before = *slot.record;
    if (!is_allowed_transition(before.state, to)) {
        throw std::logic_error(fmt::format("illegal transition {} -> {} for {}", to_string(before.state),
                                           to_string(to), before.ref.canonical()));
    }
    ImageRecord after = before;
    after.state = to;
    after.updated_at = std::max(clock_.now(), before.updated_at);
    if (edit) edit(after);

    auto saved_udi = slot.udi;
    slot.udi = to == ImageState::Ready ? std::move(udi) : std::nullopt;
    try {
        write_entry(slot, after);
    } catch (...) {
        slot.udi = std::move(saved_udi);
        throw;
    }
    slot.record = after;
    if (hooks_.on_record) hooks_.on_record(GatewayHooks::Change::Transition, before, after);
}

void Gateway::revoke(Slot& slot) {
    if (slot.lease_id.empty()) return;
    auto lease = std::move(slot.lease_id);
    slot.lease_id.clear();
    {
        std::lock_guard lock(queue_mu_);
        active_.erase(lease);
        queue_.erase(std::remove_if(queue_.begin(), queue_.end(),
                                    [&](const PullTask& t) { return t.lease_id == lease; }),
                     queue_.end());
    }
    queue_cv_.notify_all();
}

void Gateway::enqueue(const PullTask& task) {
    {
        std::lock_guard lock(queue_mu_);
        queue_.push_back(task);
    }
    queue_cv_.notify_all();
}

void Gateway::release(const std::string& lease_id) {
    {
        std::lock_guard lock(queue_mu_);
        active_.erase(lease_id);
    }
    queue_cv_.notify_all();
}

bool Gateway::commit_if_owner(const PullTask& task, ImageState from, ImageState to,
                              const std::function<void(ImageRecord&)>& edit, ImageRecord& out,
                              std::optional<UdiDescriptor> udi) {
    auto slot = slot_for(task.ref.key(), false);
    if (!slot) return false;
    std::lock_guard lock(slot->mu);
    if (!slot->record || slot->lease_id != task.lease_id || slot->record->state != from) return false;
    transition(*slot, to, [&](ImageRecord& r) {
        if (is_transient(to)) r.lease_expires_at = r.updated_at + config_.lease_duration;
        if (edit) edit(r);
    }, std::move(udi));
    if (!is_transient(to)) slot->lease_id.clear();
    out = *slot->record;
    return true;
}

bool Gateway::renew_if_owner(const PullTask& task) {
    auto slot = slot_for(task.ref.key(), false);
    if (!slot) return false;
    std::lock_guard lock(slot->mu);
    if (!slot->record || slot->lease_id != task.lease_id || !is_transient(slot->record->state)) return false;
    // Renewals stay in memory: after a crash every transient record fails anyway.
    slot->record->lease_expires_at = std::max(slot->record->lease_expires_at, clock_.now() + config_.lease_duration);
    return true;
}

ImageRecord Gateway::current(const ImageReference& ref) const {
    auto slot = slot_for(ref.key(), false);
    if (!slot) fail(ErrorCode::NotFound, "no record for " + ref.canonical());
    std::lock_guard lock(slot->mu);
    if (!slot->record) fail(ErrorCode::NotFound, "no record for " + ref.canonical());
    return *slot->record;
}

std::vector<ImageRecord> Gateway::recover_on_startup() {
    if (phase_.load() != Phase::Starting) throw std::logic_error("recover_on_startup called twice");
    MetadataLog::Loaded loaded;
    try {
        loaded = log_.load();
    } catch (const Error&) {
        phase_ = Phase::Refused;
        throw;
    }
    if (loaded.skipped > 0) spdlog::warn("gateway: {} damaged metadata entries skipped", loaded.skipped);

    std::vector<ImageRecord> failed;
    std::set<fs::path> keep;
    for (auto& [key, entry] : loaded.entries) {
        auto slot = slot_for(key, true);
        std::lock_guard lock(slot->mu);
        slot->record = entry.record;
        slot->retry_base = entry.retry_base;
        slot->udi = entry.udi;
        if (is_transient(entry.record.state)) {
            transition(*slot, ImageState::Failed,
                       [](ImageRecord& r) { r.last_error = "interrupted by gateway restart"; });
            failed.push_back(*slot->record);
        } else if (entry.record.state == ImageState::Ready) {
            keep.insert(fs::path(entry.record.udi_path).lexically_normal());
        }
    }

    // Anything on disk that no READY record points at belongs to work the
    // previous process never finished.
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(config_.storage_dir, ec);
         !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (!it->is_regular_file()) continue;
        const auto& p = it->path();
        bool orphan = is_temp_name(p) || (p.extension() == ".udi" && !keep.count(p.lexically_normal()));
        if (orphan) {
            std::error_code rm;
            fs::remove(p, rm);
        }
    }
    phase_ = Phase::Serving;
    return failed;
}

ImageRecord Gateway::pull(const ImageReference& ref, const Credential& cred) {
    require_serving();
    authenticate(cred, false);
    check_system(ref);

    auto slot = slot_for(ref.key(), true);
    std::lock_guard lock(slot->mu);
    const auto now = clock_.now();
    if (slot->record) {
        const auto& r = *slot->record;
        if (r.state == ImageState::Ready || is_transient(r.state)) return r;
        if (r.state == ImageState::Failed) {
            if (r.attempts - slot->retry_base >= config_.max_attempts) return r;
            auto lease = next_lease_id();
            transition(*slot, ImageState::Enqueued, [&](ImageRecord& n) {
                n.attempts += 1;
                n.lease_expires_at = n.updated_at + config_.lease_duration;
                n.content_digest.clear();
                n.udi_path.clear();
                n.size_bytes = 0;
                n.last_error.clear();
            });
            slot->lease_id = lease;
            enqueue(PullTask{ref, now, lease});
            return *slot->record;
        }
    }

    // First pull, or the previous record was expired: start a new record.
    // Tags are mutable, so the replacement may see different content.
    std::optional<ImageRecord> previous = slot->record;
    ImageRecord fresh;
    fresh.ref = ref;
    fresh.state = ImageState::Enqueued;
    fresh.created_at = now;
    fresh.updated_at = previous ? std::max(now, previous->updated_at) : now;
    fresh.lease_expires_at = fresh.updated_at + config_.lease_duration;
    fresh.attempts = previous ? previous->attempts + 1 : 1;
    int retry_base = previous ? previous->attempts : 0;

    auto saved_base = slot->retry_base;
    slot->retry_base = retry_base;
    slot->udi.reset();
    try {
        write_entry(*slot, fresh);
    } catch (...) {
        slot->retry_base = saved_base;
        throw;
    }
    slot->record = fresh;
    slot->lease_id = next_lease_id();
    if (hooks_.on_record) hooks_.on_record(GatewayHooks::Change::Created, previous, fresh);
    enqueue(PullTask{ref, now, slot->lease_id});
    return fresh;
}

ImageRecord Gateway::lookup(const ImageReference& ref) const {
    require_serving();
    return current(ref);
}

std::vector<ImageRecord> Gateway::list(const std::string& system) const {
    require_serving();
    std::vector<ImageRecord> out;
    for (const auto& slot : all_slots()) {
        std::lock_guard lock(slot->mu);
        if (slot->record && slot->record->ref.system == system) out.push_back(*slot->record);
    }
    std::sort(out.begin(), out.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.ref.canonical() < b.ref.canonical(); });
    return out;
}

ImageRecord Gateway::expire(const ImageReference& ref, const Credential& cred) {
    require_serving();
    authenticate(cred, true);
    auto slot = slot_for(ref.key(), false);
    if (!slot) fail(ErrorCode::NotFound, "no record for " + ref.canonical());
    std::lock_guard lock(slot->mu);
    if (!slot->record) fail(ErrorCode::NotFound, "no record for " + ref.canonical());

    // Every expire also resets the retry budget; that is how an operator
    // clears a sticky FAILED.
    auto base = slot->record->attempts;
    switch (slot->record->state) {
    case ImageState::Ready: {
        auto path = slot->record->udi_path;
        slot->retry_base = base;
        transition(*slot, ImageState::Expired, [](ImageRecord& r) { r.udi_path.clear(); });
        std::error_code ec;
        fs::remove(path, ec);
        break;
    }
    case ImageState::Enqueued:
    case ImageState::Pulling:
    case ImageState::Converting:
        revoke(*slot);
        slot->retry_base = base;
        transition(*slot, ImageState::Failed, [](ImageRecord& r) { r.last_error = "expired by administrator"; });
        break;
    case ImageState::Failed:
        if (slot->retry_base != base) {
            auto saved = slot->retry_base;
            slot->retry_base = base;
            try {
                write_entry(*slot, *slot->record);
            } catch (...) {
                slot->retry_base = saved;
                throw;
            }
            if (hooks_.on_record) hooks_.on_record(GatewayHooks::Change::Updated, slot->record, *slot->record);
        }
        break;
    case ImageState::Expired: break;
    }
    return *slot->record;
}

std::optional<PullTask> Gateway::claim_task() {
    if (!serving()) return std::nullopt;
    for (;;) {
        PullTask task;
        {
            std::lock_guard lock(queue_mu_);
            if (queue_.empty() || static_cast<int>(active_.size()) >= config_.worker_pool_size) return std::nullopt;
            task = std::move(queue_.front());
            queue_.pop_front();
            active_.insert(task.lease_id);
        }
        bool live = false;
        if (auto slot = slot_for(task.ref.key(), false)) {
            std::lock_guard lock(slot->mu);
            live = slot->record && slot->lease_id == task.lease_id && slot->record->state == ImageState::Enqueued;
        }
        if (live) return task;
        release(task.lease_id);
    }
}

std::unique_ptr<WorkerJob> Gateway::start_job(PullTask task) {
    return std::unique_ptr<WorkerJob>(new WorkerJob(*this, std::move(task)));
}

ImageRecord Gateway::worker_run(const PullTask& task) {
    auto job = start_job(task);
    while (job->step()) {
    }
    return job->result();
}

std::vector<ImageRecord> Gateway::sweep_stale(Timestamp now) {
    if (!serving()) return {};
    // A task still waiting in the queue is held by this live process, so its
    // lease is renewed rather than expired.
    std::set<std::string> queued;
    {
        std::lock_guard lock(queue_mu_);
        for (const auto& t : queue_) queued.insert(t.lease_id);
    }
    std::vector<ImageRecord> out;
    for (const auto& slot : all_slots()) {
        std::lock_guard lock(slot->mu);
        if (!slot->record || !is_transient(slot->record->state)) continue;
        auto& r = *slot->record;
        if (r.state == ImageState::Enqueued && queued.count(slot->lease_id)) {
            r.lease_expires_at = std::max(r.lease_expires_at, now + config_.lease_duration);
            continue;
        }
        if (r.lease_expires_at >= now) continue;
        revoke(*slot);
        transition(*slot, ImageState::Failed, [](ImageRecord& rec) { rec.last_error = "lease expired"; });
        out.push_back(*slot->record);
    }
    return out;
}

bool Gateway::wait_for_task(std::chrono::milliseconds timeout) {
    std::unique_lock lock(queue_mu_);
    return queue_cv_.wait_for(lock, timeout, [&] {
        return !queue_.empty() && static_cast<int>(active_.size()) < config_.worker_pool_size;
    });
}

void Gateway::notify_waiters() { queue_cv_.notify_all(); }

std::optional<UdiDescriptor> Gateway::descriptor(const ImageReference& ref) const {
    auto slot = slot_for(ref.key(), false);
    if (!slot) return std::nullopt;
    std::lock_guard lock(slot->mu);
    if (!slot->record || slot->record->state != ImageState::Ready) return std::nullopt;
    return slot->udi;
}

std::size_t Gateway::queued_tasks() const {
    std::lock_guard lock(queue_mu_);
    return queue_.size();
}

int Gateway::active_jobs() const {
    std::lock_guard lock(queue_mu_);
    return static_cast<int>(active_.size());
}

}  // namespace udi
