#include "udi/clustersim/cluster.hpp"

#include <algorithm>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "udi/common/rng.hpp"

namespace udi {

namespace {

// FAILED records keep "Code: message" for worker errors and plain text for
// gateway-side failures (lease expiry, restart, expire).
std::optional<ErrorCode> code_of_record_error(const std::string& last_error) {
    auto colon = last_error.find(':');
    if (colon == std::string::npos) return std::nullopt;
    return parse_error_code(std::string_view(last_error).substr(0, colon));
}

Duration transfer_time(std::uint64_t bytes, double rate) {
    if (rate <= 0) return Duration{0};
    return seconds(static_cast<double>(bytes) / rate);
}

}  // namespace

std::optional<Duration> JobResult::startup() const {
    if (!first_command_start) return std::nullopt;
    return *first_command_start - started;
}

std::string JobResult::summary() const {
    std::string out = fmt::format("job {}: {}\n", job_id, success ? "success" : "failed");
    if (!success) out += fmt::format("  reason: {}\n", reason);
    out += fmt::format("  prologue {} s, exec {} s, epilogue {} s\n", format_seconds(prologue_duration),
                       format_seconds(exec_duration), format_seconds(epilogue_duration));
    if (auto s = startup()) out += fmt::format("  startup {} s\n", format_seconds(*s));
    for (std::size_t i = 0; i < commands.size(); ++i) {
        const auto& c = commands[i];
        out += fmt::format("  [{}] {}{} {}{}\n", i, c.image ? "(" + *c.image + ") " : "", c.text,
                           c.ok ? "ok" : "FAILED", c.ok ? "" : ": " + c.error);
    }
    return out;
}

struct Cluster::Job {
    JobSpec spec;
    JobResult result;
    std::vector<int> nodes;
    bool started = false;
    bool ending = false;
    bool aborted = false;
    bool epilogue_done = false;
    int outstanding = 0;
    int command_failures = 0;
    Timestamp exec_start{};
};

Cluster::Cluster(ClusterConfig config, Registry& registry, VerificationCache& verifier)
    : config_(std::move(config)),
      events_(clock_),
      registry_(registry),
      verifier_(verifier),
      identity_([&] {
          auto ic = config_.identity;
          ic.seed = config_.seed;
          return ic;
      }(),
                config_.directory) {
    if (config_.total_nodes < 1) fail(ErrorCode::InvalidConfig, "cluster needs at least one node");
    config_.node.seed = config_.seed;
    AuthDaemon auth(config_.secret, config_.gateway.credential_ttl);
    nodes_.reserve(static_cast<std::size_t>(config_.total_nodes));
    for (int i = 0; i < config_.total_nodes; ++i) {
        nodes_.push_back(std::make_unique<NodeAgent>(static_cast<std::uint32_t>(i), node_entity(i), config_.node, auth,
                                                     identity_, verifier_));
        free_.insert(i);
    }
    build_gateway();
    events_.schedule_in(config_.gateway.heartbeat_interval, [this] { heartbeat_tick(); }, true);
    events_.schedule_in(config_.gateway.sweep_interval, [this] { sweep_tick(); }, true);
}

Cluster::~Cluster() {
    workers_.clear();
    gateway_.reset();
}

std::string Cluster::node_entity(int index) const { return fmt::format("nid{:05d}", index); }

std::string Cluster::short_digest(const std::string& digest) { return digest.substr(0, 12); }

// --- gateway ------------------------------------------------------------------

void Cluster::build_gateway() {
    auto gc = config_.gateway;
    gc.system = config_.system;
    gc.storage_dir = config_.storage_dir;
    gc.secret = config_.secret;
    GatewayHooks hooks;
    hooks.on_record = [this](GatewayHooks::Change, const std::optional<ImageRecord>& before, const ImageRecord& after) {
        if (before && before->state == after.state) return;
        std::string details = fmt::format("{} {}->{}", after.ref.canonical(),
                                          before ? std::string(to_string(before->state)) : "-", to_string(after.state));
        if (after.state == ImageState::Failed) {
            auto code = code_of_record_error(after.last_error);
            details += " " + (code ? std::string(to_string(*code)) : std::string("-"));
        }
        if (after.state == ImageState::Ready) {
            ever_ready_.insert(after.udi_path);
            ++ready_transitions_;
        }
        trace_.add(clock_.now(), "gateway", "state", details);
        history_.push_back(StateChange{clock_.now(), after.ref.canonical(),
                                       before ? std::optional<ImageState>(before->state) : std::nullopt, after.state,
                                       after.state == ImageState::Failed ? after.last_error : ""});
    };
    hooks.after_udi_write = [this](const std::filesystem::path& path) {
        if (write_fault_) write_fault_(path);
    };
    gateway_ = std::make_unique<Gateway>(gc, clock_, registry_, std::move(hooks));
    auto recovered = gateway_->recover_on_startup();
    trace_.add(clock_.now(), "gateway", "recovered", fmt::format("records={}", recovered.size()));
    // recovery reports only what it failed; READY records come from the listing
    for (const auto& r : gateway_->list(config_.system)) {
        if (r.state == ImageState::Ready) ever_ready_.insert(r.udi_path);
    }
}

Gateway& Cluster::gateway() {
    if (!gateway_) fail(ErrorCode::StorageIoError, "gateway is down");
    return *gateway_;
}

void Cluster::crash_gateway() {
    if (!gateway_) return;
    ++generation_;
    workers_.clear();
    gateway_.reset();
    trace_.add(clock_.now(), "gateway", "crash");
}

void Cluster::restart_gateway() {
    if (gateway_) return;
    build_gateway();
    pump();
}

int Cluster::active_workers_for(const ImageReference& ref) const {
    auto canonical = ref.canonical();
    return static_cast<int>(std::count_if(workers_.begin(), workers_.end(), [&](const auto& w) {
        return w.second->task().ref.canonical() == canonical && !w.second->done();
    }));
}

void Cluster::abandon_worker_after_pulling(const ImageReference& ref) { abandon_.insert(ref.canonical()); }

void Cluster::pump() {
    if (!gateway_) return;
    while (auto task = gateway_->claim_task()) {
        auto id = next_worker_++;
        workers_[id] = gateway_->start_job(*task);
        trace_.add(clock_.now(), "gateway", "claim", task->ref.canonical());
        max_active_jobs_ = std::max(max_active_jobs_, gateway_->active_jobs());
        events_.schedule(clock_.now(), [this, id, gen = generation_] { step_worker(id, gen); });
    }
}

void Cluster::step_worker(std::uint64_t worker, std::uint64_t generation) {
    if (generation != generation_) return;
    auto it = workers_.find(worker);
    if (it == workers_.end()) return;
    auto& job = *it->second;
    auto canonical = job.task().ref.canonical();
    if (job.next_stage() == WorkerJob::Stage::Fetch && abandon_.erase(canonical) > 0) {
        // The worker dies mid-download: no more steps, no more heartbeats.
        trace_.add(clock_.now(), "gateway", "worker_lost", canonical);
        workers_.erase(it);
        pump();
        return;
    }
    job.step();
    if (job.done()) {
        workers_.erase(it);
        pump();
        return;
    }
    Duration delay{0};
    if (job.next_stage() == WorkerJob::Stage::Fetch) {
        delay = config_.manifest_latency + transfer_time(job.expected_bytes(), config_.registry_bandwidth);
    } else if (job.next_stage() == WorkerJob::Stage::Convert) {
        delay = transfer_time(job.expected_bytes(), config_.convert_rate);
    }
    events_.schedule(clock_.now() + delay, [this, worker, generation] { step_worker(worker, generation); });
}

void Cluster::heartbeat_tick() {
    if (gateway_) {
        for (auto& [id, w] : workers_) w->heartbeat();
    }
    events_.schedule_in(config_.gateway.heartbeat_interval, [this] { heartbeat_tick(); }, true);
}

void Cluster::sweep_tick() {
    if (gateway_) {
        gateway_->sweep_stale(clock_.now());
        pump();
    }
    events_.schedule_in(config_.gateway.sweep_interval, [this] { sweep_tick(); }, true);
}

Credential Cluster::user_credential(std::uint32_t uid) const {
    auto it = config_.directory.find(uid);
    std::vector<std::uint32_t> gids = it == config_.directory.end() ? std::vector<std::uint32_t>{} : it->second;
    std::sort(gids.begin(), gids.end());
    gids.erase(std::unique(gids.begin(), gids.end()), gids.end());
    return issue_credential(uid, std::move(gids), Scope::User, config_.secret, clock_.now());
}

Credential Cluster::admin_credential() const {
    return issue_credential(0, {0}, Scope::Admin, config_.secret, clock_.now());
}

ImageRecord Cluster::client_pull(const ImageReference& ref) {
    auto record = gateway().pull(ref, user_credential(1000));
    trace_.add(clock_.now(), "client", "pull", fmt::format("{} {}", ref.canonical(), to_string(record.state)));
    pump();
    return record;
}

ImageRecord Cluster::admin_expire(const ImageReference& ref) {
    auto record = gateway().expire(ref, admin_credential());
    trace_.add(clock_.now(), "client", "expire", ref.canonical());
    pump();
    return record;
}

std::optional<UdiDescriptor> Cluster::descriptor(const ImageReference& ref) const {
    if (!gateway_) return std::nullopt;
    return gateway_->descriptor(ref);
}

ImageRecord Cluster::lookup(const ImageReference& ref) const {
    if (!gateway_) fail(ErrorCode::StorageIoError, "gateway is down");
    return gateway_->lookup(ref);
}

ImageRecord Cluster::ensure_ready_now(const ImageReference& ref) {
    auto record = client_pull(ref);
    auto deadline = clock_.now() + config_.ready_timeout;
    while (is_transient(record.state) && clock_.now() < deadline) {
        events_.run_until(clock_.now() + config_.gateway_poll);
        record = lookup(ref);
    }
    return record;
}

// --- nodes --------------------------------------------------------------------

void Cluster::set_auth_down(const std::vector<int>& node_indices) {
    for (auto& n : nodes_) n->set_auth_up(true);
    for (int i : node_indices) {
        node(i).set_auth_up(false);
        trace_.add(clock_.now(), node_entity(i), "auth_down");
    }
}

bool Cluster::inject_mount(int node_index, const UdiDescriptor& forged, const std::string& job_id) {
    auto& agent = node(node_index);
    try {
        auto m = agent.mount_udi(forged, user_credential(1000), job_id, clock_.now());
        ++injected_successes_;
        trace_.add(m.done_at, node_entity(node_index), "injected_mount", "accepted");
        agent.unmount_udi(m.value);
        return true;
    } catch (const NodeOpError& e) {
        trace_.add(e.failed_at(), node_entity(node_index), "injected_mount",
                   fmt::format("refused {}", to_string(e.code())));
        return false;
    }
}

void Cluster::note_mount(const MountHandle& handle, int node_index) {
    if (!ever_ready_.count(handle.udi.path.string())) {
        ++bypass_violations_;
        spdlog::error("{}: mounted {} which was never READY", node_entity(node_index), handle.udi.path.string());
    }
}

int Cluster::residual_mounts() const {
    int total = 0;
    for (const auto& n : nodes_) total += static_cast<int>(n->mounts().size());
    return total;
}

// --- jobs ---------------------------------------------------------------------

Cluster::Job& Cluster::job(const std::string& id) {
    auto it = jobs_.find(id);
    if (it == jobs_.end()) fail(ErrorCode::NotFound, "no job '" + id + "'");
    return *it->second;
}

const JobResult& Cluster::result(const std::string& job_id) const {
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) fail(ErrorCode::NotFound, "no job '" + job_id + "'");
    return it->second->result;
}

bool Cluster::finished(const std::string& job_id) const {
    auto it = jobs_.find(job_id);
    return it != jobs_.end() && it->second->epilogue_done;
}

std::string Cluster::submit(JobSpec spec) {
    spec.validate();
    if (spec.nodes > config_.total_nodes) {
        fail(ErrorCode::InvalidSpec, fmt::format("job wants {} nodes, cluster has {}", spec.nodes, config_.total_nodes));
    }
    if (spec.job_id.empty()) spec.job_id = fmt::format("job-{}", ++next_job_);
    if (jobs_.count(spec.job_id)) fail(ErrorCode::InvalidSpec, "duplicate job id '" + spec.job_id + "'");
    auto id = spec.job_id;
    auto j = std::make_unique<Job>();
    j->spec = std::move(spec);
    j->result.job_id = id;
    j->result.submitted = clock_.now();
    trace_.add(clock_.now(), "job:" + id, "submit",
               fmt::format("nodes={} ranks={} mode={}{}", j->spec.nodes, j->spec.ranks_per_node, to_string(j->spec.mode),
                           j->spec.image ? " udi=" + j->spec.image->canonical() : ""));
    jobs_.emplace(id, std::move(j));
    pending_.push_back(id);
    try_start_jobs();
    return id;
}

void Cluster::try_start_jobs() {
    while (!pending_.empty()) {
        auto& j = job(pending_.front());
        if (j.spec.nodes > static_cast<int>(free_.size())) return;  // strict FIFO, no backfill
        pending_.erase(pending_.begin());
        start_job(j);
    }
}

void Cluster::start_job(Job& j) {
    auto it = free_.begin();
    for (int i = 0; i < j.spec.nodes; ++i) j.nodes.push_back(*it), it = free_.erase(it);
    j.started = true;
    j.result.started = clock_.now();
    trace_.add(clock_.now(), "job:" + j.spec.job_id, "start",
               fmt::format("nodes={}..{}", node_entity(j.nodes.front()), node_entity(j.nodes.back())));
    if (j.spec.mode == ImageMode::Directive) {
        prologue(j);
    } else {
        j.exec_start = clock_.now();
        run_command(j, 0);
    }
    finish_if_quiet(j);
}

void Cluster::job_event(Job& j, Timestamp at, std::function<void()> fn, bool always) {
    ++j.outstanding;
    events_.schedule(at, [this, &j, fn = std::move(fn), always] {
        --j.outstanding;
        if (!j.aborted || always) fn();
        finish_if_quiet(j);
    });
}

void Cluster::fail_job(Job& j, const std::string& reason, std::optional<ErrorCode> code) {
    if (j.result.reason.empty()) {
        j.result.reason = reason;
        j.result.error = code;
    }
    j.ending = true;
}

void Cluster::finish_if_quiet(Job& j) {
    if (j.ending && j.outstanding == 0 && !j.epilogue_done) epilogue(j.spec.job_id);
}

void Cluster::kill(const std::string& job_id, Timestamp at) {
    events_.schedule(at, [this, job_id] {
        auto& j = job(job_id);
        if (j.epilogue_done) return;
        trace_.add(clock_.now(), "job:" + job_id, "killed");
        if (!j.started) {
            pending_.erase(std::remove(pending_.begin(), pending_.end(), job_id), pending_.end());
            j.result.reason = "killed before start";
            j.epilogue_done = true;
            j.result.finished = clock_.now();
            return;
        }
        j.aborted = true;
        fail_job(j, "killed", std::nullopt);
        finish_if_quiet(j);
    });
}

void Cluster::ensure_ready(Job& j, const ImageReference& ref, std::function<void(const ReadyResult&)> done) {
    auto deadline = clock_.now() + config_.ready_timeout;
    if (!gateway_) {
        poll_ready(j, ref, deadline, std::move(done));
        return;
    }
    ImageRecord record;
    try {
        record = gateway_->pull(ref, user_credential(j.spec.uid));
    } catch (const Error& e) {
        done(ReadyFailure{e.what(), e.code()});
        return;
    }
    trace_.add(clock_.now(), "job:" + j.spec.job_id, "pull", fmt::format("{} {}", ref.canonical(), to_string(record.state)));
    pump();
    if (record.state == ImageState::Ready) {
        done(*gateway_->descriptor(ref));
    } else if (record.state == ImageState::Failed) {
        done(ReadyFailure{record.last_error, code_of_record_error(record.last_error)});
    } else {
        poll_ready(j, ref, deadline, std::move(done));
    }
}

void Cluster::poll_ready(Job& j, const ImageReference& ref, Timestamp deadline,
                         std::function<void(const ReadyResult&)> done) {
    job_event(j, clock_.now() + config_.gateway_poll, [this, &j, ref, deadline, done = std::move(done)] {
        if (clock_.now() >= deadline) {
            done(ReadyFailure{fmt::format("{} not ready after {} s", ref.canonical(), format_seconds(config_.ready_timeout)),
                              std::nullopt});
            return;
        }
        if (!gateway_) {
            poll_ready(j, ref, deadline, done);
            return;
        }
        std::optional<ImageRecord> record;
        try {
            record = gateway_->lookup(ref);
        } catch (const Error&) {
            // Unknown after a restart: ask again.
            ensure_ready(j, ref, done);
            return;
        }
        switch (record->state) {
        case ImageState::Ready: done(*gateway_->descriptor(ref)); return;
        case ImageState::Failed: done(ReadyFailure{record->last_error, code_of_record_error(record->last_error)});
            return;
        case ImageState::Expired: ensure_ready(j, ref, done); return;
        default: poll_ready(j, ref, deadline, done); return;
        }
    });
}

void Cluster::prologue(Job& j) {
    trace_.add(clock_.now(), "job:" + j.spec.job_id, "prologue_start");
    ensure_ready(j, *j.spec.image, [this, &j](const ReadyResult& r) {
        if (const auto* e = std::get_if<ReadyFailure>(&r)) {
            trace_.add(clock_.now(), "job:" + j.spec.job_id, "prologue_failed",
                       e->code ? std::string(to_string(*e->code)) : "-");
            j.result.prologue_duration = clock_.now() - j.result.started;
            fail_job(j, "prologue: " + e->message, e->code);
            return;
        }
        mount_fanout(j, std::get<UdiDescriptor>(r), [this, &j] {
            j.result.prologue_duration = clock_.now() - j.result.started;
            trace_.add(clock_.now(), "job:" + j.spec.job_id, "prologue_done");
            j.exec_start = clock_.now();
            run_command(j, 0);
        });
    });
}

void Cluster::mount_fanout(Job& j, const UdiDescriptor& udi, std::function<void()> all_done) {
    struct State {
        int pending;
        bool failed = false;
    };
    auto state = std::make_shared<State>(State{static_cast<int>(j.nodes.size()), false});
    auto cred = user_credential(j.spec.uid);
    auto node_done = [this, &j, state, all_done] {
        if (--state->pending > 0) return;
        if (state->failed) {
            j.result.prologue_duration = clock_.now() - j.result.started;
            trace_.add(clock_.now(), "job:" + j.spec.job_id, "prologue_failed", "mount");
        } else if (!j.aborted) {
            all_done();
        }
    };
    for (int n : j.nodes) {
        try {
            auto m = node(n).mount_udi(udi, cred, j.spec.job_id, clock_.now());
            job_event(
                j, m.done_at,
                [this, &j, n, handle = m.value, node_done] {
                    note_mount(handle, n);
                    trace_.add(clock_.now(), node_entity(n), "mount",
                               fmt::format("job={} udi={}", j.spec.job_id, short_digest(handle.udi.content_digest)));
                    j.result.per_node_events.push_back(
                        fmt::format("{} {} mount {}", format_seconds(clock_.now()), node_entity(n),
                                    handle.udi.source_ref.canonical()));
                    node_done();
                },
                true);
        } catch (const NodeOpError& e) {
            job_event(
                j, e.failed_at(),
                [this, &j, n, state, node_done, code = e.code(), what = std::string(e.what())] {
                    trace_.add(clock_.now(), node_entity(n), "mount_failed",
                               fmt::format("job={} {}", j.spec.job_id, to_string(code)));
                    j.result.per_node_events.push_back(
                        fmt::format("{} {} mount_failed {}", format_seconds(clock_.now()), node_entity(n), what));
                    if (!state->failed) {
                        state->failed = true;
                        fail_job(j, what, code);
                    }
                    node_done();
                },
                true);
        }
    }
}

void Cluster::run_command(Job& j, std::size_t index) {
    if (j.aborted) return;
    const auto& script = j.spec.script;
    if (index >= script.size()) {
        j.result.exec_duration = clock_.now() - j.exec_start;
        trace_.add(clock_.now(), "job:" + j.spec.job_id, "exec_done");
        if (j.command_failures > 0) {
            const auto& first = *std::find_if(j.result.commands.begin(), j.result.commands.end(),
                                              [](const CommandResult& c) { return !c.ok; });
            fail_job(j, fmt::format("{} of {} commands failed; first: {}", j.command_failures, script.size(), first.error),
                     j.result.error);
        }
        j.ending = true;
        return;
    }
    const auto& cmd = script[index];
    CommandResult cr;
    cr.text = cmd.text;
    if (cmd.image) cr.image = cmd.image->canonical();
    else if (j.spec.image) cr.image = j.spec.image->canonical();
    j.result.commands.push_back(cr);

    auto start = [this, &j, index] {
        if (j.aborted) return;
        auto& c = j.result.commands[index];
        c.start = clock_.now();
        if (!j.result.first_command_start) j.result.first_command_start = clock_.now();
        trace_.add(clock_.now(), "job:" + j.spec.job_id, "exec_start", fmt::format("cmd={}", index));
        job_event(j, clock_.now() + config_.command_duration, [this, &j, index] { command_finished(j, index, true, ""); });
    };

    if (j.spec.mode == ImageMode::Directive || !cmd.image) {
        start();
        return;
    }

    // Per-command image: make it READY, mount where missing, then set up ranks.
    ensure_ready(j, *cmd.image, [this, &j, index, start](const ReadyResult& r) {
        if (const auto* e = std::get_if<ReadyFailure>(&r)) {
            if (!j.result.error) j.result.error = e->code;
            command_finished(j, index, false, e->message);
            return;
        }
        const auto& udi = std::get<UdiDescriptor>(r);
        struct State {
            int pending;
            bool failed = false;
            std::string error;
            std::optional<ErrorCode> code;
        };
        auto state = std::make_shared<State>(State{static_cast<int>(j.nodes.size()), false, {}, {}});
        auto cred = user_credential(j.spec.uid);
        auto node_done = [this, &j, index, state, start] {
            if (--state->pending > 0 || j.aborted) return;
            if (state->failed) {
                if (!j.result.error) j.result.error = state->code;
                command_finished(j, index, false, state->error);
            } else {
                start();
            }
        };
        auto note_failure = [state](const std::string& what, ErrorCode code) {
            if (state->failed) return;
            state->failed = true;
            state->error = what;
            state->code = code;
        };
        // Ranks launch one after another on a node; each authenticates itself.
        auto setup_ranks = [this, &j, index, cred, node_done, note_failure](int n) {
            auto t = clock_.now();
            std::optional<NodeOpError> err;
            for (int r = 0; r < j.spec.ranks_per_node && !err; ++r) {
                try {
                    node(n).authenticate(cred, t);
                } catch (const NodeOpError& e) {
                    err = e;
                    break;
                }
                double jitter = keyed_exponential(config_.seed,
                                                  {static_cast<std::uint64_t>(Stream::RankSetup),
                                                   static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r), index},
                                                  to_seconds(config_.rank_setup_jitter_mean));
                t += config_.rank_setup_base + seconds(jitter);
            }
            job_event(
                j, t,
                [this, &j, n, err, node_done, note_failure] {
                    if (err) {
                        trace_.add(clock_.now(), node_entity(n), "setup_failed",
                                   fmt::format("job={} {}", j.spec.job_id, to_string(err->code())));
                        note_failure(err->what(), err->code());
                    } else {
                        trace_.add(clock_.now(), node_entity(n), "setup_done",
                                   fmt::format("job={} ranks={}", j.spec.job_id, j.spec.ranks_per_node));
                    }
                    node_done();
                },
                true);
        };
        for (int n : j.nodes) {
            if (node(n).find_mount(j.spec.job_id, udi.content_digest)) {
                setup_ranks(n);
                continue;
            }
            try {
                auto m = node(n).mount_udi(udi, cred, j.spec.job_id, clock_.now());
                job_event(
                    j, m.done_at,
                    [this, &j, n, handle = m.value, setup_ranks] {
                        note_mount(handle, n);
                        trace_.add(clock_.now(), node_entity(n), "mount",
                                   fmt::format("job={} udi={}", j.spec.job_id, short_digest(handle.udi.content_digest)));
                        j.result.per_node_events.push_back(fmt::format("{} {} mount {}", format_seconds(clock_.now()),
                                                                       node_entity(n),
                                                                       handle.udi.source_ref.canonical()));
                        setup_ranks(n);
                    },
                    true);
            } catch (const NodeOpError& e) {
                job_event(
                    j, e.failed_at(),
                    [this, &j, n, node_done, note_failure, code = e.code(), what = std::string(e.what())] {
                        trace_.add(clock_.now(), node_entity(n), "mount_failed",
                                   fmt::format("job={} {}", j.spec.job_id, to_string(code)));
                        j.result.per_node_events.push_back(
                            fmt::format("{} {} mount_failed {}", format_seconds(clock_.now()), node_entity(n), what));
                        note_failure(what, code);
                        node_done();
                    },
                    true);
            }
        }
    });
}

void Cluster::command_finished(Job& j, std::size_t index, bool ok, const std::string& error) {
    auto& c = j.result.commands[index];
    if (!ok && c.start == Timestamp{}) c.start = clock_.now();
    c.end = clock_.now();
    c.ok = ok;
    c.error = error;
    if (!ok) ++j.command_failures;
    trace_.add(clock_.now(), "job:" + j.spec.job_id, ok ? "exec_end" : "exec_failed", fmt::format("cmd={}", index));
    run_command(j, index + 1);
}

void Cluster::epilogue(const std::string& job_id) {
    auto& j = job(job_id);
    if (!j.started || j.epilogue_done) return;
    j.epilogue_done = true;
    auto entity = "job:" + job_id;
    trace_.add(clock_.now(), entity, "epilogue_start");
    for (int n : j.nodes) {
        for (const auto& h : node(n).mounts_for(job_id)) {
            node(n).unmount_udi(h);
            trace_.add(clock_.now(), node_entity(n), "unmount",
                       fmt::format("job={} udi={}", job_id, short_digest(h.udi.content_digest)));
            j.result.per_node_events.push_back(fmt::format("{} {} unmount {}", format_seconds(clock_.now()),
                                                           node_entity(n), h.udi.source_ref.canonical()));
        }
    }
    for (const auto& hook : config_.cleanup_hooks) trace_.add(clock_.now(), entity, "cleanup", hook);
    j.result.epilogue_duration = config_.epilogue_latency;
    j.result.finished = clock_.now() + config_.epilogue_latency;
    j.result.success = j.result.reason.empty();
    if (j.result.exec_duration == Duration{0} && j.exec_start != Timestamp{} && j.ending && j.aborted) {
        j.result.exec_duration = clock_.now() - j.exec_start;
    }
    trace_.add(clock_.now(), entity, "end", j.result.success ? "success" : "failed");
    events_.schedule(clock_.now() + config_.epilogue_latency, [this, &j] {
        for (int n : j.nodes) free_.insert(n);
        try_start_jobs();
    });
}

}  // namespace udi
