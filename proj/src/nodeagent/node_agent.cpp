#include "udi/nodeagent/node_agent.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "udi/common/rng.hpp"

namespace udi {

std::string_view to_string(NodeHealth health) { return health == NodeHealth::Ok ? "ok" : "degraded"; }

NodeAgent::NodeAgent(std::uint32_t node_index, std::string node_id, NodeAgentConfig config, AuthDaemon auth,
                     IdentityBackend& identity, VerificationCache& verifier)
    : index_(node_index),
      id_(std::move(node_id)),
      config_(config),
      auth_(std::move(auth)),
      identity_(identity),
      verifier_(verifier) {}

Principal NodeAgent::authenticate(const Credential& cred, Timestamp now) const {
    try {
        return auth_.verify(cred, now);
    } catch (const Error& e) {
        throw NodeOpError(e.code(), fmt::format("{}: {}", id_, e.detail()), now);
    }
}

Timed<std::vector<std::uint32_t>> NodeAgent::resolve_groups(std::uint32_t uid, Timestamp now) {
    std::unique_lock lock(mu_);
    if (config_.cache_enabled) {
        auto it = cache_.find(uid);
        if (it != cache_.end() && now - it->second.stored_at < config_.cache_ttl) {
            if (it->second.gids) return {*it->second.gids, now};
            throw NodeOpError(ErrorCode::IdentityNotFound, fmt::format("{}: uid {} unknown (cached)", id_, uid), now);
        }
    }
    auto ordinal = identity_ordinal_++;
    ++backend_requests_;
    auto out = identity_.request(uid, now, index_, ordinal);
    if (out.ok()) {
        if (config_.cache_enabled) cache_[uid] = CacheEntry{out.gids, out.done};
        return {*out.gids, out.done};
    }
    if (out.error == ErrorCode::IdentityNotFound && config_.cache_enabled && config_.negative_cache) {
        cache_[uid] = CacheEntry{std::nullopt, out.done};
    }
    auto what = out.error == ErrorCode::IdentityTimeout ? fmt::format("{}: group lookup for uid {} timed out", id_, uid)
                                                         : fmt::format("{}: uid {} unknown", id_, uid);
    throw NodeOpError(out.error, what, out.done);
}

Timed<MountHandle> NodeAgent::mount_udi(const UdiDescriptor& udi, const Credential& cred, const std::string& job_id,
                                        Timestamp now) {
    auto who = authenticate(cred, now);
    {
        std::lock_guard lock(mu_);
        if (mounts_.count({job_id, udi.content_digest})) {
            throw NodeOpError(ErrorCode::AlreadyMounted,
                              fmt::format("{}: {} already mounted for job {}", id_, udi.path.string(), job_id), now);
        }
    }
    auto groups = resolve_groups(who.uid, now);

    std::uint64_t ordinal;
    {
        std::lock_guard lock(mu_);
        ordinal = mount_ordinal_++;
    }
    double jitter_s = keyed_exponential(config_.seed, {static_cast<std::uint64_t>(Stream::MountJitter), index_, ordinal},
                                        to_seconds(config_.mount_jitter_mean));
    auto done = groups.done_at + config_.mount_base + seconds(jitter_s);

    // Full verification happens once per file version (see VerificationCache);
    // the probe ties the bytes to the descriptor the gateway published.
    auto full = verifier_.verify(udi.path);
    if (!full) {
        throw NodeOpError(ErrorCode::UdiCorrupt,
                          fmt::format("{}: {} ({}): {}", id_, udi.path.string(), to_string(full.reason), full.detail),
                          done);
    }
    auto probe = probe_udi(udi.path, udi);
    if (!probe) {
        throw NodeOpError(ErrorCode::UdiCorrupt,
                          fmt::format("{}: {} ({}): {}", id_, udi.path.string(), to_string(probe.reason), probe.detail),
                          done);
    }

    std::lock_guard lock(mu_);
    MountHandle handle{job_id, udi, done};
    auto [it, inserted] = mounts_.emplace(std::make_pair(job_id, udi.content_digest), handle);
    if (!inserted) {
        throw NodeOpError(ErrorCode::AlreadyMounted,
                          fmt::format("{}: {} already mounted for job {}", id_, udi.path.string(), job_id), done);
    }
    return {handle, done};
}

bool NodeAgent::unmount_udi(const MountHandle& handle) {
    std::lock_guard lock(mu_);
    if (mounts_.erase({handle.job_id, handle.udi.content_digest}) == 0) {
        spdlog::warn("{}: unmount of {} for job {}: not mounted", id_, handle.udi.path.string(), handle.job_id);
        return false;
    }
    return true;
}

void NodeAgent::set_cache_enabled(bool enabled) {
    std::lock_guard lock(mu_);
    config_.cache_enabled = enabled;
    if (!enabled) cache_.clear();
}

void NodeAgent::flush_cache() {
    std::lock_guard lock(mu_);
    cache_.clear();
}

void NodeAgent::seed_cache(std::uint32_t uid, std::vector<std::uint32_t> gids, Timestamp at) {
    std::lock_guard lock(mu_);
    if (config_.cache_enabled) cache_[uid] = CacheEntry{std::move(gids), at};
}

void NodeAgent::restart() {
    std::lock_guard lock(mu_);
    mounts_.clear();
    cache_.clear();
}

std::vector<MountHandle> NodeAgent::mounts() const {
    std::lock_guard lock(mu_);
    std::vector<MountHandle> out;
    for (const auto& [key, h] : mounts_) out.push_back(h);
    return out;
}

std::vector<MountHandle> NodeAgent::mounts_for(const std::string& job_id) const {
    std::lock_guard lock(mu_);
    std::vector<MountHandle> out;
    for (const auto& [key, h] : mounts_) {
        if (key.first == job_id) out.push_back(h);
    }
    return out;
}

std::optional<MountHandle> NodeAgent::find_mount(const std::string& job_id, const std::string& udi_digest) const {
    std::lock_guard lock(mu_);
    auto it = mounts_.find({job_id, udi_digest});
    if (it == mounts_.end()) return std::nullopt;
    return it->second;
}

bool NodeAgent::cache_fresh(std::uint32_t uid, Timestamp now) const {
    std::lock_guard lock(mu_);
    auto it = cache_.find(uid);
    return config_.cache_enabled && it != cache_.end() && now - it->second.stored_at < config_.cache_ttl;
}

}  // namespace udi
