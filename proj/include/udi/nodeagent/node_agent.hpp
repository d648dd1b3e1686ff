#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "udi/auth/credential.hpp"
#include "udi/common/error.hpp"
#include "udi/common/time.hpp"
#include "udi/imagekit/udi_format.hpp"
#include "udi/nodeagent/identity.hpp"
#include "udi/nodeagent/verification_cache.hpp"

namespace udi {

struct NodeAgentConfig {
    bool cache_enabled = true;
    bool negative_cache = true;
    Duration cache_ttl = std::chrono::seconds(600);
    Duration mount_base = std::chrono::milliseconds(50);
    Duration mount_jitter_mean = std::chrono::milliseconds(10);  // exponential
    std::uint64_t seed = 1;
};

struct MountHandle {
    std::string job_id;
    UdiDescriptor udi;
    Timestamp mounted_at{};

    friend bool operator==(const MountHandle&, const MountHandle&) = default;
};

enum class NodeHealth { Ok, Degraded };
std::string_view to_string(NodeHealth health);

/// A node operation's failure, with the virtual time at which it surfaced.
class NodeOpError : public Error {
public:
    NodeOpError(ErrorCode code, const std::string& message, Timestamp at) : Error(code, message), at_(at) {}
    Timestamp failed_at() const { return at_; }

private:
    Timestamp at_;
};

template <typename T>
struct Timed {
    T value;
    Timestamp done_at{};
};

/// Per-node agent. Operations take the virtual time at which they start and
/// report when they finish; failures throw NodeOpError. The agent serializes
/// its own mount table and cache; contention between nodes happens only in the
/// shared IdentityBackend.
class NodeAgent {
public:
    NodeAgent(std::uint32_t node_index, std::string node_id, NodeAgentConfig config, AuthDaemon auth,
              IdentityBackend& identity, VerificationCache& verifier);

    /// Auth, group resolution, then a verified mount.
    Timed<MountHandle> mount_udi(const UdiDescriptor& udi, const Credential& cred, const std::string& job_id,
                                 Timestamp now);
    /// False (with a warning) if the handle is not registered.
    bool unmount_udi(const MountHandle& handle);
    Timed<std::vector<std::uint32_t>> resolve_groups(std::uint32_t uid, Timestamp now);
    /// Credential check alone (per-rank setup). Throws NodeOpError.
    Principal authenticate(const Credential& cred, Timestamp now) const;

    void set_auth_up(bool up) { auth_.set_up(up); }
    bool auth_up() const { return auth_.is_up(); }
    void set_cache_enabled(bool enabled);
    void flush_cache();
    /// Stores a positive group entry as if resolved at `at` (benchmark warm-up).
    void seed_cache(std::uint32_t uid, std::vector<std::uint32_t> gids, Timestamp at);
    /// Node reboot: mounts and cache are gone.
    void restart();

    NodeHealth health() const { return auth_.is_up() ? NodeHealth::Ok : NodeHealth::Degraded; }
    std::vector<MountHandle> mounts() const;
    std::vector<MountHandle> mounts_for(const std::string& job_id) const;
    std::optional<MountHandle> find_mount(const std::string& job_id, const std::string& udi_digest) const;
    bool cache_fresh(std::uint32_t uid, Timestamp now) const;
    int backend_requests() const { return backend_requests_; }

    std::uint32_t index() const { return index_; }
    const std::string& id() const { return id_; }
    const NodeAgentConfig& config() const { return config_; }

private:
    struct CacheEntry {
        std::optional<std::vector<std::uint32_t>> gids;  // empty: negative entry
        Timestamp stored_at{};
    };

    std::uint32_t index_;
    std::string id_;
    NodeAgentConfig config_;
    AuthDaemon auth_;
    IdentityBackend& identity_;
    VerificationCache& verifier_;

    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, MountHandle> mounts_;  // (job, udi digest)
    std::map<std::uint32_t, CacheEntry> cache_;
    std::uint64_t identity_ordinal_ = 0;
    std::uint64_t mount_ordinal_ = 0;
    int backend_requests_ = 0;
};

}  // namespace udi
