#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "udi/common/crypto.hpp"
#include "udi/common/time.hpp"

namespace udi {

enum class Scope : std::uint8_t { User = 0, Admin = 1 };

std::string_view to_string(Scope scope);

/// MAC-authenticated statement "uid with these groups, issued at t".
///
/// Canonical serialization (the MAC input), little-endian:
///   u8 format (1) | u32 uid | u32 gid count | u32 gid... | u8 scope
///   | i64 issued_at (microseconds) | u32 nonce length (16) | nonce
/// Wire form: base64(canonical ‖ 32-byte HMAC-SHA256).
struct Credential {
    std::uint32_t uid = 0;
    std::vector<std::uint32_t> gids;  // ascending, no duplicates
    Scope scope = Scope::User;
    Timestamp issued_at{};
    std::array<std::uint8_t, 16> nonce{};
    Digest mac{};

    std::string canonical_bytes() const;
    std::string to_wire() const;
    /// Throws MalformedCredential; does not check the MAC.
    static Credential from_wire(std::string_view wire);
};

struct Principal {
    std::uint32_t uid = 0;
    std::vector<std::uint32_t> gids;
    Scope scope = Scope::User;

    friend bool operator==(const Principal&, const Principal&) = default;
};

inline constexpr Duration kDefaultCredentialTtl = std::chrono::seconds(300);

Credential issue_credential(std::uint32_t uid, std::vector<std::uint32_t> gids, Scope scope,
                            std::string_view secret, Timestamp now);

/// Throws MacMismatch when any field was altered, Expired when
/// now - issued_at > ttl (or the credential is from the future).
Principal verify_credential(const Credential& cred, std::string_view secret, Timestamp now,
                            Duration ttl = kDefaultCredentialTtl);

/// Per-node authentication daemon. When flagged down every call fails with
/// AuthServiceDown, so callers cannot silently skip authentication.
class AuthDaemon {
public:
    AuthDaemon(std::string secret, Duration ttl = kDefaultCredentialTtl) : secret_(std::move(secret)), ttl_(ttl) {}
    AuthDaemon(const AuthDaemon& other) : secret_(other.secret_), ttl_(other.ttl_), up_(other.up_.load()) {}

    bool is_up() const { return up_.load(); }
    void set_up(bool up) { up_.store(up); }

    Credential issue(std::uint32_t uid, std::vector<std::uint32_t> gids, Scope scope, Timestamp now) const;
    Principal verify(const Credential& cred, Timestamp now) const;

private:
    void require_up() const;

    std::string secret_;
    Duration ttl_;
    std::atomic<bool> up_{true};
};

}  // namespace udi
