#include "udi/auth/credential.hpp"

#include <algorithm>

#include <fmt/core.h>
#include <openssl/rand.h>

#include "udi/common/bytes.hpp"
#include "udi/common/error.hpp"

namespace udi {

namespace {

constexpr std::uint8_t kFormat = 1;

std::string mac_input(const Credential& c) { return c.canonical_bytes(); }

}  // namespace

std::string_view to_string(Scope scope) { return scope == Scope::Admin ? "admin" : "user"; }

std::string Credential::canonical_bytes() const {
    ByteWriter w;
    w.u8(kFormat);
    w.u32(uid);
    w.u32(static_cast<std::uint32_t>(gids.size()));
    for (auto g : gids) w.u32(g);
    w.u8(static_cast<std::uint8_t>(scope));
    w.i64(to_micros(issued_at));
    w.u32(static_cast<std::uint32_t>(nonce.size()));
    w.raw(std::string_view(reinterpret_cast<const char*>(nonce.data()), nonce.size()));
    return w.take();
}

std::string Credential::to_wire() const {
    auto bytes = canonical_bytes();
    bytes.append(reinterpret_cast<const char*>(mac.data()), mac.size());
    return base64_encode(bytes);
}

Credential Credential::from_wire(std::string_view wire) {
    auto bytes = base64_decode(wire);
    if (!bytes) fail(ErrorCode::MalformedCredential, "credential is not valid base64");
    ByteReader r(*bytes);
    auto bad = [](const char* why) -> Credential { fail(ErrorCode::MalformedCredential, why); };
    auto format = r.u8();
    if (!format || *format != kFormat) return bad("unknown credential format");
    Credential c;
    auto uid = r.u32();
    auto count = r.u32();
    if (!uid || !count) return bad("truncated credential");
    if (*count > r.remaining() / 4) return bad("gid count exceeds credential size");
    c.uid = *uid;
    for (std::uint32_t i = 0; i < *count; ++i) c.gids.push_back(*r.u32());
    auto scope = r.u8();
    auto issued = r.i64();
    auto nonce_len = r.u32();
    if (!scope || !issued || !nonce_len) return bad("truncated credential");
    if (*scope > 1) return bad("unknown scope");
    if (*nonce_len != c.nonce.size()) return bad("unexpected nonce length");
    auto nonce = r.raw(c.nonce.size());
    auto mac = r.raw(c.mac.size());
    if (!nonce || !mac || !r.at_end()) return bad("credential length mismatch");
    c.scope = static_cast<Scope>(*scope);
    c.issued_at = from_micros(*issued);
    std::copy(nonce->begin(), nonce->end(), reinterpret_cast<char*>(c.nonce.data()));
    std::copy(mac->begin(), mac->end(), reinterpret_cast<char*>(c.mac.data()));
    return c;
}

Credential issue_credential(std::uint32_t uid, std::vector<std::uint32_t> gids, Scope scope,
                            std::string_view secret, Timestamp now) {
    if (secret.empty()) fail(ErrorCode::InvalidConfig, "credential secret is empty");
    std::sort(gids.begin(), gids.end());
    gids.erase(std::unique(gids.begin(), gids.end()), gids.end());
    Credential c;
    c.uid = uid;
    c.gids = std::move(gids);
    c.scope = scope;
    c.issued_at = now;
    if (RAND_bytes(c.nonce.data(), static_cast<int>(c.nonce.size())) != 1) {
        throw std::runtime_error("random source unavailable");
    }
    c.mac = hmac_sha256(secret, mac_input(c));
    return c;
}

Principal verify_credential(const Credential& cred, std::string_view secret, Timestamp now, Duration ttl) {
    auto expected = hmac_sha256(secret, mac_input(cred));
    if (!constant_time_equal(expected, cred.mac)) fail(ErrorCode::MacMismatch, "credential MAC does not verify");
    if (cred.issued_at > now) fail(ErrorCode::Expired, "credential issued in the future");
    if (now - cred.issued_at > ttl) {
        fail(ErrorCode::Expired, fmt::format("credential age {} s exceeds {} s", format_seconds(now - cred.issued_at),
                                             format_seconds(ttl)));
    }
    return Principal{cred.uid, cred.gids, cred.scope};
}

void AuthDaemon::require_up() const {
    if (!is_up()) fail(ErrorCode::AuthServiceDown, "authentication daemon is not running");
}

Credential AuthDaemon::issue(std::uint32_t uid, std::vector<std::uint32_t> gids, Scope scope, Timestamp now) const {
    require_up();
    return issue_credential(uid, std::move(gids), scope, secret_, now);
}

Principal AuthDaemon::verify(const Credential& cred, Timestamp now) const {
    require_up();
    return verify_credential(cred, secret_, now, ttl_);
}

}  // namespace udi
