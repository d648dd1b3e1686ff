#include <doctest.h>

#include <random>
#include <thread>

#include "support/properties.hpp"
#include "udi/auth/credential.hpp"
#include "udi/common/crypto.hpp"
#include "udi/common/error.hpp"

using namespace udi;
using namespace std::chrono_literals;
using udi::test::single_field_tampers;

namespace {

const std::string kSecret = "auth-test-secret";
const Timestamp kNow = timestamp_from_seconds(1'700'000'000);

ErrorCode verify_code(const Credential& c, Timestamp now = kNow, std::string_view secret = kSecret) {
    try {
        verify_credential(c, secret, now);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidSpec;  // stands for "accepted"
}

}  // namespace

TEST_CASE("issue then verify returns the principal") {
    auto c = issue_credential(1000, {100, 7}, Scope::User, kSecret, kNow);
    auto p = verify_credential(c, kSecret, kNow);
    CHECK(p == Principal{1000, {7, 100}, Scope::User});
    auto back = Credential::from_wire(c.to_wire());
    CHECK(verify_credential(back, kSecret, kNow) == p);
}

TEST_CASE("gids are sorted and deduplicated") {
    auto c = issue_credential(1, {5, 2, 2}, Scope::User, kSecret, kNow);
    CHECK(c.gids == std::vector<std::uint32_t>{2, 5});
}

TEST_CASE("two issues of the same statement differ in nonce and mac") {
    auto a = issue_credential(1, {2}, Scope::User, kSecret, kNow);
    auto b = issue_credential(1, {2}, Scope::User, kSecret, kNow);
    CHECK(a.nonce != b.nonce);
    CHECK(a.mac != b.mac);
}

TEST_CASE("mac is HMAC-SHA256 over the canonical bytes") {
    auto c = issue_credential(1000, {100}, Scope::Admin, kSecret, kNow);
    CHECK(c.mac == hmac_sha256(kSecret, c.canonical_bytes()));
    auto canon = c.canonical_bytes();
    // u8 format | u32 uid | u32 count | u32 gid | u8 scope | i64 issued | u32 len | 16 nonce
    REQUIRE(canon.size() == 1 + 4 + 4 + 4 + 1 + 8 + 4 + 16);
    CHECK(canon[0] == 1);
    CHECK(static_cast<std::uint8_t>(canon[1]) == (1000 & 0xff));
    CHECK(static_cast<std::uint8_t>(canon[2]) == (1000 >> 8));
    CHECK(canon[13] == 1);
    auto wire = base64_decode(c.to_wire());
    REQUIRE(wire.has_value());
    CHECK(*wire == canon + std::string(reinterpret_cast<const char*>(c.mac.data()), c.mac.size()));
}

TEST_CASE("every single-field tamper is a MAC mismatch") {
    std::mt19937 rng(1);
    for (int round = 0; round < 50; ++round) {
        std::vector<std::uint32_t> gids;
        for (int i = 0, n = static_cast<int>(rng() % 5); i < n; ++i) gids.push_back(rng() % 100000);
        auto scope = rng() % 2 == 0 ? Scope::User : Scope::Admin;
        auto c = issue_credential(rng() % 100000, gids, scope, kSecret, kNow);
        for (const auto& [what, t] : single_field_tampers(c)) {
            INFO(what);
            CHECK(verify_code(t) == ErrorCode::MacMismatch);
            CHECK(verify_code(Credential::from_wire(t.to_wire())) == ErrorCode::MacMismatch);
        }
    }
}

TEST_CASE("every flipped bit on the wire is rejected") {
    auto c = issue_credential(1000, {100, 200}, Scope::User, kSecret, kNow);
    auto raw = *base64_decode(c.to_wire());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        for (int bit = 0; bit < 8; ++bit) {
            auto t = raw;
            t[i] = static_cast<char>(t[i] ^ (1 << bit));
            ErrorCode code;
            try {
                code = verify_code(Credential::from_wire(base64_encode(t)));
            } catch (const Error& e) {
                code = e.code();
            }
            INFO("byte " << i << " bit " << bit);
            CHECK((code == ErrorCode::MacMismatch || code == ErrorCode::MalformedCredential));
        }
    }
}

TEST_CASE("a different secret is a MAC mismatch") {
    auto c = issue_credential(1, {1}, Scope::User, kSecret, kNow);
    CHECK(verify_code(c, kNow, "other-secret") == ErrorCode::MacMismatch);
}

TEST_CASE("TTL boundary") {
    auto c = issue_credential(1, {1}, Scope::User, kSecret, kNow);
    CHECK_NOTHROW(verify_credential(c, kSecret, kNow + 300s));
    CHECK(verify_code(c, kNow + 301s) == ErrorCode::Expired);
    CHECK(verify_code(c, kNow + 300s + 1us) == ErrorCode::Expired);
    CHECK(verify_code(c, kNow - 1s) == ErrorCode::Expired);
    CHECK_NOTHROW(verify_credential(c, kSecret, kNow + 20s, 30s));
    CHECK_THROWS_AS(verify_credential(c, kSecret, kNow + 31s, 30s), Error);
}

TEST_CASE("malformed wire text") {
    for (const std::string& bad : std::vector<std::string>{"", "!!!!", "AAAA", base64_encode(std::string(100, '\x01'))}) {
        INFO(bad);
        try {
            Credential::from_wire(bad);
            FAIL("accepted");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::MalformedCredential);
        }
    }
}

TEST_CASE("verification is stateless: independent verifiers agree") {
    AuthDaemon a(kSecret);
    AuthDaemon b(kSecret);
    auto c = a.issue(42, {7}, Scope::User, kNow);
    CHECK(a.verify(c, kNow) == b.verify(c, kNow));
    CHECK(b.verify(c, kNow) == b.verify(c, kNow));

    std::vector<std::thread> threads;
    std::atomic<int> ok{0};
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] {
            for (int k = 0; k < 200; ++k) {
                if (b.verify(c, kNow).uid == 42) ++ok;
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(ok == 1600);
}

TEST_CASE("a daemon flagged down refuses both issue and verify") {
    AuthDaemon d(kSecret);
    auto c = d.issue(1, {1}, Scope::User, kNow);
    d.set_up(false);
    try {
        d.verify(c, kNow);
        FAIL("verified while down");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AuthServiceDown);
    }
    CHECK_THROWS_AS(d.issue(1, {1}, Scope::User, kNow), Error);
    d.set_up(true);
    CHECK(d.verify(c, kNow).uid == 1);
}
