#include <doctest.h>

#include <thread>

#include <nlohmann/json.hpp>

#include "support/test_support.hpp"
#include "udi/common/error.hpp"
#include "udi/gateway/http_api.hpp"
#include "udi/gateway/service.hpp"

using namespace udi;
using udi::test::TempDir;
using json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

const std::string kSecret = "api-test-secret";

struct ApiRig {
    TempDir dir{"api"};
    ManualClock clock{timestamp_from_seconds(5000)};
    MemoryRegistry registry;
    GatewayConfig cfg;
    std::unique_ptr<Gateway> gw;

    ApiRig() {
        cfg.storage_dir = dir.path() / "store";
        cfg.secret = kSecret;
        cfg.durable = false;
        registry.publish(ImageReference::parse("centos:7", "cluster"), udi::test::three_layer_image());
        gw = std::make_unique<Gateway>(cfg, clock, registry);
    }

    std::string user() const { return issue_credential(1000, {100}, Scope::User, kSecret, clock.now()).to_wire(); }
    std::string admin() const { return issue_credential(0, {0}, Scope::Admin, kSecret, clock.now()).to_wire(); }

    ApiResponse call(const std::string& method, const std::string& path, const std::string& cred = "") {
        return handle_api_request(*gw, method, path, cred);
    }
};

}  // namespace

TEST_CASE("requests before recovery are refused as unavailable") {
    ApiRig rig;
    CHECK(rig.call("POST", "/api/pull/cluster/centos:7", rig.user()).status == 503);
    rig.gw->recover_on_startup();
    CHECK(rig.call("POST", "/api/pull/cluster/centos:7", rig.user()).status == 200);
}

TEST_CASE("pull, lookup, list and expire over the routing layer") {
    ApiRig rig;
    rig.gw->recover_on_startup();

    auto pulled = rig.call("POST", "/api/pull/cluster/centos:7", rig.user());
    REQUIRE(pulled.status == 200);
    auto record = json::parse(pulled.body);
    CHECK(record["ref"] == "centos:7");
    CHECK(record["state"] == "ENQUEUED");
    std::set<std::string> keys;
    for (const auto& [k, v] : record.items()) keys.insert(k);
    CHECK(keys == std::set<std::string>{"ref", "state", "content_digest", "udi_path", "size_bytes", "created_at",
                                        "updated_at", "lease_expires_at", "attempts", "last_error"});

    while (auto task = rig.gw->claim_task()) rig.gw->worker_run(*task);
    auto looked = rig.call("GET", "/api/lookup/cluster/centos:7");
    REQUIRE(looked.status == 200);
    CHECK(json::parse(looked.body)["state"] == "READY");

    auto listed = rig.call("GET", "/api/list/cluster");
    REQUIRE(listed.status == 200);
    CHECK(json::parse(listed.body).size() == 1);

    CHECK(rig.call("POST", "/api/expire/cluster/centos:7", rig.user()).status == 401);
    auto expired = rig.call("POST", "/api/expire/cluster/centos:7", rig.admin());
    REQUIRE(expired.status == 200);
    CHECK(json::parse(expired.body)["state"] == "EXPIRED");
}

TEST_CASE("API error statuses") {
    ApiRig rig;
    rig.gw->recover_on_startup();
    auto status_and_code = [&](const ApiResponse& r) {
        return std::make_pair(r.status, json::parse(r.body)["error"].get<std::string>());
    };
    CHECK(status_and_code(rig.call("POST", "/api/pull/cluster/centos:7")) == std::make_pair(401, std::string("MalformedCredential")));
    auto forged = issue_credential(1000, {100}, Scope::User, "wrong", rig.clock.now()).to_wire();
    CHECK(status_and_code(rig.call("POST", "/api/pull/cluster/centos:7", forged)) == std::make_pair(401, std::string("MacMismatch")));
    auto old = rig.user();
    rig.clock.advance(301s);
    CHECK(status_and_code(rig.call("POST", "/api/pull/cluster/centos:7", old)) == std::make_pair(401, std::string("Expired")));
    CHECK(rig.call("POST", "/api/pull/cluster/centos", rig.user()).status == 400);
    CHECK(rig.call("POST", "/api/pull/elsewhere/centos:7", rig.user()).status == 400);
    CHECK(rig.call("GET", "/api/list/bad system").status == 400);
    CHECK(status_and_code(rig.call("GET", "/api/lookup/cluster/centos:9")) == std::make_pair(404, std::string("NotFound")));
    CHECK(rig.call("GET", "/api/nowhere").status == 404);
    CHECK(rig.call("DELETE", "/api/pull/cluster/centos:7", rig.user()).status == 404);
}

TEST_CASE("a corrupt metadata store answers 409") {
    ApiRig rig;
    rig.gw->recover_on_startup();
    rig.call("POST", "/api/pull/cluster/centos:7", rig.user());
    rig.gw.reset();
    auto log = rig.cfg.storage_dir / "metadata.log";
    auto bytes = udi::test::read_file(log);
    udi::test::write_file(log, bytes.substr(0, bytes.size() - 5));
    rig.gw = std::make_unique<Gateway>(rig.cfg, rig.clock, rig.registry);
    CHECK_THROWS_AS(rig.gw->recover_on_startup(), Error);
    CHECK(rig.call("POST", "/api/pull/cluster/centos:7", rig.user()).status == 409);
}

TEST_CASE("client and server with worker threads reach READY") {
    TempDir dir("api-live");
    SystemClock clock;
    MemoryRegistry registry;
    auto ref = ImageReference::parse("centos:7", "cluster");
    registry.publish(ref, udi::test::three_layer_image());
    GatewayConfig cfg;
    cfg.storage_dir = dir.path() / "store";
    cfg.secret = kSecret;
    cfg.durable = false;
    Gateway gw(cfg, clock, registry);
    gw.recover_on_startup();
    GatewayService service(gw);
    service.start();
    GatewayServer server(gw);
    int port = server.start("127.0.0.1", 0);
    GatewayClient client("http://127.0.0.1:" + std::to_string(port));

    auto user = issue_credential(1000, {100}, Scope::User, kSecret, clock.now());
    client.pull(ref, user);
    ImageRecord r;
    for (int i = 0; i < 200; ++i) {
        r = client.lookup(ref);
        if (r.state == ImageState::Ready) break;
        std::this_thread::sleep_for(20ms);
    }
    CHECK(r.state == ImageState::Ready);
    CHECK(verify_udi(r.udi_path));
    CHECK(client.pull(ref, user) == r);
    CHECK(client.list("cluster").size() == 1);

    auto forged = user;
    forged.uid = 0;
    try {
        client.pull(ref, forged);
        FAIL("forged credential accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MacMismatch);
    }
    try {
        client.lookup(ImageReference::parse("nope:1", "cluster"));
        FAIL("unknown image found");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotFound);
    }
    auto admin = issue_credential(0, {0}, Scope::Admin, kSecret, clock.now());
    CHECK(client.expire(ref, admin).state == ImageState::Expired);
    server.stop();
    service.stop();
}
