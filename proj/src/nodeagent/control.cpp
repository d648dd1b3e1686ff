#include "udi/nodeagent/control.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace udi {

using json = nlohmann::json;

namespace {

json error_reply(ErrorCode code, const std::string& message) {
    return json{{"ok", false}, {"error", std::string(to_string(code))}, {"message", message}};
}

json handle_json(const MountHandle& h) {
    return json{{"job_id", h.job_id}, {"udi", h.udi}, {"mounted_at", to_seconds(h.mounted_at)}};
}

}  // namespace

json handle_control(NodeAgent& agent, const json& request, Timestamp now, const std::string& system) {
    try {
        if (!request.is_object() || !request.contains("op")) fail(ErrorCode::InvalidSpec, "request needs an op");
        const auto op = request.at("op").get<std::string>();
        if (op == "mount") {
            auto cred = Credential::from_wire(request.at("credential").get<std::string>());
            auto udi = descriptor_from_json(request.at("udi"), system);
            auto out = agent.mount_udi(udi, cred, request.at("job_id").get<std::string>(), now);
            return json{{"ok", true}, {"handle", handle_json(out.value)}, {"done_at", to_seconds(out.done_at)}};
        }
        if (op == "unmount") {
            MountHandle h{request.at("job_id").get<std::string>(), descriptor_from_json(request.at("udi"), system), {}};
            return json{{"ok", true}, {"removed", agent.unmount_udi(h)}};
        }
        if (op == "resolve") {
            auto out = agent.resolve_groups(request.at("uid").get<std::uint32_t>(), now);
            return json{{"ok", true}, {"gids", out.value}, {"done_at", to_seconds(out.done_at)}};
        }
        if (op == "set_auth_up") {
            agent.set_auth_up(request.at("up").get<bool>());
            return json{{"ok", true}};
        }
        if (op == "flush_cache") {
            agent.flush_cache();
            return json{{"ok", true}};
        }
        if (op == "health") {
            return json{{"ok", true},
                        {"node", agent.id()},
                        {"health", std::string(to_string(agent.health()))},
                        {"mounts", agent.mounts().size()}};
        }
        fail(ErrorCode::InvalidSpec, "unknown op '" + op + "'");
    } catch (const Error& e) {
        return error_reply(e.code(), e.detail());
    } catch (const json::exception& e) {
        return error_reply(ErrorCode::InvalidSpec, e.what());
    }
}

struct NodeAgentServer::Impl {
    NodeAgent& agent;
    const Clock& clock;
    std::string system;
    httplib::Server server;

    Impl(NodeAgent& a, const Clock& c, std::string s) : agent(a), clock(c), system(std::move(s)) {
        server.Post(R"(/agent/([a-z_]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = req.body.empty() ? json::object() : json::parse(req.body, nullptr, false);
            json reply;
            if (body.is_discarded() || !body.is_object()) {
                reply = error_reply(ErrorCode::InvalidSpec, "body is not a JSON object");
            } else {
                body["op"] = req.matches[1].str();
                reply = handle_control(agent, body, clock.now(), system);
            }
            res.status = reply.value("ok", false) ? 200 : 400;
            res.set_content(reply.dump(), "application/json");
        });
    }
};

NodeAgentServer::NodeAgentServer(NodeAgent& agent, const Clock& clock, std::string system)
    : impl_(std::make_unique<Impl>(agent, clock, std::move(system))) {}

NodeAgentServer::~NodeAgentServer() { stop(); }

int NodeAgentServer::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorCode::InvalidConfig, "cannot bind agent control port");
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void NodeAgentServer::stop() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace udi
