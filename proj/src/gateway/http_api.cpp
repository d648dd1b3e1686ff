#include "udi/gateway/http_api.hpp"

#include <mutex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "udi/common/error.hpp"

namespace udi {

using json = nlohmann::json;

namespace {

std::string error_body(ErrorCode code, const std::string& message) {
    return json{{"error", std::string(to_string(code))}, {"message", message}}.dump();
}

// "/{system}/{name}:{tag}" after the route prefix.
ImageReference parse_target(std::string_view rest) {
    auto slash = rest.find('/');
    if (slash == std::string_view::npos || slash == 0) fail(ErrorCode::InvalidReference, "missing system in path");
    return ImageReference::parse(std::string(rest.substr(slash + 1)), std::string(rest.substr(0, slash)));
}

Credential parse_credential(const std::string& header) {
    if (header.empty()) fail(ErrorCode::MalformedCredential, std::string("missing ") + kCredentialHeader + " header");
    return Credential::from_wire(header);
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

}  // namespace

int http_status_for(ErrorCode code) {
    if (is_auth_error(code)) return 401;
    switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::PersistenceCorrupt: return 409;
    case ErrorCode::InvalidReference:
    case ErrorCode::InvalidSpec: return 400;
    default: return 500;
    }
}

ApiResponse handle_api_request(Gateway& gateway, const std::string& method, const std::string& path,
                               const std::string& credential_header) {
    try {
        std::string_view p(path);
        if (method == "POST" && starts_with(p, "/api/pull/")) {
            auto ref = parse_target(p.substr(std::string_view("/api/pull/").size()));
            json j = gateway.pull(ref, parse_credential(credential_header));
            return {200, j.dump()};
        }
        if (method == "GET" && starts_with(p, "/api/lookup/")) {
            json j = gateway.lookup(parse_target(p.substr(std::string_view("/api/lookup/").size())));
            return {200, j.dump()};
        }
        if (method == "POST" && starts_with(p, "/api/expire/")) {
            auto ref = parse_target(p.substr(std::string_view("/api/expire/").size()));
            json j = gateway.expire(ref, parse_credential(credential_header));
            return {200, j.dump()};
        }
        if (method == "GET" && starts_with(p, "/api/list/")) {
            auto system = std::string(p.substr(std::string_view("/api/list/").size()));
            if (!is_valid_system_name(system)) fail(ErrorCode::InvalidReference, "bad system name '" + system + "'");
            json j = gateway.list(system);
            return {200, j.dump()};
        }
        return {404, error_body(ErrorCode::NotFound, "no route for " + method + " " + path)};
    } catch (const Error& e) {
        return {http_status_for(e.code()), error_body(e.code(), e.detail())};
    } catch (const std::logic_error& e) {
        return {503, json{{"error", "Unavailable"}, {"message", e.what()}}.dump()};
    }
}

struct GatewayServer::Impl {
    Gateway& gateway;
    httplib::Server server;

    explicit Impl(Gateway& g) : gateway(g) {
        auto handler = [this](const httplib::Request& req, httplib::Response& res) {
            auto out = handle_api_request(gateway, req.method, req.path, req.get_header_value(kCredentialHeader));
            res.status = out.status;
            res.set_content(out.body, "application/json");
        };
        server.Get(R"(/api/.*)", handler);
        server.Post(R"(/api/.*)", handler);
    }
};

GatewayServer::GatewayServer(Gateway& gateway) : impl_(std::make_unique<Impl>(gateway)) {}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorCode::StorageIoError, "cannot bind gateway API on " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void GatewayServer::stop() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

struct GatewayClient::Impl {
    std::mutex mu;
    httplib::Client client;
    explicit Impl(const std::string& url) : client(url) {
        client.set_connection_timeout(5, 0);
        client.set_read_timeout(30, 0);
    }

    json call(const std::string& method, const std::string& path, const Credential* cred) {
        std::lock_guard lock(mu);
        httplib::Headers headers;
        if (cred) headers.emplace(kCredentialHeader, cred->to_wire());
        auto res = method == "POST" ? client.Post(path, headers, "", "application/json") : client.Get(path, headers);
        if (!res) fail(ErrorCode::StorageIoError, "gateway unreachable: " + httplib::to_string(res.error()));
        auto body = json::parse(res->body, nullptr, false);
        if (res->status != 200) {
            auto code = body.is_object() ? parse_error_code(body.value("error", "")) : std::nullopt;
            auto message = body.is_object() ? body.value("message", res->body) : res->body;
            fail(code.value_or(ErrorCode::StorageIoError), message);
        }
        if (body.is_discarded()) fail(ErrorCode::StorageIoError, "gateway sent invalid JSON");
        return body;
    }
};

GatewayClient::GatewayClient(const std::string& base_url) : impl_(std::make_unique<Impl>(base_url)) {}

GatewayClient::~GatewayClient() = default;

ImageRecord GatewayClient::pull(const ImageReference& ref, const Credential& cred) {
    return record_from_json(impl_->call("POST", "/api/pull/" + ref.system + "/" + ref.canonical(), &cred), ref.system);
}

ImageRecord GatewayClient::lookup(const ImageReference& ref) {
    return record_from_json(impl_->call("GET", "/api/lookup/" + ref.system + "/" + ref.canonical(), nullptr),
                            ref.system);
}

std::vector<ImageRecord> GatewayClient::list(const std::string& system) {
    std::vector<ImageRecord> out;
    for (const auto& j : impl_->call("GET", "/api/list/" + system, nullptr)) out.push_back(record_from_json(j, system));
    return out;
}

ImageRecord GatewayClient::expire(const ImageReference& ref, const Credential& cred) {
    return record_from_json(impl_->call("POST", "/api/expire/" + ref.system + "/" + ref.canonical(), &cred),
                            ref.system);
}

}  // namespace udi
