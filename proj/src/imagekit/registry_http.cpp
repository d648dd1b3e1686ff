#include "udi/imagekit/registry_http.hpp"

#include <mutex>

#include <httplib.h>

#include "udi/common/error.hpp"

namespace udi {

struct RegistryServer::Impl {
    DirectoryRegistry& registry;
    httplib::Server server;

    explicit Impl(DirectoryRegistry& r) : registry(r) {
        server.Get(R"(/registry/(.+)/manifest\.json)", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                res.set_content(registry.manifest_text(req.matches[1]), "application/json");
            } catch (const Error& e) {
                res.status = e.code() == ErrorCode::RegistryUnknownImage ? 404 : 500;
                res.set_content(e.what(), "text/plain");
            }
        });
        server.Get(R"(/registry/(.+)/blobs/([0-9a-f]{64}))", [this](const httplib::Request& req,
                                                                 httplib::Response& res) {
            try {
                res.set_content(registry.blob_bytes(req.matches[1], req.matches[2]), "application/octet-stream");
            } catch (const Error& e) {
                res.status = 404;
                res.set_content(e.what(), "text/plain");
            }
        });
    }
};

RegistryServer::RegistryServer(DirectoryRegistry& registry) : impl_(std::make_unique<Impl>(registry)) {}

RegistryServer::~RegistryServer() { stop(); }

int RegistryServer::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorCode::RegistryIoError, "cannot bind registry server");
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

bool RegistryServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void RegistryServer::stop() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

struct HttpRegistry::Impl {
    std::mutex mu;
    httplib::Client client;
    explicit Impl(const std::string& url) : client(url) {
        client.set_connection_timeout(5, 0);
        client.set_read_timeout(30, 0);
    }
};

HttpRegistry::HttpRegistry(std::string base_url, std::string system)
    : impl_(std::make_unique<Impl>(base_url)), system_(std::move(system)) {}

HttpRegistry::~HttpRegistry() = default;

Manifest HttpRegistry::fetch_manifest(const ImageReference& ref) {
    std::lock_guard lock(impl_->mu);
    auto res = impl_->client.Get("/registry/" + ref.canonical() + "/manifest.json");
    if (!res) fail(ErrorCode::RegistryIoError, "registry unreachable: " + httplib::to_string(res.error()));
    if (res->status == 404) fail(ErrorCode::RegistryUnknownImage, ref.canonical());
    if (res->status != 200) fail(ErrorCode::RegistryIoError, "registry answered " + std::to_string(res->status));
    auto m = Manifest::from_json(res->body, ref.system);
    if (m.ref.canonical() != ref.canonical()) fail(ErrorCode::RegistryIoError, "manifest names another image");
    return m;
}

std::string HttpRegistry::fetch_blob(const ImageReference& ref, const std::string& digest,
                                     const BlobProgress& progress) {
    std::lock_guard lock(impl_->mu);
    std::string body;
    std::uint64_t expected = 0;
    auto res = impl_->client.Get(
        "/registry/" + ref.canonical() + "/blobs/" + digest,
        [&](const httplib::Response& r) {
            if (r.has_header("Content-Length")) expected = std::stoull(r.get_header_value("Content-Length"));
            return true;
        },
        [&](const char* data, size_t len) {
            body.append(data, len);
            if (progress) progress(body.size(), expected);
            return true;
        });
    if (!res) fail(ErrorCode::RegistryIoError, "blob transfer failed: " + httplib::to_string(res.error()));
    if (res->status != 200) fail(ErrorCode::RegistryIoError, "registry answered " + std::to_string(res->status));
    if (expected != 0 && body.size() != expected) fail(ErrorCode::RegistryIoError, "short blob transfer");
    return body;
}

}  // namespace udi
