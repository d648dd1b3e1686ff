#pragma once

#include <memory>
#include <string>
#include <thread>

#include "udi/imagekit/registry.hpp"

namespace udi {

// HTTP transport for the fake registry:
//   GET /registry/<name:tag>/manifest.json
//   GET /registry/<name:tag>/blobs/<digest>
// 404 on the manifest route means the image is unknown.

class RegistryServer {
public:
    explicit RegistryServer(DirectoryRegistry& registry);
    ~RegistryServer();
    RegistryServer(const RegistryServer&) = delete;
    RegistryServer& operator=(const RegistryServer&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
};

class HttpRegistry final : public Registry {
public:
    HttpRegistry(std::string base_url, std::string system);
    ~HttpRegistry() override;

    Manifest fetch_manifest(const ImageReference& ref) override;
    std::string fetch_blob(const ImageReference& ref, const std::string& digest,
                           const BlobProgress& progress) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string system_;
};

}  // namespace udi
