#pragma once

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "udi/auth/credential.hpp"
#include "udi/common/error.hpp"
#include "udi/gateway/gateway.hpp"

namespace udi {

// Gateway API:
//   POST /api/pull/{system}/{name}:{tag}
//   GET  /api/lookup/{system}/{name}:{tag}
//   GET  /api/list/{system}
//   POST /api/expire/{system}/{name}:{tag}
// Credentials travel in X-UDI-Cred as the base64 wire form. Bodies are the
// flat record JSON (a JSON array for list) or, on error, {"error", "message"}.

inline constexpr const char* kCredentialHeader = "X-UDI-Cred";

struct ApiResponse {
    int status = 200;
    std::string body;
};

/// Maps an error to its API status: 401 auth, 404 not found, 409 corrupt
/// store, 400 bad reference or request, 500 otherwise.
int http_status_for(ErrorCode code);

/// Routing without sockets; the server below is a thin binding over this.
ApiResponse handle_api_request(Gateway& gateway, const std::string& method, const std::string& path,
                               const std::string& credential_header);

class GatewayServer {
public:
    explicit GatewayServer(Gateway& gateway);
    ~GatewayServer();
    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    /// Port 0 picks a free port. Serves on a background thread.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
};

/// Client for the API above. Error responses are rethrown as udi::Error with
/// the code the server reported.
class GatewayClient {
public:
    explicit GatewayClient(const std::string& base_url);
    ~GatewayClient();

    ImageRecord pull(const ImageReference& ref, const Credential& cred);
    ImageRecord lookup(const ImageReference& ref);
    std::vector<ImageRecord> list(const std::string& system);
    ImageRecord expire(const ImageReference& ref, const Credential& cred);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace udi
