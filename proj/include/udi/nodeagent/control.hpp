#pragma once

#include <memory>
#include <string>
#include <thread>

#include <nlohmann/json_fwd.hpp>

#include "udi/common/time.hpp"
#include "udi/nodeagent/node_agent.hpp"

namespace udi {

// Agent control messages. Requests are JSON objects with an "op" field:
//
//   {"op":"mount", "job_id", "credential": <wire>, "udi": <descriptor>}
//   {"op":"unmount", "job_id", "udi": <descriptor>}
//   {"op":"resolve", "uid"}
//   {"op":"set_auth_up", "up": bool}
//   {"op":"flush_cache"}
//   {"op":"health"}
//
// Replies carry {"ok": true, ...} or {"ok": false, "error", "message"}.
// Over HTTP each op is POST /agent/<op> with the same body.

nlohmann::json handle_control(NodeAgent& agent, const nlohmann::json& request, Timestamp now,
                              const std::string& system);

class NodeAgentServer {
public:
    NodeAgentServer(NodeAgent& agent, const Clock& clock, std::string system);
    ~NodeAgentServer();
    NodeAgentServer(const NodeAgentServer&) = delete;
    NodeAgentServer& operator=(const NodeAgentServer&) = delete;

    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
};

}  // namespace udi
