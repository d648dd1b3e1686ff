#include "udi/gateway/metadata_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "udi/common/crypto.hpp"
#include "udi/common/error.hpp"

namespace udi {

using json = nlohmann::json;


MetadataLog::MetadataLog(std::filesystem::path path, bool durable) : path_(std::move(path)), durable_(durable) {}

void MetadataLog::append(const LogEntry& entry) {
    json j{{"system", entry.record.ref.system}, {"retry_base", entry.retry_base}, {"record", entry.record}};
    if (entry.udi) j["udi"] = *entry.udi;
    auto body = j.dump();
    auto line = sha256_hex(body) + " " + body + "\n";

    std::lock_guard lock(mu_);
    int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) fail(ErrorCode::StorageIoError, fmt::format("open {}: {}", path_.string(), std::strerror(errno)));
    std::size_t done = 0;
    while (done < line.size()) {
        auto n = ::write(fd, line.data() + done, line.size() - done);
        if (n < 0 && errno == EINTR) continue;
        if (n < 0) {
            ::close(fd);
            fail(ErrorCode::StorageIoError, fmt::format("write {}: {}", path_.string(), std::strerror(errno)));
        }
        done += static_cast<std::size_t>(n);
    }
    if (durable_ && ::fsync(fd) != 0) {
        ::close(fd);
        fail(ErrorCode::StorageIoError, fmt::format("fsync {}: {}", path_.string(), std::strerror(errno)));
    }
    ::close(fd);
}

MetadataLog::Loaded MetadataLog::load() const {
    Loaded out;
    std::ifstream in(path_, std::ios::binary);
    if (!in) return out;
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::size_t pos = 0;
    int lineno = 0;
    while (pos < text.size()) {
        ++lineno;
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            fail(ErrorCode::PersistenceCorrupt,
                 fmt::format("{}: final entry (line {}) is truncated", path_.string(), lineno));
        }
        std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;

        auto skip = [&](const char* why) {
            spdlog::warn("metadata log {}: skipping line {}: {}", path_.string(), lineno, why);
            ++out.skipped;
        };
        if (line.size() < 66 || line[64] != ' ') {
            skip("malformed framing");
            continue;
        }
        auto body = line.substr(65);
        if (sha256_hex(body) != line.substr(0, 64)) {
            skip("checksum mismatch");
            continue;
        }
        auto j = json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("record") || !j.contains("system")) {
            skip("entry is not a record update");
            continue;
        }
        try {
            LogEntry e;
            e.record = record_from_json(j["record"], j["system"].get<std::string>());
            e.retry_base = j.value("retry_base", 0);
            if (j.contains("udi")) e.udi = descriptor_from_json(j["udi"], j["system"].get<std::string>());
            out.entries[e.record.ref.key()] = std::move(e);
        } catch (const std::exception& ex) {
            skip(ex.what());
        }
    }
    return out;
}

}  // namespace udi
