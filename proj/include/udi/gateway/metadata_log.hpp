#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "udi/gateway/image_record.hpp"
#include "udi/imagekit/udi_format.hpp"

namespace udi {

/// One persisted record update. `retry_base` is the attempts value at which
/// the current retry budget started (reset by an administrator expire).
struct LogEntry {
    ImageRecord record;
    int retry_base = 0;
    std::optional<UdiDescriptor> udi;  // what READY published

    friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

/// Append-only record-update log. Each line is
///
///   <hex SHA-256 of the JSON text> SP <JSON object> LF
///
/// Loading replays every line; the last entry per image wins. A complete line
/// whose checksum does not match is skipped with a warning. An unterminated
/// final line means a write was cut short and the store is refused.
class MetadataLog {
public:
    struct Loaded {
        std::map<std::string, LogEntry> entries;  // keyed by ImageReference::key()
        int skipped = 0;
    };

    MetadataLog(std::filesystem::path path, bool durable);

    /// Throws StorageIoError.
    void append(const LogEntry& entry);
    /// Throws PersistenceCorrupt. A missing file loads as empty.
    Loaded load() const;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    bool durable_;
    std::mutex mu_;
};

}  // namespace udi
