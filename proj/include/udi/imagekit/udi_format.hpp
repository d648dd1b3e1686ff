#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "udi/common/time.hpp"
#include "udi/imagekit/file_tree.hpp"
#include "udi/imagekit/image_reference.hpp"

namespace udi {

// UDI archive layout (all integers little-endian):
//
//   "UDI1" | u16 version | u32 metadata length | metadata JSON
//   | u32 entry count
//   | per entry: u16 path length, path, u8 kind, u16 mode, u64 length, payload
//   | 32-byte SHA-256 of every preceding byte
//
// Entries are in bytewise path order and start with the root directory, so the
// same tree always produces the same bytes.

inline constexpr std::uint16_t kUdiVersion = 1;
inline constexpr std::size_t kUdiTrailerSize = 32;

struct UdiDescriptor {
    std::filesystem::path path;
    std::string content_digest;  // hex SHA-256 of all bytes before the trailer
    std::uint64_t size_bytes = 0;
    Timestamp created_at{};
    ImageReference source_ref;

    friend bool operator==(const UdiDescriptor&, const UdiDescriptor&) = default;
};

/// {"path", "content_digest", "size_bytes", "created_at", "source_ref"}
void to_json(nlohmann::json& j, const UdiDescriptor& d);
UdiDescriptor descriptor_from_json(const nlohmann::json& j, const std::string& system);

struct WriteOptions {
    bool fsync = true;
};

/// Writes atomically (temporary file + rename). Runs of zero-filled content are
/// left as holes, so synthetic multi-gigabyte images stay cheap on disk.
UdiDescriptor write_udi(const FileTree& tree, const std::filesystem::path& dest, const ImageReference& source_ref,
                        Timestamp created_at, const std::vector<std::string>& site_mods = {},
                        const WriteOptions& options = {});

enum class CorruptReason { Io, Truncated, BadMagic, BadVersion, Checksum, Malformed };

std::string_view to_string(CorruptReason reason);

struct VerifyResult {
    bool ok = true;
    CorruptReason reason = CorruptReason::Io;
    std::string detail;

    static VerifyResult good() { return {}; }
    static VerifyResult corrupt(CorruptReason r, std::string d) { return {false, r, std::move(d)}; }
    explicit operator bool() const { return ok; }
};

/// Full check: framing, trailer checksum over the whole body, and the file
/// table's structural invariants. Never throws for bad input bytes.
VerifyResult verify_udi(const std::filesystem::path& path);

/// Cheap check used at mount time: header, file size and trailer against the
/// descriptor the gateway published. Reads a constant number of bytes.
VerifyResult probe_udi(const std::filesystem::path& path, const UdiDescriptor& expected);

/// Reconstructs the tree. Files larger than `inline_limit` are returned as
/// slices of the archive instead of being loaded. Throws UdiCorrupt.
std::pair<FileTree, UdiDescriptor> read_udi(const std::filesystem::path& path,
                                            std::uint64_t inline_limit = 1 << 20);

/// SHA-256 over the canonical file-table encoding of a tree.
std::string tree_digest(const FileTree& tree);

}  // namespace udi
