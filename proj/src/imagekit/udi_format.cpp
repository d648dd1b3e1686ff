#include "udi/imagekit/udi_format.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "udi/common/bytes.hpp"
#include "udi/common/crypto.hpp"
#include "udi/common/error.hpp"

namespace udi {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::string_view kMagic = "UDI1";
constexpr std::size_t kBufferLimit = 1 << 20;

std::string entry_header(const std::string& path, const FileEntry& e) {
    ByteWriter w;
    w.u16(static_cast<std::uint16_t>(path.size()));
    w.raw(path);
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.u16(e.mode);
    std::uint64_t len = 0;
    if (e.kind == EntryKind::File) len = e.content.size();
    if (e.kind == EntryKind::Symlink) len = e.link_target.size();
    w.u64(len);
    return w.take();
}

// Streams the canonical encoding of the file table (count + entries) into
// `emit`, announcing zero runs separately so writers can leave holes.
template <class Emit, class Zeros>
void encode_table(const FileTree& tree, Emit&& emit, Zeros&& zeros) {
    ByteWriter count;
    count.u32(static_cast<std::uint32_t>(tree.size()));
    emit(count.bytes());
    for (const auto& [path, e] : tree.entries()) {
        if (path.size() > 0xffff) fail(ErrorCode::StorageIoError, "path too long: " + path.substr(0, 64));
        emit(entry_header(path, e));
        if (e.kind == EntryKind::Symlink) {
            emit(e.link_target);
        } else if (e.kind == EntryKind::File) {
            if (e.content.is_zeros()) {
                zeros(e.content.size());
            } else {
                e.content.for_each_chunk([&](std::string_view chunk) { emit(chunk); });
            }
        }
    }
}

class HashingFileWriter {
public:
    explicit HashingFileWriter(const fs::path& path) : path_(path) {
        fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
        if (fd_ < 0) io_error("open");
    }
    ~HashingFileWriter() {
        if (fd_ >= 0) ::close(fd_);
    }
    HashingFileWriter(const HashingFileWriter&) = delete;
    HashingFileWriter& operator=(const HashingFileWriter&) = delete;

    void write(std::string_view bytes) {
        hash_.update(bytes);
        size_ += bytes.size();
        buffer_.append(bytes);
        if (buffer_.size() >= kBufferLimit) flush();
    }

    void zeros(std::uint64_t n) {
        static const std::string block(kBufferLimit, '\0');
        for (auto left = n; left > 0;) {
            auto chunk = std::min<std::uint64_t>(left, block.size());
            hash_.update(std::string_view(block).substr(0, static_cast<std::size_t>(chunk)));
            left -= chunk;
        }
        flush();
        if (::lseek(fd_, static_cast<off_t>(n), SEEK_CUR) < 0) io_error("seek");
        size_ += n;
    }

    // Appends the digest of everything written so far as the trailer.
    Digest finish(bool sync) {
        auto digest = hash_.finish();
        buffer_.append(reinterpret_cast<const char*>(digest.data()), digest.size());
        size_ += digest.size();
        flush();
        if (sync && ::fsync(fd_) != 0) io_error("fsync");
        if (::close(fd_) != 0) {
            fd_ = -1;
            io_error("close");
        }
        fd_ = -1;
        return digest;
    }

    std::uint64_t size() const { return size_; }

private:
    void flush() {
        std::size_t done = 0;
        while (done < buffer_.size()) {
            auto n = ::write(fd_, buffer_.data() + done, buffer_.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                io_error("write");
            }
            done += static_cast<std::size_t>(n);
        }
        buffer_.clear();
    }

    [[noreturn]] void io_error(const char* what) {
        fail(ErrorCode::StorageIoError, fmt::format("{} {}: {}", what, path_.string(), std::strerror(errno)));
    }

    fs::path path_;
    int fd_ = -1;
    Sha256 hash_;
    std::string buffer_;
    std::uint64_t size_ = 0;
};

fs::path temp_sibling(const fs::path& dest) {
    static std::atomic<std::uint64_t> counter{0};
    return dest.string() + fmt::format(".tmp.{}.{}", ::getpid(), counter++);
}

json metadata_json(const ImageReference& ref, Timestamp created_at, const std::vector<std::string>& site_mods) {
    return json{{"source_ref", ref.canonical()},
                {"system", ref.system},
                {"created_at", to_seconds(created_at)},
                {"site_mods", site_mods}};
}

class FileReader {
public:
    explicit FileReader(const fs::path& path) { fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC); }
    ~FileReader() {
        if (fd_ >= 0) ::close(fd_);
    }
    FileReader(const FileReader&) = delete;
    FileReader& operator=(const FileReader&) = delete;

    bool is_open() const { return fd_ >= 0; }

    std::uint64_t size() const {
        struct stat st {};
        if (::fstat(fd_, &st) != 0) return 0;
        return static_cast<std::uint64_t>(st.st_size);
    }

    // Exactly n bytes at offset, or nullopt.
    std::optional<std::string> read_at(std::uint64_t offset, std::size_t n) const {
        std::string out(n, '\0');
        std::size_t done = 0;
        while (done < n) {
            auto r = ::pread(fd_, out.data() + done, n - done, static_cast<off_t>(offset + done));
            if (r < 0 && errno == EINTR) continue;
            if (r <= 0) return std::nullopt;
            done += static_cast<std::size_t>(r);
        }
        return out;
    }

    std::optional<Digest> hash_range(std::uint64_t n) const {
        Sha256 h;
        std::string buf(kBufferLimit, '\0');
        std::uint64_t offset = 0;
        while (offset < n) {
            auto want = static_cast<std::size_t>(std::min<std::uint64_t>(buf.size(), n - offset));
            auto r = ::pread(fd_, buf.data(), want, static_cast<off_t>(offset));
            if (r < 0 && errno == EINTR) continue;
            if (r <= 0) return std::nullopt;
            h.update(std::string_view(buf.data(), static_cast<std::size_t>(r)));
            offset += static_cast<std::uint64_t>(r);
        }
        return h.finish();
    }

private:
    int fd_ = -1;
};

struct Header {
    json metadata;
    std::uint64_t table_offset = 0;  // offset of the u32 entry count
};

struct WalkEntry {
    std::string path;
    EntryKind kind;
    std::uint16_t mode;
    std::uint64_t payload_offset;
    std::uint64_t length;
};

struct Walk {
    VerifyResult result;
    Header header;
};

VerifyResult truncated(std::string d) { return VerifyResult::corrupt(CorruptReason::Truncated, std::move(d)); }
VerifyResult malformed(std::string d) { return VerifyResult::corrupt(CorruptReason::Malformed, std::move(d)); }

// Parses magic, version and the metadata block, never reading past body_end.
VerifyResult read_header(const FileReader& in, std::uint64_t body_end, Header& out) {
    if (body_end < 10) return truncated("header cut short");
    auto fixed = in.read_at(0, 10);
    if (!fixed) return VerifyResult::corrupt(CorruptReason::Io, "read failed");
    if (fixed->substr(0, 4) != kMagic) return VerifyResult::corrupt(CorruptReason::BadMagic, "bad magic");
    ByteReader r(std::string_view(*fixed).substr(4));
    auto version = *r.u16();
    if (version != kUdiVersion) {
        return VerifyResult::corrupt(CorruptReason::BadVersion, fmt::format("unsupported version {}", version));
    }
    auto md_len = *r.u32();
    if (10 + static_cast<std::uint64_t>(md_len) > body_end) return truncated("metadata block cut short");
    auto md = in.read_at(10, md_len);
    if (!md) return VerifyResult::corrupt(CorruptReason::Io, "read failed");
    out.metadata = json::parse(*md, nullptr, false);
    const auto& m = out.metadata;
    if (m.is_discarded() || !m.is_object() || !m.contains("source_ref") || !m["source_ref"].is_string() ||
        !m.contains("system") || !m["system"].is_string() || !m.contains("created_at") ||
        !m["created_at"].is_number() || !m.contains("site_mods") || !m["site_mods"].is_array()) {
        return malformed("metadata block is not a valid UDI metadata object");
    }
    out.table_offset = 10 + md_len;
    return VerifyResult::good();
}

// Walks the file table checking bounds and tree invariants. `on_entry` sees
// each entry in order.
template <class OnEntry>
Walk walk_structure(const FileReader& in, std::uint64_t body_end, OnEntry&& on_entry) {
    Walk w;
    w.result = read_header(in, body_end, w.header);
    if (!w.result) return w;
    auto pos = w.header.table_offset;
    if (pos + 4 > body_end) {
        w.result = truncated("entry count cut short");
        return w;
    }
    auto count_bytes = in.read_at(pos, 4);
    if (!count_bytes) {
        w.result = VerifyResult::corrupt(CorruptReason::Io, "read failed");
        return w;
    }
    auto count = *ByteReader(*count_bytes).u32();
    pos += 4;
    std::set<std::string> dirs;
    std::string previous;
    for (std::uint32_t i = 0; i < count; ++i) {
        if (pos + 2 > body_end) {
            w.result = truncated(fmt::format("entry {} cut short", i));
            return w;
        }
        auto plen = *ByteReader(*in.read_at(pos, 2)).u16();
        if (pos + 2 + plen + 11 > body_end) {
            w.result = truncated(fmt::format("entry {} cut short", i));
            return w;
        }
        auto rest = in.read_at(pos + 2, plen + 11u);
        if (!rest) {
            w.result = VerifyResult::corrupt(CorruptReason::Io, "read failed");
            return w;
        }
        ByteReader r(*rest);
        WalkEntry e;
        e.path = std::string(*r.raw(plen));
        auto kind = *r.u8();
        e.mode = *r.u16();
        e.length = *r.u64();
        e.payload_offset = pos + 2 + plen + 11;
        if (e.length > body_end - e.payload_offset) {
            w.result = truncated(fmt::format("payload of entry {} cut short", i));
            return w;
        }
        pos = e.payload_offset + e.length;
        if (kind > 2) {
            w.result = malformed(fmt::format("entry {} has unknown kind {}", i, kind));
            return w;
        }
        e.kind = static_cast<EntryKind>(kind);
        if (!is_normalized(e.path)) {
            w.result = malformed(fmt::format("entry {} path not normalized", i));
            return w;
        }
        if (i == 0) {
            if (e.path != "/" || e.kind != EntryKind::Directory) {
                w.result = malformed("first entry is not the root directory");
                return w;
            }
        } else {
            if (e.path <= previous) {
                w.result = malformed(fmt::format("entry {} out of order", i));
                return w;
            }
            if (dirs.count(parent_path(e.path)) == 0) {
                w.result = malformed(fmt::format("entry {} has no parent directory", i));
                return w;
            }
        }
        if (e.kind == EntryKind::Directory) {
            if (e.length != 0) {
                w.result = malformed(fmt::format("directory entry {} has a payload", i));
                return w;
            }
            dirs.insert(e.path);
        }
        previous = e.path;
        on_entry(e);
    }
    if (count == 0) {
        w.result = malformed("archive has no root entry");
        return w;
    }
    if (pos != body_end) {
        w.result = malformed("unexpected bytes between file table and trailer");
        return w;
    }
    return w;
}

}  // namespace

std::string_view to_string(CorruptReason reason) {
    switch (reason) {
    case CorruptReason::Io: return "io";
    case CorruptReason::Truncated: return "truncated";
    case CorruptReason::BadMagic: return "bad-magic";
    case CorruptReason::BadVersion: return "bad-version";
    case CorruptReason::Checksum: return "checksum";
    case CorruptReason::Malformed: return "malformed";
    }
    return "unknown";
}

void to_json(nlohmann::json& j, const UdiDescriptor& d) {
    j = nlohmann::json{{"path", d.path.string()},
                       {"content_digest", d.content_digest},
                       {"size_bytes", d.size_bytes},
                       {"created_at", to_seconds(d.created_at)},
                       {"source_ref", d.source_ref.canonical()}};
}

UdiDescriptor descriptor_from_json(const nlohmann::json& j, const std::string& system) {
    try {
        UdiDescriptor d;
        d.path = j.at("path").get<std::string>();
        d.content_digest = j.at("content_digest").get<std::string>();
        d.size_bytes = j.at("size_bytes").get<std::uint64_t>();
        d.created_at = timestamp_from_seconds(j.at("created_at").get<double>());
        d.source_ref = ImageReference::parse(j.at("source_ref").get<std::string>(), system);
        return d;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidSpec, std::string("bad UDI descriptor: ") + e.what());
    }
}

UdiDescriptor write_udi(const FileTree& tree, const fs::path& dest, const ImageReference& source_ref,
                        Timestamp created_at, const std::vector<std::string>& site_mods,
                        const WriteOptions& options) {
    auto tmp = temp_sibling(dest);
    UdiDescriptor desc;
    try {
        HashingFileWriter out(tmp);
        ByteWriter head;
        head.raw(kMagic);
        head.u16(kUdiVersion);
        auto md = metadata_json(source_ref, created_at, site_mods).dump();
        head.u32(static_cast<std::uint32_t>(md.size()));
        head.raw(md);
        out.write(head.bytes());
        encode_table(
            tree, [&](std::string_view b) { out.write(b); }, [&](std::uint64_t n) { out.zeros(n); });
        auto digest = out.finish(options.fsync);
        desc.content_digest = to_hex(digest);
        desc.size_bytes = out.size();
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
    std::error_code ec;
    fs::rename(tmp, dest, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(ErrorCode::StorageIoError, "rename to " + dest.string() + " failed");
    }
    desc.path = dest;
    desc.created_at = created_at;
    desc.source_ref = source_ref;
    return desc;
}

VerifyResult verify_udi(const fs::path& path) {
    try {
        FileReader in(path);
        if (!in.is_open()) return VerifyResult::corrupt(CorruptReason::Io, "cannot open " + path.string());
        auto size = in.size();
        auto prefix = in.read_at(0, static_cast<std::size_t>(std::min<std::uint64_t>(size, 4)));
        if (!prefix) return VerifyResult::corrupt(CorruptReason::Io, "read failed");
        if (*prefix != kMagic.substr(0, prefix->size())) {
            return VerifyResult::corrupt(CorruptReason::BadMagic, "bad magic");
        }
        if (size < 10 + 4 + kUdiTrailerSize) return truncated("file shorter than the minimal archive");
        Header header;
        if (auto h = read_header(in, size, header); !h && h.reason != CorruptReason::Truncated &&
                                                    h.reason != CorruptReason::Malformed) {
            return h;
        }
        auto body_end = size - kUdiTrailerSize;
        auto digest = in.hash_range(body_end);
        auto trailer = in.read_at(body_end, kUdiTrailerSize);
        if (!digest || !trailer) return VerifyResult::corrupt(CorruptReason::Io, "read failed");
        bool checksum_ok = std::memcmp(digest->data(), trailer->data(), kUdiTrailerSize) == 0;
        auto walk = walk_structure(in, body_end, [](const WalkEntry&) {});
        if (!checksum_ok) {
            if (!walk.result && walk.result.reason == CorruptReason::Truncated) return walk.result;
            return VerifyResult::corrupt(CorruptReason::Checksum, "trailer does not match archive body");
        }
        if (!walk.result) {
            // A consistent checksum over an inconsistent table is a writer bug
            // or a forgery, never a short file.
            if (walk.result.reason == CorruptReason::Truncated) return malformed(walk.result.detail);
            return walk.result;
        }
        return VerifyResult::good();
    } catch (const std::exception& e) {
        return VerifyResult::corrupt(CorruptReason::Io, e.what());
    }
}

VerifyResult probe_udi(const fs::path& path, const UdiDescriptor& expected) {
    try {
        FileReader in(path);
        if (!in.is_open()) return VerifyResult::corrupt(CorruptReason::Io, "cannot open " + path.string());
        auto size = in.size();
        if (size < expected.size_bytes) return truncated("file shorter than published size");
        if (size != expected.size_bytes) return malformed("file size differs from published size");
        if (size < kUdiTrailerSize) return truncated("file shorter than trailer");
        Header header;
        if (auto h = read_header(in, size - kUdiTrailerSize, header); !h) return h;
        const auto& m = header.metadata;
        if (m["source_ref"].get<std::string>() != expected.source_ref.canonical() ||
            m["system"].get<std::string>() != expected.source_ref.system ||
            timestamp_from_seconds(m["created_at"].get<double>()) != expected.created_at) {
            return malformed("embedded metadata differs from descriptor");
        }
        auto trailer = in.read_at(size - kUdiTrailerSize, kUdiTrailerSize);
        if (!trailer) return VerifyResult::corrupt(CorruptReason::Io, "read failed");
        auto want = digest_from_hex(expected.content_digest);
        if (!want || std::memcmp(want->data(), trailer->data(), kUdiTrailerSize) != 0) {
            return VerifyResult::corrupt(CorruptReason::Checksum, "trailer differs from published digest");
        }
        return VerifyResult::good();
    } catch (const std::exception& e) {
        return VerifyResult::corrupt(CorruptReason::Io, e.what());
    }
}

std::pair<FileTree, UdiDescriptor> read_udi(const fs::path& path, std::uint64_t inline_limit) {
    if (auto v = verify_udi(path); !v) {
        fail(ErrorCode::UdiCorrupt, fmt::format("{} ({}): {}", path.string(), to_string(v.reason), v.detail));
    }
    FileReader in(path);
    auto size = in.size();
    FileTree::Map entries;
    auto walk = walk_structure(in, size - kUdiTrailerSize, [&](const WalkEntry& e) {
        FileEntry fe;
        fe.kind = e.kind;
        fe.mode = e.mode;
        if (e.kind == EntryKind::Symlink) {
            fe.link_target = *in.read_at(e.payload_offset, static_cast<std::size_t>(e.length));
        } else if (e.kind == EntryKind::File) {
            if (e.length <= inline_limit) {
                fe.content = Content::bytes(*in.read_at(e.payload_offset, static_cast<std::size_t>(e.length)));
            } else {
                fe.content = Content::slice(path, e.payload_offset, e.length);
            }
        }
        entries.emplace(e.path, std::move(fe));
    });
    if (!walk.result) fail(ErrorCode::UdiCorrupt, path.string() + ": " + walk.result.detail);
    auto trailer = in.read_at(size - kUdiTrailerSize, kUdiTrailerSize);
    const auto& m = walk.header.metadata;
    UdiDescriptor desc;
    desc.path = path;
    desc.content_digest = to_hex(std::span(reinterpret_cast<const std::uint8_t*>(trailer->data()), trailer->size()));
    desc.size_bytes = size;
    desc.created_at = timestamp_from_seconds(m["created_at"].get<double>());
    desc.source_ref = ImageReference::parse(m["source_ref"].get<std::string>(), m["system"].get<std::string>());
    return {FileTree::from_entries(std::move(entries)), desc};
}

std::string tree_digest(const FileTree& tree) {
    Sha256 h;
    encode_table(
        tree, [&](std::string_view b) { h.update(b); },
        [&](std::uint64_t n) {
            static const std::string block(kBufferLimit, '\0');
            for (auto left = n; left > 0;) {
                auto chunk = std::min<std::uint64_t>(left, block.size());
                h.update(std::string_view(block).substr(0, static_cast<std::size_t>(chunk)));
                left -= chunk;
            }
        });
    return to_hex(h.finish());
}

}  // namespace udi
