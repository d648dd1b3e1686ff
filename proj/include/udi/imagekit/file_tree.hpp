#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace udi {

/// Bytes of a regular file. Small content lives inline; large content can be
/// an all-zero run (synthetic images) or a slice of an archive on disk, so a
/// multi-gigabyte tree costs only its metadata in memory.
class Content {
public:
    struct Zeros {
        std::uint64_t size;
    };
    struct Slice {
        std::filesystem::path file;
        std::uint64_t offset;
        std::uint64_t size;
    };

    Content() = default;
    static Content bytes(std::string data) { return Content(std::move(data)); }
    static Content zeros(std::uint64_t size) { return Content(Zeros{size}); }
    static Content slice(std::filesystem::path file, std::uint64_t offset, std::uint64_t size) {
        return Content(Slice{std::move(file), offset, size});
    }

    std::uint64_t size() const;
    bool is_inline() const { return std::holds_alternative<std::string>(repr_); }
    bool is_zeros() const { return std::holds_alternative<Zeros>(repr_); }
    bool is_slice() const { return std::holds_alternative<Slice>(repr_); }

    /// Feeds the content to `sink` in chunks of at most 1 MiB.
    void for_each_chunk(const std::function<void(std::string_view)>& sink) const;
    /// Whole content as a string; only sensible for small files.
    std::string materialize() const;

    /// Byte-wise equality regardless of representation.
    friend bool operator==(const Content& a, const Content& b);

private:
    template <class T>
    explicit Content(T repr) : repr_(std::move(repr)) {}

    std::variant<std::string, Zeros, Slice> repr_;
};

enum class EntryKind : std::uint8_t { File = 0, Directory = 1, Symlink = 2 };

std::string_view to_string(EntryKind kind);

struct FileEntry {
    EntryKind kind = EntryKind::File;
    std::uint16_t mode = 0644;
    Content content;          // File only
    std::string link_target;  // Symlink only

    static FileEntry file(std::string data, std::uint16_t mode = 0644);
    static FileEntry dir(std::uint16_t mode = 0755);
    static FileEntry symlink(std::string target);

    friend bool operator==(const FileEntry& a, const FileEntry& b);
};

/// Normalised absolute path: leading '/', no empty, '.' or '..' segments, no
/// trailing separator. Returns nullopt when the input cannot be normalised
/// without resolving '..'.
std::optional<std::string> normalize_path(std::string_view path);
bool is_normalized(std::string_view path);
std::string parent_path(std::string_view path);
std::string base_name(std::string_view path);
std::string join_path(std::string_view dir, std::string_view name);
/// True when `path` equals `ancestor` or lies underneath it.
bool is_within(std::string_view path, std::string_view ancestor);

/// A filesystem image keyed by normalised path. The root "/" always exists as
/// a directory and every other entry's parent is a directory.
class FileTree {
public:
    using Map = std::map<std::string, FileEntry>;

    FileTree();

    /// Inserts or replaces `path`; the parent must already be a directory.
    /// Replacing a directory with a non-directory drops its subtree.
    void put(const std::string& path, FileEntry entry);
    /// Like put, creating missing parents as 0755 directories.
    void put_with_parents(const std::string& path, FileEntry entry);
    /// Removes `path` and everything under it. Returns false if absent.
    bool remove(const std::string& path);

    const FileEntry* find(const std::string& path) const;
    bool contains(const std::string& path) const { return entries_.count(path) != 0; }
    std::size_t size() const { return entries_.size(); }
    const Map& entries() const { return entries_; }

    /// Throws MalformedLayer describing the first violated invariant.
    void check_invariants() const;

    /// Builds a tree from raw entries, validating every invariant.
    static FileTree from_entries(Map entries);

    friend bool operator==(const FileTree& a, const FileTree& b) { return a.entries_ == b.entries_; }

private:
    Map entries_;
};

}  // namespace udi
