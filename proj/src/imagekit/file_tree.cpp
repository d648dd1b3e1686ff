#include "udi/imagekit/file_tree.hpp"

#include <algorithm>
#include <fstream>
#include <vector>

#include "udi/common/error.hpp"

namespace udi {

namespace {

constexpr std::size_t kChunk = 1 << 20;

// Reads up to `n` bytes at `offset` of the content.
std::string read_range(const Content& c, std::uint64_t offset, std::size_t n);

}  // namespace

std::uint64_t Content::size() const {
    return std::visit(
        [](const auto& r) -> std::uint64_t {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return r.size();
            } else {
                return r.size;
            }
        },
        repr_);
}

void Content::for_each_chunk(const std::function<void(std::string_view)>& sink) const {
    if (const auto* s = std::get_if<std::string>(&repr_)) {
        for (std::size_t off = 0; off < s->size(); off += kChunk) {
            sink(std::string_view(*s).substr(off, kChunk));
        }
        return;
    }
    if (const auto* z = std::get_if<Zeros>(&repr_)) {
        static const std::string zero_block(kChunk, '\0');
        for (std::uint64_t left = z->size; left > 0;) {
            auto n = static_cast<std::size_t>(std::min<std::uint64_t>(left, kChunk));
            sink(std::string_view(zero_block).substr(0, n));
            left -= n;
        }
        return;
    }
    const auto& sl = std::get<Slice>(repr_);
    std::ifstream in(sl.file, std::ios::binary);
    if (!in) fail(ErrorCode::StorageIoError, "cannot open " + sl.file.string());
    in.seekg(static_cast<std::streamoff>(sl.offset));
    std::vector<char> buf(kChunk);
    for (std::uint64_t left = sl.size; left > 0;) {
        auto n = static_cast<std::size_t>(std::min<std::uint64_t>(left, kChunk));
        in.read(buf.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) {
            fail(ErrorCode::StorageIoError, "short read from " + sl.file.string());
        }
        sink(std::string_view(buf.data(), n));
        left -= n;
    }
}

std::string Content::materialize() const {
    if (const auto* s = std::get_if<std::string>(&repr_)) return *s;
    std::string out;
    out.reserve(static_cast<std::size_t>(size()));
    for_each_chunk([&](std::string_view chunk) { out.append(chunk); });
    return out;
}

namespace {

std::string read_range(const Content& c, std::uint64_t offset, std::size_t n) {
    std::string out;
    std::uint64_t pos = 0;
    // Content is streamed from the start; slices are only compared in tests
    // and round-trip checks, where a sequential scan is what we want anyway.
    c.for_each_chunk([&](std::string_view chunk) {
        auto end = pos + chunk.size();
        if (end > offset && pos < offset + n) {
            auto from = offset > pos ? offset - pos : 0;
            auto to = std::min<std::uint64_t>(chunk.size(), offset + n - pos);
            out.append(chunk.substr(from, to - from));
        }
        pos = end;
    });
    return out;
}

}  // namespace

bool operator==(const Content& a, const Content& b) {
    if (a.size() != b.size()) return false;
    if (a.is_inline() && b.is_inline()) return std::get<std::string>(a.repr_) == std::get<std::string>(b.repr_);
    if (a.is_zeros() && b.is_zeros()) return true;
    if (a.size() <= kChunk) return a.materialize() == b.materialize();
    // Large mixed representations: compare one side's chunks against the
    // other, reading the second side lazily.
    bool equal = true;
    std::uint64_t pos = 0;
    a.for_each_chunk([&](std::string_view chunk) {
        if (!equal) return;
        if (read_range(b, pos, chunk.size()) != chunk) equal = false;
        pos += chunk.size();
    });
    return equal;
}

std::string_view to_string(EntryKind kind) {
    switch (kind) {
    case EntryKind::File: return "file";
    case EntryKind::Directory: return "dir";
    case EntryKind::Symlink: return "symlink";
    }
    return "unknown";
}

FileEntry FileEntry::file(std::string data, std::uint16_t mode) {
    FileEntry e;
    e.kind = EntryKind::File;
    e.mode = mode;
    e.content = Content::bytes(std::move(data));
    return e;
}

FileEntry FileEntry::dir(std::uint16_t mode) {
    FileEntry e;
    e.kind = EntryKind::Directory;
    e.mode = mode;
    return e;
}

FileEntry FileEntry::symlink(std::string target) {
    FileEntry e;
    e.kind = EntryKind::Symlink;
    e.mode = 0777;
    e.link_target = std::move(target);
    return e;
}

bool operator==(const FileEntry& a, const FileEntry& b) {
    return a.kind == b.kind && a.mode == b.mode && a.link_target == b.link_target && a.content == b.content;
}

std::optional<std::string> normalize_path(std::string_view path) {
    std::vector<std::string_view> parts;
    std::size_t i = 0;
    while (i <= path.size()) {
        auto next = path.find('/', i);
        if (next == std::string_view::npos) next = path.size();
        auto seg = path.substr(i, next - i);
        if (seg == "..") return std::nullopt;
        if (!seg.empty() && seg != ".") parts.push_back(seg);
        i = next + 1;
    }
    std::string out;
    for (auto seg : parts) {
        out.push_back('/');
        out.append(seg);
    }
    return out.empty() ? std::string("/") : out;
}

bool is_normalized(std::string_view path) {
    auto n = normalize_path(path);
    return n && *n == path;
}

std::string parent_path(std::string_view path) {
    auto slash = path.rfind('/');
    if (slash == 0 || slash == std::string_view::npos) return "/";
    return std::string(path.substr(0, slash));
}

std::string base_name(std::string_view path) {
    auto slash = path.rfind('/');
    return std::string(slash == std::string_view::npos ? path : path.substr(slash + 1));
}

std::string join_path(std::string_view dir, std::string_view name) {
    if (dir == "/") return "/" + std::string(name);
    return std::string(dir) + "/" + std::string(name);
}

bool is_within(std::string_view path, std::string_view ancestor) {
    if (ancestor == "/") return true;
    if (path.size() < ancestor.size() || path.substr(0, ancestor.size()) != ancestor) return false;
    return path.size() == ancestor.size() || path[ancestor.size()] == '/';
}

FileTree::FileTree() { entries_.emplace("/", FileEntry::dir(0755)); }

void FileTree::put(const std::string& path, FileEntry entry) {
    if (!is_normalized(path)) fail(ErrorCode::MalformedLayer, "path not normalized: '" + path + "'");
    if (path == "/") {
        if (entry.kind != EntryKind::Directory) fail(ErrorCode::MalformedLayer, "root must be a directory");
        entries_["/"].mode = entry.mode;
        return;
    }
    auto parent = find(parent_path(path));
    if (parent == nullptr || parent->kind != EntryKind::Directory) {
        fail(ErrorCode::MalformedLayer, "parent of '" + path + "' is not a directory");
    }
    auto it = entries_.find(path);
    if (it != entries_.end() && it->second.kind == EntryKind::Directory && entry.kind != EntryKind::Directory) {
        remove(path);
    }
    entries_[path] = std::move(entry);
}

void FileTree::put_with_parents(const std::string& path, FileEntry entry) {
    if (!is_normalized(path)) fail(ErrorCode::MalformedLayer, "path not normalized: '" + path + "'");
    std::vector<std::string> missing;
    for (auto p = parent_path(path); !contains(p); p = parent_path(p)) missing.push_back(p);
    for (auto it = missing.rbegin(); it != missing.rend(); ++it) put(*it, FileEntry::dir(0755));
    put(path, std::move(entry));
}

bool FileTree::remove(const std::string& path) {
    if (path == "/") fail(ErrorCode::ModConflict, "cannot remove the root directory");
    if (!contains(path)) return false;
    // Descendants of "/a" are exactly the keys in ["/a/", "/a0"): '0' is the
    // byte after '/'.
    auto first_child = entries_.lower_bound(path + "/");
    auto last_child = entries_.lower_bound(path + "0");  // '0' follows '/'
    entries_.erase(first_child, last_child);
    entries_.erase(path);
    return true;
}

const FileEntry* FileTree::find(const std::string& path) const {
    auto it = entries_.find(path);
    return it == entries_.end() ? nullptr : &it->second;
}

void FileTree::check_invariants() const {
    auto root = find("/");
    if (root == nullptr || root->kind != EntryKind::Directory) fail(ErrorCode::MalformedLayer, "missing root");
    for (const auto& [path, entry] : entries_) {
        if (!is_normalized(path)) fail(ErrorCode::MalformedLayer, "path not normalized: '" + path + "'");
        if (path != "/") {
            auto parent = find(parent_path(path));
            if (parent == nullptr || parent->kind != EntryKind::Directory) {
                fail(ErrorCode::MalformedLayer, "parent of '" + path + "' is not a directory");
            }
        }
        if (entry.kind != EntryKind::File && entry.content.size() != 0) {
            fail(ErrorCode::MalformedLayer, "non-file '" + path + "' carries content");
        }
        if (entry.kind != EntryKind::Symlink && !entry.link_target.empty()) {
            fail(ErrorCode::MalformedLayer, "non-symlink '" + path + "' carries a link target");
        }
    }
}

FileTree FileTree::from_entries(Map entries) {
    FileTree tree;
    tree.entries_ = std::move(entries);
    tree.check_invariants();
    return tree;
}

}  // namespace udi
