#include "udi/imagekit/layer.hpp"

#include <fmt/core.h>

#include "udi/common/bytes.hpp"
#include "udi/common/error.hpp"

namespace udi {

namespace {

constexpr std::string_view kLayerMagic = "LYR1";

[[noreturn]] void malformed(const std::string& what) { fail(ErrorCode::MalformedLayer, what); }

}  // namespace

std::string encode_layer(const FileTree& layer) {
    ByteWriter w;
    w.raw(kLayerMagic);
    std::uint32_t count = 0;
    for (const auto& [path, e] : layer.entries()) {
        if (path != "/" || e.mode != 0755) ++count;
    }
    w.u32(count);
    for (const auto& [path, e] : layer.entries()) {
        if (path == "/" && e.mode == 0755) continue;
        w.u16(static_cast<std::uint16_t>(path.size()));
        w.raw(path);
        w.u8(static_cast<std::uint8_t>(e.kind));
        w.u16(e.mode);
        bool zero = e.kind == EntryKind::File && e.content.is_zeros();
        w.u8(zero ? 1 : 0);
        if (e.kind == EntryKind::Symlink) {
            w.u64(e.link_target.size());
            w.raw(e.link_target);
        } else if (e.kind == EntryKind::File) {
            w.u64(e.content.size());
            if (!zero) w.raw(e.content.materialize());
        } else {
            w.u64(0);
        }
    }
    return w.take();
}

FileTree decode_layer(std::string_view blob) {
    ByteReader r(blob);
    auto magic = r.raw(4);
    if (!magic || *magic != kLayerMagic) malformed("bad layer magic");
    auto count = r.u32();
    if (!count) malformed("truncated layer header");
    FileTree::Map entries;
    entries.emplace("/", FileEntry::dir(0755));
    std::string previous;
    for (std::uint32_t i = 0; i < *count; ++i) {
        auto plen = r.u16();
        auto path = plen ? r.raw(*plen) : std::nullopt;
        auto kind = r.u8();
        auto mode = r.u16();
        auto flags = r.u8();
        auto len = r.u64();
        if (!path || !kind || !mode || !flags || !len) malformed("truncated layer entry");
        if (*kind > 2) malformed(fmt::format("unknown entry kind {}", *kind));
        std::string p(*path);
        if (!is_normalized(p)) malformed("path not normalized: '" + p + "'");
        if (i > 0 && p <= previous) malformed("layer entries out of order at '" + p + "'");
        previous = p;
        FileEntry e;
        e.kind = static_cast<EntryKind>(*kind);
        e.mode = *mode;
        bool zero = (*flags & 1) != 0;
        if (zero && e.kind != EntryKind::File) malformed("zero-fill flag on non-file '" + p + "'");
        if (e.kind == EntryKind::Directory) {
            if (*len != 0) malformed("directory with payload '" + p + "'");
        } else if (zero) {
            e.content = Content::zeros(*len);
        } else {
            auto payload = r.raw(*len);
            if (!payload) malformed("truncated payload for '" + p + "'");
            if (e.kind == EntryKind::File) {
                e.content = Content::bytes(std::string(*payload));
            } else {
                e.link_target = std::string(*payload);
            }
        }
        entries[p] = std::move(e);
    }
    if (!r.at_end()) malformed("trailing bytes after layer entries");
    return FileTree::from_entries(std::move(entries));
}

std::uint64_t logical_size(const FileTree& tree) {
    std::uint64_t total = 0;
    for (const auto& [path, e] : tree.entries()) {
        if (e.kind == EntryKind::File) total += e.content.size();
    }
    return total;
}

bool is_whiteout(std::string_view path) {
    auto slash = path.rfind('/');
    auto base = slash == std::string_view::npos ? path : path.substr(slash + 1);
    return base.substr(0, kWhiteoutPrefix.size()) == kWhiteoutPrefix;
}

FileTree flatten(const std::vector<FileTree>& layers) {
    if (layers.empty()) fail(ErrorCode::EmptyLayerList, "flatten needs at least one layer");
    FileTree result;
    for (std::size_t index = 0; index < layers.size(); ++index) {
        const auto& layer = layers[index];
        try {
            layer.check_invariants();
        } catch (const Error& e) {
            malformed(fmt::format("layer {}: {}", index, e.what()));
        }
        // Whiteouts only hide what lies below this layer, so they go first.
        for (const auto& [path, entry] : layer.entries()) {
            if (!is_whiteout(path)) continue;
            auto name = base_name(path).substr(kWhiteoutPrefix.size());
            if (name.empty() || name == "." || name == "..") {
                malformed(fmt::format("layer {}: bad whiteout '{}'", index, path));
            }
            if (entry.kind == EntryKind::Directory) {
                malformed(fmt::format("layer {}: whiteout '{}' is a directory", index, path));
            }
            result.remove(join_path(parent_path(path), name));
        }
        for (const auto& [path, entry] : layer.entries()) {
            if (is_whiteout(path)) continue;
            const auto* existing = result.find(path);
            if (existing != nullptr && existing->kind == EntryKind::Directory &&
                entry.kind == EntryKind::Directory) {
                auto merged = *existing;
                merged.mode = entry.mode;
                result.put(path, std::move(merged));
                continue;
            }
            if (existing != nullptr && path != "/") result.remove(path);
            result.put(path, entry);
        }
    }
    return result;
}

}  // namespace udi
