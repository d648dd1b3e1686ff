#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "udi/imagekit/file_tree.hpp"

namespace udi {

// Layer blob encoding used by the fake registry:
//   "LYR1" | u32 count | per entry: u16 path len, path, u8 kind, u16 mode,
//   u8 flags (bit 0: zero-filled), u64 length, payload (absent when zero-filled)
// Entries appear in bytewise path order; the root is implicit unless its mode
// differs from 0755.

std::string encode_layer(const FileTree& layer);
/// Throws MalformedLayer on any structural problem.
FileTree decode_layer(std::string_view blob);

/// Logical (unpacked) size of a layer: the sum of its file content sizes.
std::uint64_t logical_size(const FileTree& tree);

inline constexpr std::string_view kWhiteoutPrefix = ".wh.";

bool is_whiteout(std::string_view path);

/// Applies layers lower-to-upper. Later layers override earlier ones and a
/// `.wh.<name>` entry removes `<name>` (with its subtree) from the layers
/// below; the marker itself never appears in the result.
FileTree flatten(const std::vector<FileTree>& layers);

}  // namespace udi
