#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udi/imagekit/file_tree.hpp"
#include "udi/imagekit/registry.hpp"

namespace udi {

struct FixtureImage {
    std::string ref;  // name:tag
    std::vector<FileTree> layers;
};

/// A handful of small multi-layer images (centos:7, ubuntu:16.04, busybox,
/// pyhpc:1.0) with whiteouts and symlinks, for demos and scenarios.
std::vector<FixtureImage> demo_images();
void publish_demo_images(MemoryRegistry& registry, const std::string& system);

/// Single layer whose bulk is one zero-filled file, so a nominal size costs
/// almost nothing to store.
std::vector<FileTree> sized_image_layers(std::uint64_t bytes);

inline constexpr std::uint64_t kSmallImageBytes = 36'000'000;
inline constexpr std::uint64_t kLargeImageBytes = 1'700'000'000;

}  // namespace udi
