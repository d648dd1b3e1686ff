#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "udi/imagekit/file_tree.hpp"

namespace udi::test {

// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "udi");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// A small three-layer image: base system, an update that whites out one
/// file, and an application layer.
std::vector<FileTree> three_layer_image();

/// One layer holding a zero-filled file of `size` bytes plus a few small files.
std::vector<FileTree> sized_image(std::uint64_t size);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& bytes);

}  // namespace udi::test
