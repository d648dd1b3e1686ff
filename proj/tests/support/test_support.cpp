#include "support/test_support.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

namespace udi::test {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    for (int i = 0; i < 100; ++i) {
        auto candidate = fs::temp_directory_path() / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(rng() % 1000000007));
        std::error_code ec;
        if (fs::create_directory(candidate, ec)) {
            path_ = candidate;
            return;
        }
    }
    throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::vector<FileTree> three_layer_image() {
    FileTree base;
    base.put("/bin", FileEntry::dir(0755));
    base.put("/bin/sh", FileEntry::file("#!shell\n", 0755));
    base.put("/etc", FileEntry::dir(0755));
    base.put("/etc/os-release", FileEntry::file("NAME=\"CentOS Linux\"\nVERSION=\"7\"\n", 0644));
    base.put("/etc/motd", FileEntry::file("welcome\n", 0644));
    base.put("/usr", FileEntry::dir(0755));
    base.put("/usr/lib", FileEntry::dir(0755));
    base.put("/usr/lib/libc.so", FileEntry::file(std::string(4096, 'c'), 0755));

    FileTree update;
    update.put("/etc", FileEntry::dir(0755));
    update.put("/etc/.wh.motd", FileEntry::file("", 0644));
    update.put("/usr", FileEntry::dir(0755));
    update.put("/usr/lib", FileEntry::dir(0755));
    update.put("/usr/lib/libm.so", FileEntry::file(std::string(2048, 'm'), 0755));

    FileTree app;
    app.put("/opt", FileEntry::dir(0755));
    app.put("/opt/app", FileEntry::dir(0755));
    app.put("/opt/app/run", FileEntry::file("#!app\nexec mpi_hello\n", 0755));
    app.put("/opt/app/current", FileEntry::symlink("/opt/app/run"));
    return {base, update, app};
}

std::vector<FileTree> sized_image(std::uint64_t size) {
    FileTree layer;
    layer.put("/data", FileEntry::dir(0755));
    FileEntry blob;
    blob.kind = EntryKind::File;
    blob.mode = 0644;
    blob.content = Content::zeros(size);
    layer.put("/data/blob", std::move(blob));
    layer.put("/etc", FileEntry::dir(0755));
    layer.put("/etc/hostname", FileEntry::file("node\n", 0644));
    return {layer};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

}  // namespace udi::test
