#include "udi/clustersim/fixtures.hpp"

#include "udi/imagekit/image_reference.hpp"

namespace udi {

namespace {

FileTree os_base(const std::string& name, const std::string& version) {
    FileTree t;
    t.put_with_parents("/bin/sh", FileEntry::file("#!/bin/sh shim\n", 0755));
    t.put_with_parents("/etc/os-release", FileEntry::file("NAME=\"" + name + "\"\nVERSION=\"" + version + "\"\n"));
    t.put_with_parents("/etc/motd", FileEntry::file("Welcome to " + name + "\n"));
    t.put_with_parents("/usr/lib/libc.so.6", FileEntry::file(std::string(8192, '\x7f'), 0755));
    t.put("/tmp", FileEntry::dir(01777));
    return t;
}

}  // namespace

std::vector<FixtureImage> demo_images() {
    std::vector<FixtureImage> out;

    FileTree updates;
    updates.put_with_parents("/etc/.wh.motd", FileEntry::file(""));
    updates.put_with_parents("/usr/lib/libm.so.6", FileEntry::file(std::string(4096, 'm'), 0755));
    FileTree app;
    app.put_with_parents("/opt/app/bin/hello", FileEntry::file("#!/bin/sh\necho hello from the container\n", 0755));
    app.put("/opt/app/current", FileEntry::symlink("/opt/app/bin"));
    out.push_back({"centos:7", {os_base("CentOS Linux", "7"), updates, app}});

    FileTree ubuntu_extra;
    ubuntu_extra.put_with_parents("/usr/bin/python3", FileEntry::file("python3 stub\n", 0755));
    out.push_back({"ubuntu:16.04", {os_base("Ubuntu", "16.04"), ubuntu_extra}});

    FileTree busybox;
    busybox.put_with_parents("/bin/busybox", FileEntry::file(std::string(1024, 'b'), 0755));
    busybox.put("/bin/sh", FileEntry::symlink("/bin/busybox"));
    out.push_back({"busybox:latest", {busybox}});

    FileTree py;
    py.put_with_parents("/opt/pyhpc/lib/mpi4py.so", FileEntry::file(std::string(16384, 'p'), 0755));
    py.put_with_parents("/opt/pyhpc/run.py", FileEntry::file("from mpi4py import MPI\n"));
    out.push_back({"pyhpc:1.0", {os_base("CentOS Linux", "7"), py}});
    return out;
}

void publish_demo_images(MemoryRegistry& registry, const std::string& system) {
    for (const auto& img : demo_images()) registry.publish(ImageReference::parse(img.ref, system), img.layers);
}

std::vector<FileTree> sized_image_layers(std::uint64_t bytes) {
    FileTree layer;
    FileEntry blob;
    blob.kind = EntryKind::File;
    blob.mode = 0644;
    blob.content = Content::zeros(bytes);
    layer.put_with_parents("/data/payload.bin", std::move(blob));
    layer.put_with_parents("/etc/hostname", FileEntry::file("compute\n"));
    return {layer};
}

}  // namespace udi
