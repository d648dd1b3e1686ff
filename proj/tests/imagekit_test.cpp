#include <doctest.h>

#include <random>

#include "support/properties.hpp"
#include "support/test_support.hpp"
#include "udi/common/crypto.hpp"
#include "udi/common/error.hpp"
#include "udi/imagekit/layer.hpp"
#include "udi/imagekit/registry.hpp"
#include "udi/imagekit/registry_http.hpp"
#include "udi/imagekit/site_config.hpp"
#include "udi/imagekit/udi_format.hpp"

using namespace udi;
using namespace udi::test;
namespace fs = std::filesystem;

namespace {

ImageReference ref_of(const std::string& text) { return ImageReference::parse(text, "cluster"); }

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an udi::Error");
    return ErrorCode::InvalidSpec;
}

const Timestamp kCreated = timestamp_from_seconds(1'700'000'000);

}  // namespace

// ---------------------------------------------------------------- flatten

TEST_CASE("upper layer wins and whiteouts hide lower entries") {
    FileTree lower;
    lower.put_with_parents("/etc/issue", FileEntry::file("lower"));
    lower.put_with_parents("/a/foo/bar", FileEntry::file("x"));
    lower.put_with_parents("/a/keep", FileEntry::file("k"));
    FileTree upper;
    upper.put_with_parents("/etc/issue", FileEntry::file("upper"));
    upper.put_with_parents("/a/.wh.foo", FileEntry::file(""));

    auto flat = flatten({lower, upper});
    CHECK(flat.find("/etc/issue")->content.materialize() == "upper");
    CHECK_FALSE(flat.contains("/a/foo"));
    CHECK_FALSE(flat.contains("/a/foo/bar"));
    CHECK_FALSE(flat.contains("/a/.wh.foo"));
    CHECK(flat.contains("/a/keep"));
    CHECK_NOTHROW(flat.check_invariants());
}

TEST_CASE("a whiteout does not hide an entry re-added by the same layer") {
    FileTree lower;
    lower.put_with_parents("/d/old", FileEntry::file("o"));
    FileTree upper;
    upper.put_with_parents("/.wh.d", FileEntry::file(""));
    upper.put_with_parents("/d/new", FileEntry::file("n"));
    auto flat = flatten({lower, upper});
    CHECK(flat.contains("/d/new"));
    CHECK_FALSE(flat.contains("/d/old"));
}

TEST_CASE("flatten rejects empty stacks and bad whiteouts") {
    CHECK(code_of([] { flatten({}); }) == ErrorCode::EmptyLayerList);
    FileTree dir_marker;
    dir_marker.put("/.wh.x", FileEntry::dir());
    CHECK(code_of([&] { flatten({dir_marker}); }) == ErrorCode::MalformedLayer);
    FileTree bare;
    bare.put("/.wh.", FileEntry::file(""));
    CHECK(code_of([&] { flatten({bare}); }) == ErrorCode::MalformedLayer);
}

TEST_CASE("flatten matches sequential materialisation on random stacks") {
    std::mt19937_64 rng(20240611);
    int compared = 0;
    for (int round = 0; round < 300; ++round) {
        std::vector<FileTree> layers;
        int depth = 1 + static_cast<int>(rng() % 5);
        for (int i = 0; i < depth; ++i) layers.push_back(random_layer(rng, i > 0));
        auto got = flatten(layers);
        auto want = oracle_flatten(layers);
        INFO("round " << round << ": " << describe_difference(got, want));
        CHECK(got == want);
        CHECK_NOTHROW(got.check_invariants());
        ++compared;
    }
    CHECK(compared == 300);
}

// ---------------------------------------------------------------- layers

TEST_CASE("layer blobs round-trip, including sparse content and root mode") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        auto tree = random_tree(rng);
        if (i % 3 == 0) tree.put("/", FileEntry::dir(0700));
        auto blob = encode_layer(tree);
        CHECK(decode_layer(blob) == tree);
        CHECK(encode_layer(decode_layer(blob)) == blob);
    }
    FileTree big;
    FileEntry zeros;
    zeros.content = Content::zeros(1'700'000'000);
    big.put("/blob", zeros);
    auto blob = encode_layer(big);
    CHECK(blob.size() < 1024);
    CHECK(logical_size(decode_layer(blob)) == 1'700'000'000);
}

TEST_CASE("decode_layer rejects damaged blobs without crashing") {
    auto blob = encode_layer(udi::test::three_layer_image()[0]);
    CHECK(code_of([&] { decode_layer(""); }) == ErrorCode::MalformedLayer);
    CHECK(code_of([&] { decode_layer("XXXX" + blob.substr(4)); }) == ErrorCode::MalformedLayer);
    for (std::size_t len = 0; len < blob.size(); ++len) {
        CHECK(code_of([&] { decode_layer(std::string_view(blob).substr(0, len)); }) == ErrorCode::MalformedLayer);
    }
    CHECK(code_of([&] { decode_layer(blob + "x"); }) == ErrorCode::MalformedLayer);
}

// ---------------------------------------------------------------- UDI archive

TEST_CASE("write then read is the identity on random trees, and archives are deterministic") {
    TempDir dir("udi-rt");
    std::mt19937_64 rng(99);
    for (int i = 0; i < 200; ++i) {
        auto tree = random_tree(rng);
        auto a = dir / "a.udi";
        auto b = dir / "b.udi";
        auto desc = write_udi(tree, a, ref_of("img:1"), kCreated, {"make_dir /scratch"}, {false});
        write_udi(tree, b, ref_of("img:1"), kCreated, {"make_dir /scratch"}, {false});
        REQUIRE(udi::test::read_file(a) == udi::test::read_file(b));
        REQUIRE(verify_udi(a));
        auto [back, read_desc] = read_udi(a);
        CHECK(back == tree);
        CHECK(read_desc.content_digest == desc.content_digest);
        CHECK(read_desc.size_bytes == fs::file_size(a));
        CHECK(read_desc.source_ref == ref_of("img:1"));
        CHECK(read_desc.created_at == kCreated);
        CHECK(probe_udi(a, desc));
    }
}

TEST_CASE("descriptor digest covers every byte before the trailer") {
    TempDir dir("udi-digest");
    auto p = dir / "x.udi";
    auto desc = write_udi(udi::test::three_layer_image()[2], p, ref_of("img:1"), kCreated, {}, {false});
    auto bytes = udi::test::read_file(p);
    auto body = bytes.substr(0, bytes.size() - kUdiTrailerSize);
    CHECK(desc.content_digest == to_hex(sha256(body)));
    CHECK(bytes.substr(bytes.size() - kUdiTrailerSize) == std::string(reinterpret_cast<const char*>(sha256(body).data()), 32));
    CHECK(bytes.substr(0, 4) == "UDI1");
    CHECK(static_cast<std::uint8_t>(bytes[4]) == kUdiVersion);
    CHECK(bytes[5] == 0);
}

TEST_CASE("a root-only tree is a valid minimal archive") {
    TempDir dir("udi-min");
    auto p = dir / "min.udi";
    write_udi(FileTree{}, p, ref_of("empty:1"), kCreated, {}, {false});
    CHECK(verify_udi(p));
    auto [tree, desc] = read_udi(p);
    CHECK(tree == FileTree{});
    CHECK(tree.size() == 1);
}

TEST_CASE("large sparse trees read back as slices") {
    TempDir dir("udi-big");
    auto p = dir / "big.udi";
    auto image = flatten(udi::test::sized_image(1'700'000'000));
    write_udi(image, p, ref_of("big:1"), kCreated, {}, {false});
    REQUIRE(verify_udi(p));
    auto [tree, desc] = read_udi(p);
    CHECK(logical_size(tree) == logical_size(image));
    bool any_slice = false;
    for (const auto& [path, e] : tree.entries()) any_slice = any_slice || (e.kind == EntryKind::File && e.content.is_slice());
    CHECK(any_slice);
    CHECK(tree == image);
}

TEST_CASE("every truncation and every single-byte change of a small archive is rejected") {
    TempDir dir("udi-corrupt");
    std::mt19937_64 rng(5);
    int archives = 0;
    while (archives < 12) {
        auto tree = random_tree(rng);
        auto p = dir / "c.udi";
        write_udi(tree, p, ref_of("img:1"), kCreated, {}, {false});
        auto good = udi::test::read_file(p);
        if (good.size() > 4096) continue;
        ++archives;

        int accepted = 0;
        for (std::uint64_t pos = 0; pos < good.size(); ++pos) {
            auto mask = static_cast<std::uint8_t>(1 + rng() % 255);
            flip_byte(p, pos, mask);
            VerifyResult r;
            CHECK_NOTHROW(r = verify_udi(p));
            if (r.ok) ++accepted;
            flip_byte(p, pos, mask);
        }
        CHECK(accepted == 0);

        auto t = dir / "t.udi";
        int truncated_ok = 0;
        for (std::size_t len = 0; len < good.size(); ++len) {
            udi::test::write_file(t, good.substr(0, len));
            VerifyResult r;
            CHECK_NOTHROW(r = verify_udi(t));
            if (r.ok) ++truncated_ok;
        }
        CHECK(truncated_ok == 0);
        REQUIRE(verify_udi(p));
    }
}

TEST_CASE("sampled single-byte changes of a larger archive are rejected") {
    TempDir dir("udi-corrupt-big");
    auto p = dir / "c.udi";
    FileTree tree;
    tree.put_with_parents("/data/blob", FileEntry::file(std::string(200'000, 'q')));
    tree.put_with_parents("/data/more", FileEntry::file(std::string(50'000, 'r')));
    write_udi(tree, p, ref_of("img:1"), kCreated, {}, {false});
    REQUIRE(fs::file_size(p) > 4096);
    std::mt19937_64 rng(11);
    CorruptionTally tally;
    corrupt_archive(p, rng, 1000, tally);
    CHECK(tally.mutations == 1000);
    CHECK(tally.truncations > 100);
    CHECK(tally.accepted == 0);
    CHECK(tally.threw == 0);
    CHECK(verify_udi(p));
}

TEST_CASE("verify reports the reason") {
    TempDir dir("udi-reason");
    auto p = dir / "x.udi";
    write_udi(udi::test::three_layer_image()[0], p, ref_of("img:1"), kCreated, {}, {false});
    auto good = udi::test::read_file(p);

    udi::test::write_file(p, good.substr(0, good.size() - 1));
    CHECK(verify_udi(p).reason == CorruptReason::Truncated);

    auto body_flip = good;
    body_flip[good.size() / 2] ^= 0x01;
    udi::test::write_file(p, body_flip);
    CHECK(verify_udi(p).reason == CorruptReason::Checksum);

    auto magic = good;
    magic[0] = 'X';
    udi::test::write_file(p, magic);
    CHECK(verify_udi(p).reason == CorruptReason::BadMagic);

    CHECK(verify_udi(dir / "absent.udi").reason == CorruptReason::Io);
    CHECK(code_of([&] { read_udi(p); }) == ErrorCode::UdiCorrupt);
}

TEST_CASE("verify never throws on arbitrary bytes") {
    TempDir dir("udi-fuzz");
    auto p = dir / "junk";
    std::mt19937_64 rng(3);
    for (int i = 0; i < 500; ++i) {
        auto junk = random_bytes(rng, 300);
        if (i % 2 == 0) junk = "UDI1" + junk;
        udi::test::write_file(p, junk);
        VerifyResult r;
        CHECK_NOTHROW(r = verify_udi(p));
        CHECK_FALSE(r.ok);
    }
}

TEST_CASE("probe catches a file that differs from its descriptor") {
    TempDir dir("udi-probe");
    auto p = dir / "x.udi";
    auto desc = write_udi(udi::test::three_layer_image()[0], p, ref_of("img:1"), kCreated, {}, {false});
    CHECK(probe_udi(p, desc));
    auto bytes = udi::test::read_file(p);
    udi::test::write_file(p, bytes.substr(0, bytes.size() - 3));
    CHECK_FALSE(probe_udi(p, desc));
    auto other = desc;
    other.content_digest = std::string(64, '0');
    udi::test::write_file(p, bytes);
    CHECK_FALSE(probe_udi(p, other));
}

TEST_CASE("an unwritable destination is a storage error") {
    TempDir dir("udi-io");
    udi::test::write_file(dir / "file", "x");
    CHECK(code_of([&] { write_udi(FileTree{}, dir / "file" / "sub.udi", ref_of("img:1"), kCreated); }) ==
          ErrorCode::StorageIoError);
}

// ---------------------------------------------------------------- site mods

TEST_CASE("site modifications") {
    FileTree base = flatten(udi::test::three_layer_image());
    SiteConfig site;
    site.inject_file("/etc/udi-release", "bw").make_dir("/scratch").append_env("UDI", "1");
    auto tree = apply_site_mods(base, site);
    CHECK(tree.find("/etc/udi-release")->content.materialize() == "bw");
    CHECK(tree.find("/scratch")->kind == EntryKind::Directory);
    CHECK(tree.find("/scratch")->mode == 0755);
    CHECK(tree.find(std::string(kEnvironmentFile))->content.materialize().find("UDI=1\n") != std::string::npos);

    SiteConfig deep;
    deep.inject_file("/opt/site/bin/tool", "x");
    CHECK(apply_site_mods(base, deep).find("/opt/site")->kind == EntryKind::Directory);

    SiteConfig absent;
    absent.remove_path("/no/such/path");
    CHECK(apply_site_mods(base, absent) == base);

    SiteConfig over_dir;
    over_dir.inject_file("/etc", "x");
    CHECK(code_of([&] { apply_site_mods(base, over_dir); }) == ErrorCode::ModConflict);
    SiteConfig under_file;
    under_file.inject_file("/etc/udi-release", "a").make_dir("/etc/udi-release/d");
    CHECK(code_of([&] { apply_site_mods(base, under_file); }) == ErrorCode::ModConflict);
}

SiteConfig random_site(std::mt19937_64& rng, bool nested) {
    SiteConfig site;
    std::vector<std::string> used;
    int n = 1 + static_cast<int>(rng() % 6);
    for (int k = 0; k < n; ++k) {
        auto path = random_path(rng);
        bool clash = false;
        for (const auto& u : used) clash = clash || is_within(path, u) || is_within(u, path);
        if (clash && !nested) continue;
        used.push_back(path);
        switch (rng() % 3) {
            case 0: site.inject_file(path, random_bytes(rng, 8)); break;
            case 1: site.make_dir(path); break;
            default: site.remove_path(path); break;
        }
    }
    return site;
}

TEST_CASE("inject, make_dir and remove are idempotent on random configs") {
    // Holds when no target lies under another: [make_dir /x/y, remove /x,
    // inject /x] applies once but fails the second time.
    std::mt19937_64 rng(42);
    int checked = 0;
    for (int i = 0; i < 300; ++i) {
        auto tree = random_tree(rng);
        auto site = random_site(rng, false);
        FileTree once;
        try {
            once = apply_site_mods(tree, site);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ModConflict);
            continue;
        }
        CHECK(apply_site_mods(once, site) == once);
        ++checked;
    }
    CHECK(checked > 100);
}

TEST_CASE("nested site configs never silently diverge on a second application") {
    std::mt19937_64 rng(43);
    for (int i = 0; i < 300; ++i) {
        auto tree = random_tree(rng);
        auto site = random_site(rng, true);
        FileTree once;
        try {
            once = apply_site_mods(tree, site);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ModConflict);
            continue;
        }
        try {
            CHECK(apply_site_mods(once, site) == once);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ModConflict);
        }
    }
}

TEST_CASE("site config text") {
    auto site = SiteConfig::parse(
        "# site changes\n"
        "inject_file /etc/motd hello\\nworld\n"
        "make_dir /scratch\n"
        "remove_path /tmp/junk\n"
        "append_env PATH /opt/site/bin\n");
    REQUIRE(site.mods.size() == 4);
    CHECK(site.mods[0].value == "hello\nworld");
    CHECK(site.summary() ==
          std::vector<std::string>{"inject_file /etc/motd", "make_dir /scratch", "remove_path /tmp/junk", "append_env PATH"});
    CHECK(code_of([] { SiteConfig::parse("frobnicate /x\n"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { SiteConfig::parse("make_dir relative\n"); }) == ErrorCode::InvalidConfig);
}

// ---------------------------------------------------------------- references

TEST_CASE("image references") {
    auto r = ImageReference::parse("docker/centos:7", "cluster");
    CHECK(r.repository == "docker");
    CHECK(r.name == "centos");
    CHECK(r.tag == "7");
    CHECK(r.canonical() == "docker/centos:7");
    CHECK(ImageReference::parse(r.canonical(), "cluster") == r);
    CHECK(code_of([] { ImageReference::parse("centos", "cluster"); }) == ErrorCode::InvalidReference);
    CHECK(code_of([] { ImageReference::parse(":7", "cluster"); }) == ErrorCode::InvalidReference);
    CHECK(code_of([] { ImageReference::parse("centos:7", ""); }) == ErrorCode::InvalidReference);
}

// ---------------------------------------------------------------- registries

TEST_CASE("manifest and layers from the memory registry") {
    MemoryRegistry reg;
    auto layers = udi::test::three_layer_image();
    auto published = reg.publish(ref_of("centos:7"), layers);
    auto m = reg.fetch_manifest(ref_of("centos:7"));
    CHECK(m == published);
    CHECK(m.layers.size() == 3);
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        auto blob = fetch_layer(reg, m.ref, m.layers[i]);
        CHECK(to_hex(sha256(blob)) == m.layers[i]);
        CHECK(decode_layer(blob) == layers[i]);
    }
    CHECK(Manifest::from_json(m.to_json(), "cluster") == m);
    CHECK(code_of([&] { reg.fetch_manifest(ref_of("centos:8")); }) == ErrorCode::RegistryUnknownImage);
}

TEST_CASE("manifest invariants") {
    CHECK_THROWS_AS(Manifest::from_json(R"({"name":"a","tag":"1","layers":[],"total_size":0})", "cluster"), Error);
    auto d = std::string(64, 'a');
    CHECK_THROWS_AS(
        Manifest::from_json(R"({"name":"a","tag":"1","layers":[")" + d + R"(",")" + d + R"("],"total_size":0})", "cluster"),
        Error);
    CHECK_THROWS_AS(Manifest::from_json("not json", "cluster"), Error);
}

TEST_CASE("registry faults") {
    MemoryRegistry inner;
    FileTree layer;
    layer.put_with_parents("/data/blob", FileEntry::file(std::string(300'000, 'z')));
    inner.publish(ref_of("centos:7"), {layer});
    InstrumentedRegistry reg(inner, 4096);
    auto m = reg.fetch_manifest(ref_of("centos:7"));
    CHECK(reg.manifest_fetches(ref_of("centos:7")) == 1);

    RegistryFaults down;
    down.down = true;
    reg.set_faults(down);
    CHECK(code_of([&] { reg.fetch_manifest(ref_of("centos:7")); }) == ErrorCode::RegistryIoError);

    RegistryFaults corrupt;
    corrupt.corrupt_byte = true;
    reg.set_faults(corrupt);
    CHECK(code_of([&] { fetch_layer(reg, m.ref, m.layers[0]); }) == ErrorCode::DigestMismatch);

    RegistryFaults abort;
    abort.abort_at_fraction = 0.5;
    reg.set_faults(abort);
    std::uint64_t seen = 0;
    std::uint64_t total = 0;
    std::string got = "untouched";
    CHECK(code_of([&] {
              got = fetch_layer(reg, m.ref, m.layers[0], [&](std::uint64_t n, std::uint64_t size) {
                  seen = n;
                  total = size;
              });
          }) == ErrorCode::RegistryIoError);
    CHECK(got == "untouched");
    CHECK(seen > 0);
    CHECK(seen < total);
    CHECK(reg.active_transfers() == 0);

    reg.set_faults({});
    CHECK(to_hex(sha256(fetch_layer(reg, m.ref, m.layers[0]))) == m.layers[0]);
}

TEST_CASE("directory registry layout and HTTP transport") {
    TempDir dir("reg");
    DirectoryRegistry disk(dir / "root", "cluster");
    auto layers = udi::test::three_layer_image();
    auto m = disk.publish(ref_of("centos:7"), layers);
    CHECK(fs::exists(dir / "root" / "centos:7" / "manifest.json"));
    for (const auto& d : m.layers) CHECK(fs::exists(dir / "root" / "centos:7" / "blobs" / d));
    CHECK(disk.fetch_manifest(ref_of("centos:7")) == m);
    CHECK(code_of([&] { disk.fetch_manifest(ref_of("nope:1")); }) == ErrorCode::RegistryUnknownImage);

    RegistryServer server(disk);
    int port = server.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    HttpRegistry http("http://127.0.0.1:" + std::to_string(port), "cluster");
    auto hm = http.fetch_manifest(ref_of("centos:7"));
    CHECK(hm == m);
    std::vector<FileTree> fetched;
    for (const auto& d : hm.layers) fetched.push_back(decode_layer(fetch_layer(http, hm.ref, d)));
    CHECK(fetched == layers);
    CHECK(code_of([&] { http.fetch_manifest(ref_of("nope:1")); }) == ErrorCode::RegistryUnknownImage);
    server.stop();

    HttpRegistry dead("http://127.0.0.1:" + std::to_string(port), "cluster");
    CHECK(code_of([&] { dead.fetch_manifest(ref_of("centos:7")); }) == ErrorCode::RegistryIoError);
}
