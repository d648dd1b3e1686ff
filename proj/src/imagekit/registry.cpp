#include "udi/imagekit/registry.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "udi/common/crypto.hpp"
#include "udi/common/error.hpp"
#include "udi/imagekit/layer.hpp"

namespace udi {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string Manifest::to_json() const {
    json j{{"name", ref.qualified_name()}, {"tag", ref.tag}, {"layers", layers}, {"total_size", total_size}};
    return j.dump(2);
}

Manifest Manifest::from_json(std::string_view text, const std::string& system) {
    auto j = json::parse(text, nullptr, false);
    auto bad = [](const std::string& why) -> Manifest { fail(ErrorCode::RegistryIoError, "invalid manifest: " + why); };
    if (j.is_discarded() || !j.is_object()) return bad("not a JSON object");
    if (!j.contains("name") || !j["name"].is_string() || !j.contains("tag") || !j["tag"].is_string() ||
        !j.contains("layers") || !j["layers"].is_array() || !j.contains("total_size") ||
        !j["total_size"].is_number_unsigned()) {
        return bad("missing or mistyped field");
    }
    Manifest m;
    try {
        m.ref = ImageReference::parse(j["name"].get<std::string>() + ":" + j["tag"].get<std::string>(), system);
    } catch (const Error& e) {
        return bad(e.what());
    }
    std::set<std::string> seen;
    for (const auto& layer : j["layers"]) {
        if (!layer.is_string() || !digest_from_hex(layer.get<std::string>())) return bad("layer digest malformed");
        if (!seen.insert(layer.get<std::string>()).second) return bad("duplicate layer digest");
        m.layers.push_back(layer.get<std::string>());
    }
    if (m.layers.empty()) return bad("no layers");
    m.total_size = j["total_size"].get<std::uint64_t>();
    return m;
}

std::string fetch_layer(Registry& registry, const ImageReference& ref, const std::string& digest,
                        const BlobProgress& progress) {
    auto blob = registry.fetch_blob(ref, digest, progress);
    auto actual = sha256_hex(blob);
    if (actual != digest) {
        fail(ErrorCode::DigestMismatch, fmt::format("layer {} of {} hashed to {}", digest, ref.canonical(), actual));
    }
    return blob;
}

PublishedImage package_image(const ImageReference& ref, const std::vector<FileTree>& layers) {
    if (layers.empty()) fail(ErrorCode::EmptyLayerList, "image " + ref.canonical() + " has no layers");
    PublishedImage out;
    out.manifest.ref = ref;
    for (const auto& layer : layers) {
        auto blob = encode_layer(layer);
        auto digest = sha256_hex(blob);
        if (out.blobs.count(digest) != 0) {
            fail(ErrorCode::MalformedLayer, "image " + ref.canonical() + " repeats layer " + digest);
        }
        out.manifest.layers.push_back(digest);
        out.manifest.total_size += logical_size(layer);
        out.blobs.emplace(digest, std::move(blob));
    }
    return out;
}

Manifest MemoryRegistry::publish(const ImageReference& ref, const std::vector<FileTree>& layers) {
    auto image = package_image(ref, layers);
    auto manifest = image.manifest;
    std::lock_guard lock(mu_);
    images_[ref.canonical()] = std::move(image);
    return manifest;
}

void MemoryRegistry::remove(const ImageReference& ref) {
    std::lock_guard lock(mu_);
    images_.erase(ref.canonical());
}

Manifest MemoryRegistry::fetch_manifest(const ImageReference& ref) {
    std::lock_guard lock(mu_);
    auto it = images_.find(ref.canonical());
    if (it == images_.end()) fail(ErrorCode::RegistryUnknownImage, ref.canonical());
    auto m = it->second.manifest;
    m.ref.system = ref.system;
    return m;
}

std::string MemoryRegistry::fetch_blob(const ImageReference& ref, const std::string& digest,
                                       const BlobProgress& progress) {
    std::string blob;
    {
        std::lock_guard lock(mu_);
        auto it = images_.find(ref.canonical());
        if (it == images_.end()) fail(ErrorCode::RegistryUnknownImage, ref.canonical());
        auto b = it->second.blobs.find(digest);
        if (b == it->second.blobs.end()) fail(ErrorCode::RegistryIoError, "no blob " + digest);
        blob = b->second;
    }
    if (progress) progress(blob.size(), blob.size());
    return blob;
}

DirectoryRegistry::DirectoryRegistry(fs::path root, std::string system)
    : root_(std::move(root)), system_(std::move(system)) {}

fs::path DirectoryRegistry::image_dir(const std::string& canonical) const {
    if (canonical.find("..") != std::string::npos) fail(ErrorCode::InvalidReference, canonical);
    return root_ / canonical;
}

Manifest DirectoryRegistry::publish(const ImageReference& ref, const std::vector<FileTree>& layers) {
    auto image = package_image(ref, layers);
    auto dir = image_dir(ref.canonical());
    fs::create_directories(dir / "blobs");
    for (const auto& [digest, bytes] : image.blobs) {
        std::ofstream out(dir / "blobs" / digest, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorCode::StorageIoError, "cannot write blob under " + dir.string());
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << image.manifest.to_json() << "\n";
    if (!out) fail(ErrorCode::StorageIoError, "cannot write manifest under " + dir.string());
    return image.manifest;
}

namespace {

std::optional<std::string> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

std::string DirectoryRegistry::manifest_text(const std::string& canonical) const {
    auto dir = image_dir(canonical);
    std::error_code ec;
    if (!fs::is_directory(root_, ec)) fail(ErrorCode::RegistryIoError, "registry root unavailable");
    auto text = slurp(dir / "manifest.json");
    if (!text) fail(ErrorCode::RegistryUnknownImage, canonical);
    return *text;
}

std::string DirectoryRegistry::blob_bytes(const std::string& canonical, const std::string& digest) const {
    if (!digest_from_hex(digest)) fail(ErrorCode::RegistryIoError, "malformed digest " + digest);
    auto bytes = slurp(image_dir(canonical) / "blobs" / digest);
    if (!bytes) fail(ErrorCode::RegistryIoError, "no blob " + digest + " for " + canonical);
    return *bytes;
}

Manifest DirectoryRegistry::fetch_manifest(const ImageReference& ref) {
    auto m = Manifest::from_json(manifest_text(ref.canonical()), ref.system);
    if (m.ref.canonical() != ref.canonical()) {
        fail(ErrorCode::RegistryIoError, "manifest under " + ref.canonical() + " names " + m.ref.canonical());
    }
    return m;
}

std::string DirectoryRegistry::fetch_blob(const ImageReference& ref, const std::string& digest,
                                          const BlobProgress& progress) {
    auto blob = blob_bytes(ref.canonical(), digest);
    if (progress) progress(blob.size(), blob.size());
    return blob;
}

InstrumentedRegistry::InstrumentedRegistry(Registry& inner, std::uint64_t chunk_size)
    : inner_(inner), chunk_size_(chunk_size == 0 ? 1 : chunk_size) {}

void InstrumentedRegistry::set_faults(const RegistryFaults& faults) {
    std::lock_guard lock(mu_);
    faults_ = faults;
}

RegistryFaults InstrumentedRegistry::faults() const {
    std::lock_guard lock(mu_);
    return faults_;
}

int InstrumentedRegistry::manifest_fetches(const ImageReference& ref) const {
    std::lock_guard lock(mu_);
    auto it = manifest_counts_.find(ref.key());
    return it == manifest_counts_.end() ? 0 : it->second;
}

void InstrumentedRegistry::reset_counters() {
    std::lock_guard lock(mu_);
    manifest_counts_.clear();
    total_manifests_ = 0;
    total_blobs_ = 0;
    max_active_ = active_.load();
}

Manifest InstrumentedRegistry::fetch_manifest(const ImageReference& ref) {
    {
        std::lock_guard lock(mu_);
        ++manifest_counts_[ref.key()];
        ++total_manifests_;
        if (faults_.down) fail(ErrorCode::RegistryIoError, "registry unreachable");
    }
    return inner_.fetch_manifest(ref);
}

std::string InstrumentedRegistry::fetch_blob(const ImageReference& ref, const std::string& digest,
                                             const BlobProgress& progress) {
    auto faults = this->faults();
    ++total_blobs_;
    if (faults.down) fail(ErrorCode::RegistryIoError, "registry unreachable");
    auto blob = inner_.fetch_blob(ref, digest, {});

    struct ActiveGuard {
        InstrumentedRegistry& r;
        explicit ActiveGuard(InstrumentedRegistry& reg) : r(reg) {
            auto now = ++r.active_;
            auto seen = r.max_active_.load();
            while (now > seen && !r.max_active_.compare_exchange_weak(seen, now)) {
            }
        }
        ~ActiveGuard() { --r.active_; }
    } guard(*this);

    if (faults.corrupt_byte && !blob.empty()) blob[blob.size() / 2] ^= 0x5a;
    const std::uint64_t total = blob.size();
    std::uint64_t abort_at = total + 1;
    if (faults.abort_at_fraction) {
        abort_at = static_cast<std::uint64_t>(static_cast<double>(total) * *faults.abort_at_fraction);
    }
    std::uint64_t delivered = 0;
    while (delivered < total) {
        auto next = std::min(total, delivered + chunk_size_);
        if (next > abort_at) {
            fail(ErrorCode::RegistryIoError,
                 fmt::format("transfer of {} aborted after {} of {} bytes", digest, abort_at, total));
        }
        delivered = next;
        if (progress) progress(delivered, total);
    }
    if (total == 0 && progress) progress(0, 0);
    return blob;
}

}  // namespace udi
