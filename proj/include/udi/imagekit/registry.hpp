#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "udi/imagekit/file_tree.hpp"
#include "udi/imagekit/image_reference.hpp"

namespace udi {

/// Registry-side description of an image. `total_size` is the logical
/// (unpacked) size of all layers.
struct Manifest {
    ImageReference ref;
    std::vector<std::string> layers;  // hex SHA-256 digests, lowest first
    std::uint64_t total_size = 0;

    /// `{"name", "tag", "layers", "total_size"}`
    std::string to_json() const;
    /// Validates the manifest invariants (non-empty, unique digests).
    static Manifest from_json(std::string_view text, const std::string& system);

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Called as blob bytes arrive: (bytes so far, blob size).
using BlobProgress = std::function<void(std::uint64_t, std::uint64_t)>;

class Registry {
public:
    virtual ~Registry() = default;

    /// Throws RegistryUnknownImage or RegistryIoError.
    virtual Manifest fetch_manifest(const ImageReference& ref) = 0;
    /// Raw blob bytes; no digest check. Throws RegistryIoError.
    virtual std::string fetch_blob(const ImageReference& ref, const std::string& digest,
                                   const BlobProgress& progress) = 0;
};

/// Fetches a layer and checks the bytes hash to `digest` (DigestMismatch).
std::string fetch_layer(Registry& registry, const ImageReference& ref, const std::string& digest,
                        const BlobProgress& progress = {});

/// Encodes layers and builds the manifest without storing anything.
struct PublishedImage {
    Manifest manifest;
    std::map<std::string, std::string> blobs;  // digest -> bytes
};
PublishedImage package_image(const ImageReference& ref, const std::vector<FileTree>& layers);

class MemoryRegistry final : public Registry {
public:
    Manifest publish(const ImageReference& ref, const std::vector<FileTree>& layers);
    void remove(const ImageReference& ref);

    Manifest fetch_manifest(const ImageReference& ref) override;
    std::string fetch_blob(const ImageReference& ref, const std::string& digest,
                           const BlobProgress& progress) override;

private:
    std::mutex mu_;
    std::map<std::string, PublishedImage> images_;  // keyed by canonical ref
};

/// On-disk layout: `<root>/<name:tag>/manifest.json` and
/// `<root>/<name:tag>/blobs/<digest>`.
class DirectoryRegistry final : public Registry {
public:
    DirectoryRegistry(std::filesystem::path root, std::string system);

    Manifest publish(const ImageReference& ref, const std::vector<FileTree>& layers);

    Manifest fetch_manifest(const ImageReference& ref) override;
    std::string fetch_blob(const ImageReference& ref, const std::string& digest,
                           const BlobProgress& progress) override;

    /// Raw manifest text, as served over HTTP.
    std::string manifest_text(const std::string& canonical) const;
    std::string blob_bytes(const std::string& canonical, const std::string& digest) const;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path image_dir(const std::string& canonical) const;

    std::filesystem::path root_;
    std::string system_;
};

/// Fault switches for InstrumentedRegistry.
struct RegistryFaults {
    bool down = false;
    /// Abort every blob transfer once this fraction has been delivered.
    std::optional<double> abort_at_fraction;
    /// Flip one byte in every delivered blob.
    bool corrupt_byte = false;
};

/// Wraps a registry, counts traffic per image and injects faults. Blobs are
/// delivered in chunks so progress callbacks fire mid-transfer.
class InstrumentedRegistry final : public Registry {
public:
    explicit InstrumentedRegistry(Registry& inner, std::uint64_t chunk_size = 64 * 1024);

    void set_faults(const RegistryFaults& faults);
    RegistryFaults faults() const;

    int manifest_fetches(const ImageReference& ref) const;
    int total_manifest_fetches() const { return total_manifests_.load(); }
    int total_blob_fetches() const { return total_blobs_.load(); }
    /// Blob transfers currently streaming.
    int active_transfers() const { return active_.load(); }
    int max_active_transfers() const { return max_active_.load(); }
    void reset_counters();

    Manifest fetch_manifest(const ImageReference& ref) override;
    std::string fetch_blob(const ImageReference& ref, const std::string& digest,
                           const BlobProgress& progress) override;

private:
    Registry& inner_;
    std::uint64_t chunk_size_;
    mutable std::mutex mu_;
    RegistryFaults faults_;
    std::map<std::string, int> manifest_counts_;
    std::atomic<int> total_manifests_{0};
    std::atomic<int> total_blobs_{0};
    std::atomic<int> active_{0};
    std::atomic<int> max_active_{0};
};

}  // namespace udi
