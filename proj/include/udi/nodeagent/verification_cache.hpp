#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <set>
#include <tuple>

#include "udi/imagekit/udi_format.hpp"

namespace udi {

/// Remembers which on-disk files already passed a full verify_udi, keyed by
/// the file's identity and change stamps (device, inode, size, mtime, ctime).
/// Any write to the file changes ctime, so a remembered entry can only ever
/// match the exact bytes that were verified.
///
/// A file changed within the same coarse clock tick as the start of a
/// verification could keep its stamps, so such results are not remembered
/// (the same rule git uses for its index).
class VerificationCache {
public:
    /// verify_udi, skipped when this exact file version passed before.
    VerifyResult verify(const std::filesystem::path& path);

    int full_verifications() const { return full_.load(); }
    int hits() const { return hits_.load(); }
    void clear();

private:
    using Key = std::tuple<std::uint64_t, std::uint64_t, std::int64_t, std::int64_t, std::int64_t>;

    std::mutex mu_;
    std::set<Key> verified_;
    std::atomic<int> full_{0};
    std::atomic<int> hits_{0};
};

}  // namespace udi
