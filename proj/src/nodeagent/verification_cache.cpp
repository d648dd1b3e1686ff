#include "udi/nodeagent/verification_cache.hpp"

#include <sys/stat.h>
#include <time.h>

#include <optional>

namespace udi {

namespace {

struct Stamp {
    std::uint64_t dev, ino;
    std::int64_t size, mtime_ns, ctime_ns;
};

std::optional<Stamp> stamp_of(const std::filesystem::path& path) {
    struct stat st {};
    if (::stat(path.c_str(), &st) != 0 || !S_ISREG(st.st_mode)) return std::nullopt;
    auto ns = [](const timespec& ts) { return static_cast<std::int64_t>(ts.tv_sec) * 1000000000 + ts.tv_nsec; };
    return Stamp{static_cast<std::uint64_t>(st.st_dev), static_cast<std::uint64_t>(st.st_ino),
                 static_cast<std::int64_t>(st.st_size), ns(st.st_mtim), ns(st.st_ctim)};
}

std::int64_t coarse_now_ns() {
    timespec ts{};
    ::clock_gettime(CLOCK_REALTIME_COARSE, &ts);
    return static_cast<std::int64_t>(ts.tv_sec) * 1000000000 + ts.tv_nsec;
}

}  // namespace

VerifyResult VerificationCache::verify(const std::filesystem::path& path) {
    auto before = stamp_of(path);
    if (before) {
        Key key{before->dev, before->ino, before->size, before->mtime_ns, before->ctime_ns};
        std::lock_guard lock(mu_);
        if (verified_.count(key)) {
            ++hits_;
            return VerifyResult::good();
        }
    }
    auto started = coarse_now_ns();
    ++full_;
    auto result = verify_udi(path);
    if (!result || !before) return result;

    auto after = stamp_of(path);
    if (!after) return result;
    Key k1{before->dev, before->ino, before->size, before->mtime_ns, before->ctime_ns};
    Key k2{after->dev, after->ino, after->size, after->mtime_ns, after->ctime_ns};
    if (k1 == k2 && after->ctime_ns < started) {
        std::lock_guard lock(mu_);
        verified_.insert(k2);
    }
    return result;
}

void VerificationCache::clear() {
    std::lock_guard lock(mu_);
    verified_.clear();
}

}  // namespace udi
