#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udi/common/time.hpp"

namespace udi {

/// Plain-text `key = value` configuration. Blank lines and `#` comments are
/// ignored; later assignments override earlier ones.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Value given in (possibly fractional) seconds.
    Duration get_duration(const std::string& key, Duration fallback) const;

    /// Keys not in `known`; callers reject typos with this.
    std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::optional<std::string> raw(const std::string& key) const;

    std::map<std::string, std::string> values_;
};

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace udi
