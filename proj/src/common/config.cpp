#include "udi/common/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "udi/common/error.hpp"

namespace udi {

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
    KeyValueConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            fail(ErrorCode::InvalidConfig, fmt::format("line {}: expected key = value", lineno));
        }
        auto key = trim(std::string_view(stripped).substr(0, eq));
        if (key.empty()) fail(ErrorCode::InvalidConfig, fmt::format("line {}: empty key", lineno));
        cfg.values_[key] = trim(std::string_view(stripped).substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::InvalidConfig, "cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::optional<std::string> KeyValueConfig::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        fail(ErrorCode::InvalidConfig, fmt::format("{}: not a number: '{}'", key, *v));
    }
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        fail(ErrorCode::InvalidConfig, fmt::format("{}: not an integer: '{}'", key, *v));
    }
    return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "off" || *v == "0") return false;
    fail(ErrorCode::InvalidConfig, fmt::format("{}: not a boolean: '{}'", key, *v));
}

Duration KeyValueConfig::get_duration(const std::string& key, Duration fallback) const {
    if (!contains(key)) return fallback;
    double s = get_double(key, 0.0);
    if (s < 0) fail(ErrorCode::InvalidConfig, key + ": negative duration");
    return seconds(s);
}

std::vector<std::string> KeyValueConfig::unknown_keys(const std::vector<std::string>& known) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
        if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
    }
    return out;
}

}  // namespace udi
