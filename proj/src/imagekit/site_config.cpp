#include "udi/imagekit/site_config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "udi/common/config.hpp"
#include "udi/common/error.hpp"

namespace udi {

namespace {

std::string checked_path(std::string_view path) {
    auto norm = normalize_path(path);
    if (!norm || path.empty() || path.front() != '/') {
        fail(ErrorCode::InvalidConfig, "site modification needs an absolute path: '" + std::string(path) + "'");
    }
    return *norm;
}

std::string unescape(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\' || i + 1 == s.size()) {
            out.push_back(s[i]);
            continue;
        }
        switch (s[++i]) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '\\': out.push_back('\\'); break;
        default:
            out.push_back('\\');
            out.push_back(s[i]);
        }
    }
    return out;
}

}  // namespace

std::string SiteModification::summary() const {
    switch (kind) {
    case Kind::InjectFile: return "inject_file " + target;
    case Kind::MakeDir: return "make_dir " + target;
    case Kind::RemovePath: return "remove_path " + target;
    case Kind::AppendEnv: return "append_env " + target;
    }
    return "unknown";
}

SiteConfig& SiteConfig::inject_file(std::string path, std::string content) {
    mods.push_back({SiteModification::Kind::InjectFile, checked_path(path), std::move(content)});
    return *this;
}

SiteConfig& SiteConfig::make_dir(std::string path) {
    mods.push_back({SiteModification::Kind::MakeDir, checked_path(path), {}});
    return *this;
}

SiteConfig& SiteConfig::remove_path(std::string path) {
    mods.push_back({SiteModification::Kind::RemovePath, checked_path(path), {}});
    return *this;
}

SiteConfig& SiteConfig::append_env(std::string key, std::string value) {
    if (key.empty() || key.find_first_of("= \t\n") != std::string::npos) {
        fail(ErrorCode::InvalidConfig, "bad environment variable name '" + key + "'");
    }
    mods.push_back({SiteModification::Kind::AppendEnv, std::move(key), std::move(value)});
    return *this;
}

std::vector<std::string> SiteConfig::summary() const {
    std::vector<std::string> out;
    out.reserve(mods.size());
    for (const auto& m : mods) out.push_back(m.summary());
    return out;
}

SiteConfig SiteConfig::parse(std::string_view text) {
    SiteConfig site;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        auto sp = stripped.find_first_of(" \t");
        auto verb = stripped.substr(0, sp);
        auto rest = sp == std::string::npos ? std::string() : trim(std::string_view(stripped).substr(sp));
        auto arg_sp = rest.find_first_of(" \t");
        auto first = rest.substr(0, arg_sp);
        auto tail = arg_sp == std::string::npos ? std::string() : trim(std::string_view(rest).substr(arg_sp));
        if (first.empty()) fail(ErrorCode::InvalidConfig, fmt::format("site config line {}: missing argument", lineno));
        if (verb == "inject_file") {
            site.inject_file(first, unescape(tail));
        } else if (verb == "make_dir") {
            site.make_dir(first);
        } else if (verb == "remove_path") {
            site.remove_path(first);
        } else if (verb == "append_env") {
            site.append_env(first, tail);
        } else {
            fail(ErrorCode::InvalidConfig, fmt::format("site config line {}: unknown directive '{}'", lineno, verb));
        }
    }
    return site;
}

SiteConfig SiteConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::InvalidConfig, "cannot read site config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

namespace {

void apply_one(FileTree& tree, const SiteModification& mod) {
    switch (mod.kind) {
    case SiteModification::Kind::InjectFile: {
        const auto* existing = tree.find(mod.target);
        if (existing != nullptr && existing->kind == EntryKind::Directory) {
            fail(ErrorCode::ModConflict, "inject_file over existing directory " + mod.target);
        }
        tree.put_with_parents(mod.target, FileEntry::file(mod.value, 0644));
        break;
    }
    case SiteModification::Kind::MakeDir: {
        const auto* existing = tree.find(mod.target);
        if (existing != nullptr) {
            if (existing->kind != EntryKind::Directory) {
                fail(ErrorCode::ModConflict, "make_dir over existing non-directory " + mod.target);
            }
            break;
        }
        tree.put_with_parents(mod.target, FileEntry::dir(0755));
        break;
    }
    case SiteModification::Kind::RemovePath:
        if (mod.target == "/") fail(ErrorCode::ModConflict, "remove_path of the root directory");
        tree.remove(mod.target);
        break;
    case SiteModification::Kind::AppendEnv: {
        const std::string path(kEnvironmentFile);
        const auto* existing = tree.find(path);
        std::string content;
        if (existing != nullptr) {
            if (existing->kind != EntryKind::File) {
                fail(ErrorCode::ModConflict, path + " exists and is not a regular file");
            }
            content = existing->content.materialize();
            if (!content.empty() && content.back() != '\n') content.push_back('\n');
        }
        content += mod.target + "=" + mod.value + "\n";
        tree.put_with_parents(path, FileEntry::file(std::move(content), 0644));
        break;
    }
    }
}

}  // namespace

FileTree apply_site_mods(FileTree tree, const SiteConfig& site) {
    for (const auto& mod : site.mods) {
        try {
            apply_one(tree, mod);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::MalformedLayer) throw;
            fail(ErrorCode::ModConflict, mod.summary() + ": " + e.what());
        }
    }
    return tree;
}

}  // namespace udi
