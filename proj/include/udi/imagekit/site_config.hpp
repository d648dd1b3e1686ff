#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "udi/imagekit/file_tree.hpp"

namespace udi {

struct SiteModification {
    enum class Kind { InjectFile, MakeDir, RemovePath, AppendEnv };

    Kind kind;
    std::string target;  // path, or variable name for AppendEnv
    std::string value;   // file content or variable value

    /// One-line description recorded in the UDI metadata.
    std::string summary() const;
};

/// Administrator-defined changes applied to every image before packaging.
struct SiteConfig {
    std::vector<SiteModification> mods;

    SiteConfig& inject_file(std::string path, std::string content);
    SiteConfig& make_dir(std::string path);
    SiteConfig& remove_path(std::string path);
    SiteConfig& append_env(std::string key, std::string value);

    std::vector<std::string> summary() const;

    /// One directive per line:
    ///   inject_file <path> <content...>   (C-style escapes \n \t \\ allowed)
    ///   make_dir <path>
    ///   remove_path <path>
    ///   append_env <KEY> <value...>
    static SiteConfig parse(std::string_view text);
    static SiteConfig load(const std::filesystem::path& path);
};

/// Environment additions land in this file, one `KEY=value` line each.
inline constexpr std::string_view kEnvironmentFile = "/etc/environment";

FileTree apply_site_mods(FileTree tree, const SiteConfig& site);

}  // namespace udi
