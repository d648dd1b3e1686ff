#pragma once

#include <compare>
#include <ostream>
#include <string>
#include <string_view>

namespace udi {

/// Identifies an image on a target system. Canonical text is `name:tag`, or
/// `repository/name:tag` when a repository is present.
struct ImageReference {
    std::string system;
    std::string repository;
    std::string name;
    std::string tag;

    static ImageReference parse(std::string_view canonical, std::string system);

    std::string canonical() const;
    /// Map key: system plus canonical form.
    std::string key() const;
    /// Repository-qualified name without the tag.
    std::string qualified_name() const;

    auto operator<=>(const ImageReference&) const = default;
};

std::ostream& operator<<(std::ostream& os, const ImageReference& ref);

bool is_valid_system_name(std::string_view system);

}  // namespace udi
