#include "udi/imagekit/image_reference.hpp"

#include <algorithm>
#include <cctype>

#include "udi/common/error.hpp"

namespace udi {

namespace {

bool has_space(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

void check_component(std::string_view what, std::string_view value, std::string_view text) {
    if (value.empty()) {
        fail(ErrorCode::InvalidReference, std::string(what) + " is empty in '" + std::string(text) + "'");
    }
    if (has_space(value) || value.find(':') != std::string_view::npos ||
        value.find('@') != std::string_view::npos) {
        fail(ErrorCode::InvalidReference,
             std::string(what) + " has an illegal character in '" + std::string(text) + "'");
    }
}

}  // namespace

bool is_valid_system_name(std::string_view system) {
    if (system.empty()) return false;
    return std::all_of(system.begin(), system.end(), [](unsigned char c) {
        return std::isalnum(c) != 0 || c == '-' || c == '_' || c == '.';
    });
}

ImageReference ImageReference::parse(std::string_view text, std::string system) {
    if (!is_valid_system_name(system)) {
        fail(ErrorCode::InvalidReference, "invalid system name '" + system + "'");
    }
    ImageReference ref;
    ref.system = std::move(system);

    auto slash = text.rfind('/');
    std::string_view tail = text;
    if (slash != std::string_view::npos) {
        auto repo = text.substr(0, slash);
        tail = text.substr(slash + 1);
        std::size_t start = 0;
        while (true) {
            auto next = repo.find('/', start);
            check_component("repository segment",
                            repo.substr(start, next == std::string_view::npos ? next : next - start), text);
            if (next == std::string_view::npos) break;
            start = next + 1;
        }
        ref.repository = std::string(repo);
    }
    auto colon = tail.find(':');
    if (colon == std::string_view::npos) {
        fail(ErrorCode::InvalidReference, "missing tag in '" + std::string(text) + "'");
    }
    ref.name = std::string(tail.substr(0, colon));
    ref.tag = std::string(tail.substr(colon + 1));
    check_component("name", ref.name, text);
    check_component("tag", ref.tag, text);
    return ref;
}

std::string ImageReference::qualified_name() const {
    return repository.empty() ? name : repository + "/" + name;
}

std::string ImageReference::canonical() const { return qualified_name() + ":" + tag; }

std::string ImageReference::key() const { return system + "/" + canonical(); }

std::ostream& operator<<(std::ostream& os, const ImageReference& ref) { return os << ref.canonical(); }

}  // namespace udi
