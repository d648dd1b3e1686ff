#include "udi/gateway/image_record.hpp"

#include <nlohmann/json.hpp>

#include "udi/common/error.hpp"

namespace udi {

using json = nlohmann::json;

std::string_view to_string(ImageState state) {
    switch (state) {
    case ImageState::Enqueued: return "ENQUEUED";
    case ImageState::Pulling: return "PULLING";
    case ImageState::Converting: return "CONVERTING";
    case ImageState::Ready: return "READY";
    case ImageState::Failed: return "FAILED";
    case ImageState::Expired: return "EXPIRED";
    }
    return "UNKNOWN";
}

std::optional<ImageState> parse_image_state(std::string_view text) {
    for (auto s : {ImageState::Enqueued, ImageState::Pulling, ImageState::Converting, ImageState::Ready,
                   ImageState::Failed, ImageState::Expired}) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

bool is_transient(ImageState state) {
    return state == ImageState::Enqueued || state == ImageState::Pulling || state == ImageState::Converting;
}

bool is_allowed_transition(ImageState from, ImageState to) {
    using S = ImageState;
    if (is_transient(from) && to == S::Failed) return true;
    return (from == S::Enqueued && to == S::Pulling) || (from == S::Pulling && to == S::Converting) ||
           (from == S::Converting && to == S::Ready) || (from == S::Failed && to == S::Enqueued) ||
           (from == S::Ready && to == S::Expired);
}

void to_json(json& j, const ImageRecord& r) {
    j = json{{"ref", r.ref.canonical()},
             {"state", std::string(to_string(r.state))},
             {"content_digest", r.content_digest},
             {"udi_path", r.udi_path},
             {"size_bytes", r.size_bytes},
             {"created_at", to_seconds(r.created_at)},
             {"updated_at", to_seconds(r.updated_at)},
             {"lease_expires_at", to_seconds(r.lease_expires_at)},
             {"attempts", r.attempts},
             {"last_error", r.last_error}};
}

ImageRecord record_from_json(const json& j, const std::string& system) {
    try {
        ImageRecord r;
        r.ref = ImageReference::parse(j.at("ref").get<std::string>(), system);
        auto state = parse_image_state(j.at("state").get<std::string>());
        if (!state) fail(ErrorCode::PersistenceCorrupt, "unknown image state");
        r.state = *state;
        r.content_digest = j.at("content_digest").get<std::string>();
        r.udi_path = j.at("udi_path").get<std::string>();
        r.size_bytes = j.at("size_bytes").get<std::uint64_t>();
        r.created_at = timestamp_from_seconds(j.at("created_at").get<double>());
        r.updated_at = timestamp_from_seconds(j.at("updated_at").get<double>());
        r.lease_expires_at = timestamp_from_seconds(j.at("lease_expires_at").get<double>());
        r.attempts = j.at("attempts").get<int>();
        r.last_error = j.at("last_error").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        fail(ErrorCode::PersistenceCorrupt, std::string("bad record object: ") + e.what());
    }
}

}  // namespace udi
