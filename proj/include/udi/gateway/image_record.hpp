#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "udi/common/time.hpp"
#include "udi/imagekit/image_reference.hpp"

namespace udi {

enum class ImageState { Enqueued, Pulling, Converting, Ready, Failed, Expired };

std::string_view to_string(ImageState state);
std::optional<ImageState> parse_image_state(std::string_view text);

/// ENQUEUED, PULLING and CONVERTING: states held under a lease.
bool is_transient(ImageState state);

/// The lifecycle edges:
///   ENQUEUED→PULLING, PULLING→CONVERTING, PULLING→FAILED, CONVERTING→READY,
///   CONVERTING→FAILED, FAILED→ENQUEUED, READY→EXPIRED, transient→FAILED.
/// Creating a record (or replacing an EXPIRED one) is not a transition.
bool is_allowed_transition(ImageState from, ImageState to);

struct ImageRecord {
    ImageReference ref;
    ImageState state = ImageState::Enqueued;
    std::string content_digest;
    std::string udi_path;
    std::uint64_t size_bytes = 0;
    Timestamp created_at{};
    Timestamp updated_at{};
    Timestamp lease_expires_at{};
    int attempts = 0;
    std::string last_error;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Flat object with exactly the record's field names; `ref` is the canonical
/// text and timestamps are seconds.
void to_json(nlohmann::json& j, const ImageRecord& record);
/// Inverse of to_json; the system is not part of the object.
ImageRecord record_from_json(const nlohmann::json& j, const std::string& system);

/// Unit of work for a gateway worker; at most one live task per image.
struct PullTask {
    ImageReference ref;
    Timestamp enqueue_time{};
    std::string lease_id;
};

}  // namespace udi
