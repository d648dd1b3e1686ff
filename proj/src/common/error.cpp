#include "udi/common/error.hpp"

#include <fmt/core.h>

namespace udi {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidReference: return "InvalidReference";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::MacMismatch: return "MacMismatch";
    case ErrorCode::Expired: return "Expired";
    case ErrorCode::AuthServiceDown: return "AuthServiceDown";
    case ErrorCode::Forbidden: return "Forbidden";
    case ErrorCode::MalformedCredential: return "MalformedCredential";
    case ErrorCode::PersistenceCorrupt: return "PersistenceCorrupt";
    case ErrorCode::StorageIoError: return "StorageIoError";
    case ErrorCode::RegistryUnknownImage: return "RegistryUnknownImage";
    case ErrorCode::RegistryIoError: return "RegistryIoError";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::ConversionError: return "ConversionError";
    case ErrorCode::VerifyError: return "VerifyError";
    case ErrorCode::EmptyLayerList: return "EmptyLayerList";
    case ErrorCode::MalformedLayer: return "MalformedLayer";
    case ErrorCode::ModConflict: return "ModConflict";
    case ErrorCode::AlreadyMounted: return "AlreadyMounted";
    case ErrorCode::UdiCorrupt: return "UdiCorrupt";
    case ErrorCode::IdentityTimeout: return "IdentityTimeout";
    case ErrorCode::IdentityNotFound: return "IdentityNotFound";
    case ErrorCode::MissingGres: return "MissingGres";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

bool is_auth_error(ErrorCode code) {
    switch (code) {
    case ErrorCode::MacMismatch:
    case ErrorCode::Expired:
    case ErrorCode::AuthServiceDown:
    case ErrorCode::Forbidden:
    case ErrorCode::MalformedCredential:
        return true;
    default:
        return false;
    }
}

std::optional<ErrorCode> parse_error_code(std::string_view text) {
    for (int i = 0; i <= static_cast<int>(ErrorCode::InvalidConfig); ++i) {
        auto code = static_cast<ErrorCode>(i);
        if (to_string(code) == text) return code;
    }
    return std::nullopt;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(fmt::format("{}: {}", to_string(code), message)), code_(code), detail_(message) {}

void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace udi
