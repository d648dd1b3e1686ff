#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace udi {

enum class ErrorCode {
    InvalidReference,
    NotFound,
    // authentication
    MacMismatch,
    Expired,
    AuthServiceDown,
    Forbidden,
    MalformedCredential,
    // gateway
    PersistenceCorrupt,
    StorageIoError,
    // registry / image handling
    RegistryUnknownImage,
    RegistryIoError,
    DigestMismatch,
    ConversionError,
    VerifyError,
    EmptyLayerList,
    MalformedLayer,
    ModConflict,
    // node agent
    AlreadyMounted,
    UdiCorrupt,
    IdentityTimeout,
    IdentityNotFound,
    // simulator / bench
    MissingGres,
    InvalidSpec,
    UnknownScenario,
    InsufficientData,
    InvalidConfig,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view text);

/// True for every code a caller should report as an authentication failure.
bool is_auth_error(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    /// The message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace udi
