#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "udi/clustersim/cluster.hpp"
#include "udi/common/config.hpp"
#include "udi/common/error.hpp"

namespace udi {

// Exit codes of udictl.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitSystemError = 2;

/// 1 for mistakes the caller can fix (bad reference, spec, config, scenario
/// id, missing gres, rejected credential), 2 for everything the system did
/// wrong.
int exit_code_for(ErrorCode code);

/// Settings file keys understood by every subcommand, e.g.
///
///   system = cluster
///   storage_dir = /var/lib/udi
///   secret_file = /etc/udi/secret
///   lease_duration = 60
///   cache_ttl = 600
///   identity_cap = 500
///
/// Durations are in seconds. Unknown keys are rejected with InvalidConfig.
const std::vector<std::string>& settings_keys();

/// Applies a settings file over the defaults. The secret comes from
/// `secret_file` (first line) or `secret`; relative paths resolve against
/// `base_dir`.
ClusterConfig cluster_config_from(const KeyValueConfig& settings, const std::filesystem::path& base_dir = {});

/// Runs one udictl command line (without the program name) and returns its
/// exit code. Results go to `out`, diagnostics to `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace udi
