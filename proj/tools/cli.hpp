#pragma once

#include <functional>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "rpf/errors.hpp"

namespace rpf::cli {

inline constexpr char kToolName[] = "rpf";
inline constexpr char kToolVersion[] = "0.1.0";

/// Bad flags, missing input files, inconsistent options: exit code 1.
class UsageError : public Error {
  public:
    using Error::Error;
};

using json = nlohmann::json;
using EnvLookup = std::function<char const*(char const*)>;

/// RPF_THREADS -> threads, RPF_OUT_DIR -> out_dir.
json environment_overrides(EnvLookup const& getenv);

/// Top-level keys of a config file plus the object named after the command,
/// which wins over the top level.
json config_file_section(json const& file, std::string const& command);

/// defaults < environment < config file < explicit flags. Keys absent from
/// `defaults` are rejected so typos in config files surface.
json resolve_config(json const& defaults, json const& env, json const& file_section, json const& flags);

/// FNV-1a over the resolved config without thread count, verbosity and file
/// locations. Inputs are identified by content fingerprints in the provenance.
std::string config_hash(json const& resolved);

/// `{tool, version, command, config_hash, inputs}`.
json provenance(std::string const& command, json const& resolved, json const& inputs);

/// Entry point shared by the executable and tests. Returns the exit code:
/// 0 success, 1 usage, 2 runtime failure.
int run(int argc, char const* const* argv, std::ostream& out, std::ostream& err, EnvLookup const& getenv);

}  // namespace rpf::cli
