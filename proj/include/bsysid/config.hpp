#pragma once

#include "bsysid/experiment.hpp"

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

namespace bsysid {

/// Bad configuration file, key or value.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string>;

/// Lower-cases and maps '-' to '_' so "--max-backtracks" and
/// "max_backtracks" name the same key.
std::string normalize_key(const std::string& key);

/// Flat "key = value" lines; '#' starts a comment, blank lines are skipped.
/// Errors cite `source` and the line number.
KeyValues parse_key_values(std::istream& is, const std::string& source);
KeyValues read_key_values(const std::string& path);

/// Applies every entry onto `cfg`. Unknown keys and malformed values raise
/// ConfigError naming the key. "methods" is applied last so that "mode" and
/// "lambda_only" act as defaults for its tokens.
void apply_config(ExperimentConfig& cfg, const KeyValues& kv);

/// Defaults with methods = {sgp}.
ExperimentConfig default_experiment_config();

} // namespace bsysid
