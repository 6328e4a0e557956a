#pragma once

#include <nlohmann/json.hpp>
#include <string_view>

namespace leakprobe::toml {

/// Parses the TOML subset used by run configs into a JSON object: comments,
/// [table] and [dotted.table] headers, bare/quoted/dotted keys, basic and
/// literal strings, integers, floats, booleans and (nested, multi-line)
/// arrays. Throws Error{InvalidConfig} with the offending line.
nlohmann::json parse(std::string_view document);

}  // namespace leakprobe::toml
