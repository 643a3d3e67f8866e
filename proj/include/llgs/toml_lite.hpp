#pragma once

#include <string>

#include "json.hpp"

namespace llgs {

// Minimal TOML reader covering the subset used by llgs config files:
// [tables], [[arrays of tables]], dotted keys, strings, numbers, booleans
// and (nested, multi-line) arrays. Comments start with '#'.
nlohmann::json toml_parse(const std::string& text);
nlohmann::json toml_parse_file(const std::string& path);

}  // namespace llgs
