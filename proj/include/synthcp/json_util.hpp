#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"

namespace synthcp {

using Json = nlohmann::json;

// Throws ConfigError naming the first key of `j` not in `allowed`.
void require_known_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view context);

// Reads `key` if present, converting type errors into ConfigError.
template <typename T>
T value_or(const Json& j, const char* key, T fallback, std::string_view context);

Json read_json_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_json_atomic(const std::filesystem::path& path, const Json& j);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace synthcp
