#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

namespace scorefilter {

using Json = nlohmann::json;

// Calls `fn(object, line_number)` for every non-blank line of a JSON Lines
// file. Line numbers are 1-based. Throws ParseError naming the line on
// malformed JSON, StorageError when the file cannot be opened.
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const Json&, std::size_t)>& fn);

void write_json_lines(const std::filesystem::path& path,
                      const std::vector<Json>& records);

// Field accessors that turn type mismatches into ParseError with line context.
std::string require_string(const Json& obj, const char* key, std::size_t line);
std::int64_t require_int(const Json& obj, const char* key, std::size_t line);
double require_number(const Json& obj, const char* key, std::size_t line);

}  // namespace scorefilter
