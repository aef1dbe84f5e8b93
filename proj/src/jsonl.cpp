#include "scorefilter/jsonl.hpp"

#include <fstream>
#include <string>

#include "scorefilter/error.hpp"

namespace scorefilter {

void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const Json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json obj;
    try {
      obj = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": expected a JSON object");
    }
    fn(obj, line_no);
  }
  if (in.bad()) throw StorageError("read failed: " + path.string());
}

void write_json_lines(const std::filesystem::path& path,
                      const std::vector<Json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw StorageError("write failed: " + path.string());
}

namespace {

[[noreturn]] void field_error(const char* key, std::size_t line, const char* what) {
  throw ParseError("line " + std::to_string(line) + ": field \"" + key + "\" " + what);
}

const Json& field(const Json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) field_error(key, line, "is missing");
  return *it;
}

}  // namespace

std::string require_string(const Json& obj, const char* key, std::size_t line) {
  const auto& v = field(obj, key, line);
  if (!v.is_string()) field_error(key, line, "must be a string");
  return v.get<std::string>();
}

std::int64_t require_int(const Json& obj, const char* key, std::size_t line) {
  const auto& v = field(obj, key, line);
  if (!v.is_number_integer()) field_error(key, line, "must be an integer");
  return v.get<std::int64_t>();
}

double require_number(const Json& obj, const char* key, std::size_t line) {
  const auto& v = field(obj, key, line);
  if (!v.is_number()) field_error(key, line, "must be a number");
  return v.get<double>();
}

}  // namespace scorefilter
