#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>

#include "scorefilter/jsonl.hpp"

namespace scorefilter::cli {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written as manifest.json next to every command's outputs.
/// Contains no timestamps or host data, so identical runs give identical bytes.
struct RunManifest {
  explicit RunManifest(std::string cmd) : command(std::move(cmd)) {}

  std::string command;
  Json config = Json::object();
  Json seeds = Json::object();
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // file name -> sha256

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& dir, const std::string& name);
  void write(const std::filesystem::path& dir) const;
};

}  // namespace scorefilter::cli
