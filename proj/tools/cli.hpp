#pragma once

#include <string>
#include <vector>

namespace scorefilter::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point for the scorefilter command line. Returns the process exit
/// code: 0 on success, 1 for data/validation failures, 2 for usage errors.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace scorefilter::cli
