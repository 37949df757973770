#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace montage {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// First executable named `name` on PATH.
std::optional<std::filesystem::path> find_executable(const std::string& name);

/// Runs argv[0] (resolved via PATH) with no shell, capturing stdout and
/// stderr. Exit code 127 when the program cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv);

}  // namespace montage
