#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ck::proc {

struct SpawnSpec {
  std::vector<std::string> argv;  // argv[0] resolved via PATH when it has no '/'
  std::optional<std::filesystem::path> workdir;
  // When exact_env is true the child environment is exactly `env`;
  // otherwise `env` entries override the inherited environment.
  std::map<std::string, std::string> env;
  bool exact_env = false;
  double timeout_s = 0;  // 0 = no timeout
  size_t capture_limit = static_cast<size_t>(-1);
  bool combine_output = false;  // stderr shares the stdout pipe
  // Redirect to files instead of in-memory capture.
  std::optional<std::filesystem::path> stdout_file;
  std::optional<std::filesystem::path> stderr_file;
};

struct SpawnResult {
  int exit_code = -1;  // 128+signal when killed by a signal
  bool timed_out = false;
  bool spawn_failed = false;
  double wall_time_s = 0;
  std::string stdout_text;
  std::string stderr_text;
};

SpawnResult run_process(const SpawnSpec& spec);

}  // namespace ck::proc
