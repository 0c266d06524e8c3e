#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ck/util.hpp"

namespace ck::cli {

// Every command answers with one JSON object on stdout: {"return": N,
// ["error": ...], ...payload}. Process exit code = min(return, 255).
struct ResponseEnvelope {
  int return_code = 0;
  std::string error;
  Json payload = Json::object();

  Json to_json() const;
  int exit_code() const { return return_code < 255 ? return_code : 255; }
};

// Routes argv to module operations. `stdin_json` (from --json-in or piped
// stdin) overrides flag values. Never throws; errors land in the envelope
// (1 = domain error, 2 = usage, 3 = I/O).
ResponseEnvelope dispatch(const std::vector<std::string>& argv,
                          const std::optional<Json>& stdin_json = std::nullopt);

std::string usage_text();

}  // namespace ck::cli
