#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ck {

// Error taxonomy shared by all modules. The CLI maps these onto the JSON
// envelope: usage -> 2, io_failure -> 3, everything else -> 1.
enum class Errc {
  duplicate_alias,
  invalid_alias,
  unknown_kind,
  io_failure,
  not_found,
  ambiguous_key,
  plugin_invalid,
  unsupported_dialect,
  unresolved_dependency,
  dependency_cycle,
  checksum_mismatch,
  step_failed,
  unbound_dependency,
  unknown_parameter,
  value_out_of_domain,
  build_failed,
  timeout,
  missing_result_file,
  pattern_not_matched,
  non_finite_value,
  empty_samples,
  inconsistent_keys,
  space_too_large,
  missing_objective_key,
  task_failed,
  target_os_mismatch,
  schema_violation,
  init_incomplete,
  format_version_mismatch,
  usage,
};

std::string_view errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace ck
