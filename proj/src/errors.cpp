#include "ck/errors.hpp"

namespace ck {

std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::duplicate_alias: return "DuplicateAlias";
    case Errc::invalid_alias: return "InvalidAlias";
    case Errc::unknown_kind: return "UnknownKind";
    case Errc::io_failure: return "IoFailure";
    case Errc::not_found: return "NotFound";
    case Errc::ambiguous_key: return "AmbiguousKey";
    case Errc::plugin_invalid: return "PluginInvalid";
    case Errc::unsupported_dialect: return "UnsupportedDialect";
    case Errc::unresolved_dependency: return "UnresolvedDependency";
    case Errc::dependency_cycle: return "DependencyCycle";
    case Errc::checksum_mismatch: return "ChecksumMismatch";
    case Errc::step_failed: return "StepFailed";
    case Errc::unbound_dependency: return "UnboundDependency";
    case Errc::unknown_parameter: return "UnknownParameter";
    case Errc::value_out_of_domain: return "ValueOutOfDomain";
    case Errc::build_failed: return "BuildFailed";
    case Errc::timeout: return "Timeout";
    case Errc::missing_result_file: return "MissingResultFile";
    case Errc::pattern_not_matched: return "PatternNotMatched";
    case Errc::non_finite_value: return "NonFiniteValue";
    case Errc::empty_samples: return "EmptySamples";
    case Errc::inconsistent_keys: return "InconsistentKeys";
    case Errc::space_too_large: return "SpaceTooLarge";
    case Errc::missing_objective_key: return "MissingObjectiveKey";
    case Errc::task_failed: return "TaskFailed";
    case Errc::target_os_mismatch: return "TargetOsMismatch";
    case Errc::schema_violation: return "SchemaViolation";
    case Errc::init_incomplete: return "InitIncomplete";
    case Errc::format_version_mismatch: return "FormatVersionMismatch";
    case Errc::usage: return "Usage";
  }
  return "UnknownError";
}

}  // namespace ck
