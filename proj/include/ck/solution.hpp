#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ck/autotune.hpp"
#include "ck/registry.hpp"

namespace ck::solution {

struct TaskSpec {
  // create-isolated-env | install-package | detect-software |
  // compile-program | custom-script
  std::string action;
  Json target;  // component ref (string) or argv (array) for custom-script
  Json params = Json::object();
  bool skippable = false;
};

void to_json(Json& j, const TaskSpec& t);
void from_json(const Json& j, TaskSpec& t);

struct BenchmarkSpec {
  std::string program;  // component ref (alias or uid)
  int repetitions = 1;
  std::vector<autotune::ObjectiveSpec> objectives;
  std::optional<autotune::DesignSpace> space;
  // Characteristics every ok record must carry; records missing one are
  // downgraded to failed (validation beyond extractor success).
  std::vector<std::string> expected_keys;
};

struct ReportSpec {
  std::string title;
  std::optional<std::string> reference_bundle;
};

struct SolutionManifest {
  std::string name;  // alias grammar
  std::string target_os = "any";
  std::vector<TaskSpec> tasks;
  BenchmarkSpec benchmark;
  ReportSpec report;
  int format_version = 1;
};

void to_json(Json& j, const SolutionManifest& m);
void from_json(const Json& j, SolutionManifest& m);

struct TaskOutcome {
  size_t index = 0;
  std::string action;
  std::string content_hash;  // sha256 of the canonical TaskSpec
  std::string status;        // "ok" | "skipped" | "failed"
  std::string note;
  std::string finished_at;
};

struct SolutionState {
  std::filesystem::path state_dir;
  std::vector<TaskOutcome> journal;

  bool completed() const;  // every task ok or skipped
};

// Registers/updates the solution entry, then executes tasks strictly in
// order with the journal at <state-dir>/solution-state.json. Completed (ok)
// tasks with an unchanged content hash are not re-run; re-running resumes.
// The first non-skippable failure aborts with TaskFailed.
SolutionState init_solution(const SolutionManifest& manifest, const registry::Repo& repo);

struct ResultBundle {
  std::string solution_name;
  std::vector<autotune::ExperimentRecord> records;
  envdetect::PlatformInfo platform;
  std::string created_at;
  int format_version = 1;
};

void to_json(Json& j, const ResultBundle& b);
void from_json(const Json& j, ResultBundle& b);

// Requires a completed init. Resolves dependencies, explores the manifest
// space (or the single default point), writes results.bundle.json into the
// state dir, and returns the bundle.
ResultBundle run_benchmark(const std::string& solution_name, const registry::Repo& repo);

std::filesystem::path solution_state_dir(const registry::Repo& repo, const std::string& name);

struct SourcedRecord {
  std::string source;  // bundle id: "<solution_name>@<created_at>"
  autotune::ExperimentRecord record;
};

// Union of records deduplicated by experiment_uid (first occurrence wins);
// deterministic order (bundle order, then record order).
std::vector<SourcedRecord> merge_bundles(std::span<const ResultBundle> bundles);

enum class ReportFormat { markdown, json };

// Scoreboard: rows sorted by the first objective (best first), frontier
// rows flagged, optional per-objective delta against the reference bundle's
// best values.
std::string render_report(std::span<const SourcedRecord> records,
                          std::span<const autotune::ObjectiveSpec> objectives,
                          ReportFormat format,
                          const std::optional<ResultBundle>& reference = std::nullopt);

}  // namespace ck::solution
