#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ck/design_space.hpp"
#include "ck/metapkg.hpp"
#include "ck/registry.hpp"

namespace ck::pipeline {

// The whole workflow state is one JSON document with fixed top-level keys
// `deps`, `env`, `build`, `run`, `meta`. Every stage reads and writes only
// this document and snapshots it to workdir/state.<stage>.json.
using PipelineState = Json;

struct ExtractorSpec {
  enum class Mode { result_file, stdout_regex };
  Mode mode = Mode::result_file;
  std::string result_file = "ck-result.json";
  // characteristic name -> regex with one numeric capture group
  std::map<std::string, std::string> patterns;
};

void to_json(Json& j, const ExtractorSpec& e);
void from_json(const Json& j, ExtractorSpec& e);

struct BuildSpec {
  std::vector<std::string> argv;  // {/json/pointer} placeholders
  std::string workdir;            // relative to the pipeline workdir
  std::vector<std::string> env_keys;  // restrict build env; empty = all
};

struct RunSpec {
  std::vector<std::string> argv;
  std::string workdir;  // relative to the rep dir
  int repeat_default = 1;
  double timeout_s = 60.0;
};

struct ProgramSpec {
  std::string program_name;
  std::vector<metapkg::DependencySpec> deps;
  std::optional<BuildSpec> build;
  RunSpec run;
  ExtractorSpec extractor;
  // JSON Pointer -> declaration; defaults are materialized at assemble time.
  std::map<std::string, autotune::ParameterDecl> exposed;
};

void to_json(Json& j, const ProgramSpec& p);
void from_json(const Json& j, ProgramSpec& p);

struct LoadedProgram {
  ProgramSpec spec;
  registry::ComponentId id;
  std::filesystem::path program_dir;  // entry payload directory
};

LoadedProgram load_program(const registry::Repo& repo, const std::string& key);

// Merged env (later deps override, conflicts logged to meta.warnings),
// exposed defaults materialized, snapshot written to workdir/state.0.json.
PipelineState assemble_pipeline(const LoadedProgram& program,
                                const metapkg::ResolutionPlan& plan,
                                const std::filesystem::path& workdir);

// Returns a new state; the original is untouched. The empty point is the
// identity.
PipelineState apply_point(const PipelineState& state, const autotune::Point& point);

struct RunResult {
  int rep = 0;
  int exit_code = -1;
  bool timed_out = false;
  double wall_time_s = 0;
  std::filesystem::path run_dir;
  std::filesystem::path stdout_path;
  std::filesystem::path stderr_path;
};

// Build stage: no-op when the program declares none or it already ran;
// otherwise renders build argv, spawns, snapshots state.1.json and throws
// BuildFailed on a nonzero exit.
void run_build(PipelineState& state);

// Runs the build stage if declared and not yet done (snapshot state.1.json),
// then exactly `repetitions` sequential executions in workdir/rep.<i>/
// (snapshot state.2.json). Spawned argv/env go to workdir/spawn-log.json.
std::vector<RunResult> run_pipeline(PipelineState& state, int repetitions);

using Characteristics = std::map<std::string, double>;

Characteristics extract_characteristics(const RunResult& result, const ExtractorSpec& spec);

struct Stat {
  double min = 0;
  double max = 0;
  double mean = 0;
  std::optional<double> stddev;  // sample stddev, null when n < 2
  size_t n = 0;
};

using AggregatedStats = std::map<std::string, Stat>;

void to_json(Json& j, const Stat& s);
void from_json(const Json& j, Stat& s);

AggregatedStats aggregate_stats(std::span<const Characteristics> samples);

// Pure renderers used by both the runner and replay checks.
std::vector<std::string> render_argv(const PipelineState& state,
                                     const std::vector<std::string>& argv_template);
std::map<std::string, std::string> state_env(const PipelineState& state);
std::map<std::string, std::string> build_env(const PipelineState& state);

}  // namespace ck::pipeline
