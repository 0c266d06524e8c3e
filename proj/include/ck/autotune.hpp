#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ck/design_space.hpp"
#include "ck/pipeline.hpp"
#include "ck/registry.hpp"

namespace ck::autotune {

struct ExperimentRecord {
  std::string experiment_uid;  // 16 hex
  registry::ComponentId program;
  Point point;
  std::vector<pipeline::Characteristics> repetitions;  // successful reps only
  Json failed_repetitions = Json::array();  // {rep, exit_code, timed_out} of failures
  pipeline::AggregatedStats aggregated;
  envdetect::PlatformInfo platform;
  std::string env_fingerprint;  // sha256 over bound (soft_name, version) pairs
  std::string timestamp;
  std::string status;  // "ok" | "failed"
};

void to_json(Json& j, const ExperimentRecord& r);
void from_json(const Json& j, ExperimentRecord& r);

std::string env_fingerprint(const metapkg::ResolutionPlan& plan);

struct ObjectiveSpec {
  std::string key;
  enum class Direction { minimize, maximize };
  Direction direction = Direction::minimize;
  enum class Field { min, mean };
  Field field = Field::mean;
};

void to_json(Json& j, const ObjectiveSpec& o);
void from_json(const Json& j, ObjectiveSpec& o);

// "key:min" / "key:max" with an optional ":min-field"/":mean-field" suffix;
// the aggregate field defaults to min for time-like keys and mean otherwise.
ObjectiveSpec parse_objective(const std::string& text);
std::vector<ObjectiveSpec> parse_objectives(const std::string& csv);

// Objective value of a record (declared aggregate field of the key).
double objective_value(const ExperimentRecord& r, const ObjectiveSpec& o);

// True iff a is no worse than b on every objective and strictly better on
// at least one.
bool dominates(const ExperimentRecord& a, const ExperimentRecord& b,
               std::span<const ObjectiveSpec> objectives);

// Non-dominated ok-status records, input order preserved. Failed records
// never reach the frontier.
std::vector<ExperimentRecord> pareto_filter(std::span<const ExperimentRecord> records,
                                            std::span<const ObjectiveSpec> objectives);

struct Strategy {
  enum class Kind { grid, random };
  Kind kind = Kind::grid;
  uint64_t seed = 0;
  size_t n = 0;  // random only
};

struct ExploreOptions {
  int repetitions = 1;
  std::filesystem::path workdir;
  bool persist = true;  // store records under registry kind `experiment`
  std::set<std::string> extra_tags;
  // Pipelines run in distinct workdirs; persistence is serialized through
  // the registry locks. 1 = sequential.
  int parallel = 1;
};

// Grid or seeded-random exploration: apply point, run, extract, aggregate,
// persist. Per-point failures yield status=failed records and exploration
// continues; only baseline setup failures abort.
std::vector<ExperimentRecord> explore(const registry::Repo& repo,
                                      const pipeline::LoadedProgram& program,
                                      const metapkg::ResolutionPlan& plan,
                                      const DesignSpace& space,
                                      const Strategy& strategy,
                                      const ExploreOptions& options);

registry::ComponentId persist_record(const registry::Repo& repo, const ExperimentRecord& record,
                                     const std::set<std::string>& extra_tags = {});
std::vector<ExperimentRecord> load_experiments(std::span<const registry::Repo> repos,
                                               const std::set<std::string>& tag_filter = {});

}  // namespace ck::autotune
