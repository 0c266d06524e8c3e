#include "ck/autotune.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "ck/errors.hpp"

namespace fs = std::filesystem;

namespace ck::autotune {

void to_json(Json& j, const ExperimentRecord& r) {
  Json point = Json::object();
  for (const auto& [k, v] : r.point) point[k] = v;
  Json reps = Json::array();
  for (const auto& c : r.repetitions) reps.push_back(c);
  Json agg = Json::object();
  for (const auto& [k, s] : r.aggregated) agg[k] = s;
  j = Json{{"experiment_uid", r.experiment_uid},
           {"program", r.program},
           {"point", std::move(point)},
           {"repetitions", std::move(reps)},
           {"failed_repetitions", r.failed_repetitions},
           {"aggregated", std::move(agg)},
           {"platform", r.platform},
           {"env_fingerprint", r.env_fingerprint},
           {"timestamp", r.timestamp},
           {"status", r.status}};
}

void from_json(const Json& j, ExperimentRecord& r) {
  r.experiment_uid = j.at("experiment_uid").get<std::string>();
  r.program = j.at("program").get<registry::ComponentId>();
  r.point.clear();
  for (const auto& [k, v] : j.at("point").items()) r.point[k] = v;
  r.repetitions.clear();
  for (const auto& c : j.at("repetitions"))
    r.repetitions.push_back(c.get<pipeline::Characteristics>());
  r.failed_repetitions = j.value("failed_repetitions", Json::array());
  r.aggregated.clear();
  for (const auto& [k, s] : j.at("aggregated").items())
    r.aggregated[k] = s.get<pipeline::Stat>();
  r.platform = j.at("platform").get<envdetect::PlatformInfo>();
  r.env_fingerprint = j.value("env_fingerprint", "");
  r.timestamp = j.value("timestamp", "");
  r.status = j.value("status", "ok");
}

std::string env_fingerprint(const metapkg::ResolutionPlan& plan) {
  Json pairs = Json::array();
  for (const auto& [name, env] : plan.binding) {
    (void)name;
    pairs.push_back(Json::array({env.soft_name, env.version.raw}));
  }
  std::sort(pairs.begin(), pairs.end());
  return sha256_hex(canonical_dump(pairs));
}

void to_json(Json& j, const ObjectiveSpec& o) {
  j = Json{{"key", o.key},
           {"direction", o.direction == ObjectiveSpec::Direction::minimize ? "minimize" : "maximize"},
           {"aggregate_field", o.field == ObjectiveSpec::Field::min ? "min" : "mean"}};
}

void from_json(const Json& j, ObjectiveSpec& o) {
  o.key = j.at("key").get<std::string>();
  if (o.key.empty()) throw Error(Errc::schema_violation, "objective key must be non-empty");
  std::string dir = j.value("direction", "minimize");
  if (dir == "minimize") o.direction = ObjectiveSpec::Direction::minimize;
  else if (dir == "maximize") o.direction = ObjectiveSpec::Direction::maximize;
  else throw Error(Errc::schema_violation, "unknown objective direction '" + dir + "'");
  std::string field;
  if (j.contains("aggregate_field")) {
    field = j.at("aggregate_field").get<std::string>();
  } else {
    bool time_like = o.key.find("time") != std::string::npos ||
                     o.key.find("latency") != std::string::npos;
    field = time_like ? "min" : "mean";
  }
  if (field == "min") o.field = ObjectiveSpec::Field::min;
  else if (field == "mean") o.field = ObjectiveSpec::Field::mean;
  else throw Error(Errc::schema_violation, "unknown aggregate_field '" + field + "'");
}

ObjectiveSpec parse_objective(const std::string& text) {
  Json j = Json::object();
  size_t c1 = text.find(':');
  if (c1 == std::string::npos) {
    j["key"] = text;
  } else {
    j["key"] = text.substr(0, c1);
    size_t c2 = text.find(':', c1 + 1);
    std::string dir = c2 == std::string::npos ? text.substr(c1 + 1)
                                              : text.substr(c1 + 1, c2 - c1 - 1);
    if (dir == "min") dir = "minimize";
    if (dir == "max") dir = "maximize";
    j["direction"] = dir;
    if (c2 != std::string::npos) j["aggregate_field"] = text.substr(c2 + 1);
  }
  return j.get<ObjectiveSpec>();
}

std::vector<ObjectiveSpec> parse_objectives(const std::string& csv) {
  std::vector<ObjectiveSpec> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    std::string item = comma == std::string::npos ? csv.substr(pos) : csv.substr(pos, comma - pos);
    if (!item.empty()) out.push_back(parse_objective(item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw Error(Errc::usage, "no objectives given");
  return out;
}

double objective_value(const ExperimentRecord& r, const ObjectiveSpec& o) {
  auto it = r.aggregated.find(o.key);
  if (it == r.aggregated.end())
    throw Error(Errc::missing_objective_key,
                "'" + o.key + "' missing in experiment " + r.experiment_uid);
  return o.field == ObjectiveSpec::Field::min ? it->second.min : it->second.mean;
}

bool dominates(const ExperimentRecord& a, const ExperimentRecord& b,
               std::span<const ObjectiveSpec> objectives) {
  bool strictly_better = false;
  for (const auto& o : objectives) {
    double va = objective_value(a, o);
    double vb = objective_value(b, o);
    if (o.direction == ObjectiveSpec::Direction::minimize) {
      if (va > vb) return false;
      if (va < vb) strictly_better = true;
    } else {
      if (va < vb) return false;
      if (va > vb) strictly_better = true;
    }
  }
  return strictly_better;
}

std::vector<ExperimentRecord> pareto_filter(std::span<const ExperimentRecord> records,
                                            std::span<const ObjectiveSpec> objectives) {
  std::vector<const ExperimentRecord*> ok;
  for (const auto& r : records)
    if (r.status == "ok") ok.push_back(&r);

  std::vector<ExperimentRecord> out;
  for (const auto* candidate : ok) {
    bool dominated = false;
    for (const auto* other : ok) {
      if (other == candidate) continue;
      if (dominates(*other, *candidate, objectives)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) out.push_back(*candidate);
  }
  return out;
}

registry::ComponentId persist_record(const registry::Repo& repo, const ExperimentRecord& record,
                                     const std::set<std::string>& extra_tags) {
  registry::EntryMeta meta;
  meta.tags = {"experiment", "status-" + record.status};
  if (record.program.alias) meta.tags.insert("program-" + *record.program.alias);
  for (const auto& t : extra_tags) meta.tags.insert(t);
  meta.meta = record;
  return repo.add_entry("experiment", std::nullopt, meta);
}

std::vector<ExperimentRecord> load_experiments(std::span<const registry::Repo> repos,
                                               const std::set<std::string>& tag_filter) {
  std::vector<ExperimentRecord> out;
  for (const auto& repo : repos) {
    for (const auto& id : repo.list_entries("experiment")) {
      auto [found, meta] = repo.find_entry("experiment", id.uid);
      if (!tag_filter.empty() &&
          !std::includes(meta.tags.begin(), meta.tags.end(), tag_filter.begin(),
                         tag_filter.end()))
        continue;
      out.push_back(meta.meta.get<ExperimentRecord>());
    }
  }
  return out;
}

std::vector<ExperimentRecord> explore(const registry::Repo& repo,
                                      const pipeline::LoadedProgram& program,
                                      const metapkg::ResolutionPlan& plan,
                                      const DesignSpace& space,
                                      const Strategy& strategy,
                                      const ExploreOptions& options) {
  for (const auto& param : space.params)
    if (!program.spec.exposed.contains(param.pointer))
      throw Error(Errc::unknown_parameter,
                  "space parameter '" + param.pointer + "' is not exposed by the program");

  std::vector<Point> points = strategy.kind == Strategy::Kind::grid
                                  ? enumerate_grid(space)
                                  : sample_random(space, strategy.seed, strategy.n);

  fs::path workdir = options.workdir;
  pipeline::PipelineState baseline =
      pipeline::assemble_pipeline(program, plan, workdir / "baseline");
  // Baseline build once; a failure here aborts the whole exploration.
  pipeline::run_build(baseline);

  std::string fingerprint = env_fingerprint(plan);
  envdetect::PlatformInfo platform = envdetect::collect_platform_info();

  auto run_point = [&](size_t i) {
    ExperimentRecord record;
    record.experiment_uid = generate_uid();
    record.program = program.id;
    record.point = points[i];
    record.platform = platform;
    record.env_fingerprint = fingerprint;
    record.timestamp = utc_now_iso8601();
    record.status = "ok";

    try {
      pipeline::PipelineState state = pipeline::apply_point(baseline, points[i]);
      // A point that reaches into /build/ invalidates the baseline build.
      for (const auto& [pointer, v] : points[i]) {
        (void)v;
        if (pointer.rfind("/build/", 0) == 0 && !state["build"]["status"].is_null() &&
            state["build"]["status"] != "none")
          state["build"]["status"] = "pending";
      }
      fs::path point_dir = workdir / ("point." + std::to_string(i));
      state["meta"]["workdir"] = fs::absolute(point_dir).string();
      std::error_code ec;
      fs::create_directories(point_dir, ec);
      write_json_file(point_dir / "state.0.json", state);

      auto results = pipeline::run_pipeline(state, options.repetitions);
      for (const auto& r : results) {
        if (r.exit_code == 0 && !r.timed_out) {
          record.repetitions.push_back(
              pipeline::extract_characteristics(r, program.spec.extractor));
        } else {
          record.failed_repetitions.push_back(
              Json{{"rep", r.rep}, {"exit_code", r.exit_code}, {"timed_out", r.timed_out}});
        }
      }
      if (record.repetitions.empty()) {
        record.status = "failed";
      } else {
        record.aggregated = pipeline::aggregate_stats(record.repetitions);
      }
    } catch (const Error&) {
      record.status = "failed";
    }

    if (options.persist) persist_record(repo, record, options.extra_tags);
    return record;
  };

  std::vector<ExperimentRecord> records(points.size());
  size_t degree = options.parallel > 1 ? static_cast<size_t>(options.parallel) : 1;
  if (degree <= 1) {
    for (size_t i = 0; i < points.size(); ++i) records[i] = run_point(i);
  } else {
    std::atomic<size_t> next{0};
    auto drain = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= points.size()) return;
        records[i] = run_point(i);
      }
    };
    std::vector<std::thread> pool;
    for (size_t t = 0; t < std::min(degree, points.size()); ++t)
      pool.emplace_back(drain);
    for (auto& t : pool) t.join();
  }
  return records;
}

}  // namespace ck::autotune
