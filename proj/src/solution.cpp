#include "ck/solution.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "ck/errors.hpp"
#include "ck/metapkg.hpp"
#include "ck/pipeline.hpp"
#include "ck/proc.hpp"

namespace fs = std::filesystem;

namespace ck::solution {

void to_json(Json& j, const TaskSpec& t) {
  j = Json{{"action", t.action},
           {"target", t.target},
           {"params", t.params},
           {"skippable", t.skippable}};
}

void from_json(const Json& j, TaskSpec& t) {
  t.action = j.at("action").get<std::string>();
  static const std::set<std::string> actions = {
      "create-isolated-env", "install-package", "detect-software",
      "compile-program", "custom-script"};
  if (!actions.contains(t.action))
    throw Error(Errc::schema_violation, "unknown task action '" + t.action + "'");
  t.target = j.value("target", Json());
  t.params = j.value("params", Json::object());
  t.skippable = j.value("skippable", false);
  if (t.action == "custom-script") {
    if (!t.target.is_array() || t.target.empty())
      throw Error(Errc::schema_violation, "custom-script target must be a non-empty argv array");
  } else if (t.action != "create-isolated-env") {
    if (!t.target.is_string() || t.target.get<std::string>().empty())
      throw Error(Errc::schema_violation,
                  "task '" + t.action + "' requires a component ref target");
  }
}

void to_json(Json& j, const SolutionManifest& m) {
  Json bench = Json{{"program", m.benchmark.program},
                    {"repetitions", m.benchmark.repetitions},
                    {"objectives", m.benchmark.objectives}};
  if (m.benchmark.space) bench["space"] = *m.benchmark.space;
  if (!m.benchmark.expected_keys.empty()) bench["expected_keys"] = m.benchmark.expected_keys;
  Json report = Json{{"title", m.report.title}};
  if (m.report.reference_bundle) report["reference_bundle"] = *m.report.reference_bundle;
  j = Json{{"name", m.name},
           {"target_os", m.target_os},
           {"tasks", m.tasks},
           {"benchmark", std::move(bench)},
           {"report", std::move(report)},
           {"format_version", m.format_version}};
}

void from_json(const Json& j, SolutionManifest& m) {
  m.name = j.at("name").get<std::string>();
  if (!registry::is_valid_alias(m.name))
    throw Error(Errc::schema_violation, "solution name '" + m.name + "' is not a valid alias");
  m.target_os = j.value("target_os", "any");
  m.tasks = j.at("tasks").get<std::vector<TaskSpec>>();
  if (m.tasks.empty()) throw Error(Errc::schema_violation, "task list must be non-empty");
  const Json& bench = j.at("benchmark");
  m.benchmark.program = bench.at("program").get<std::string>();
  m.benchmark.repetitions = bench.value("repetitions", 1);
  if (m.benchmark.repetitions < 1)
    throw Error(Errc::schema_violation, "repetitions must be >= 1");
  m.benchmark.objectives =
      bench.value("objectives", std::vector<autotune::ObjectiveSpec>{});
  if (bench.contains("space") && !bench.at("space").is_null())
    m.benchmark.space = bench.at("space").get<autotune::DesignSpace>();
  m.benchmark.expected_keys = bench.value("expected_keys", std::vector<std::string>{});
  if (j.contains("report")) {
    m.report.title = j.at("report").value("title", "");
    if (j.at("report").contains("reference_bundle"))
      m.report.reference_bundle = j.at("report").at("reference_bundle").get<std::string>();
  }
  m.format_version = j.value("format_version", 1);
  if (m.format_version != 1)
    throw Error(Errc::format_version_mismatch,
                "manifest format_version " + std::to_string(m.format_version));
}

void to_json(Json& j, const ResultBundle& b) {
  j = Json{{"solution_name", b.solution_name},
           {"records", b.records},
           {"platform", b.platform},
           {"created_at", b.created_at},
           {"format_version", b.format_version}};
}

void from_json(const Json& j, ResultBundle& b) {
  b.solution_name = j.at("solution_name").get<std::string>();
  b.records = j.at("records").get<std::vector<autotune::ExperimentRecord>>();
  b.platform = j.at("platform").get<envdetect::PlatformInfo>();
  b.created_at = j.at("created_at").get<std::string>();
  b.format_version = j.at("format_version").get<int>();
}

fs::path solution_state_dir(const registry::Repo& repo, const std::string& name) {
  auto [id, meta] = repo.find_entry("solution", name);
  (void)meta;
  return repo.entry_dir(id) / "state";
}

bool SolutionState::completed() const {
  return !journal.empty() &&
         std::all_of(journal.begin(), journal.end(), [](const TaskOutcome& t) {
           return t.status == "ok" || t.status == "skipped";
         });
}

namespace {

std::string task_hash(const TaskSpec& task) {
  return sha256_hex(canonical_dump(Json(task)));
}

Json journal_to_json(const std::vector<TaskOutcome>& journal) {
  Json out = Json::array();
  for (const auto& t : journal)
    out.push_back(Json{{"index", t.index},
                       {"action", t.action},
                       {"content_hash", t.content_hash},
                       {"status", t.status},
                       {"note", t.note},
                       {"finished_at", t.finished_at}});
  return out;
}

std::vector<TaskOutcome> journal_from_json(const Json& j) {
  std::vector<TaskOutcome> out;
  for (const auto& e : j) {
    TaskOutcome t;
    t.index = e.value("index", 0u);
    t.action = e.value("action", "");
    t.content_hash = e.value("content_hash", "");
    t.status = e.value("status", "");
    t.note = e.value("note", "");
    t.finished_at = e.value("finished_at", "");
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<registry::Repo> single_repo(const registry::Repo& repo) {
  return {repo};
}

// Task executors. Each returns a short note; failures throw.
std::string exec_create_isolated_env(const TaskSpec& task, const fs::path& state_dir) {
  std::string name = task.params.value("dir", std::string("isolated-env"));
  fs::path env_dir = state_dir / name;
  std::error_code ec;
  fs::create_directories(env_dir, ec);
  if (ec) throw Error(Errc::task_failed, "cannot create " + env_dir.string());
  write_json_file(env_dir / "env.json",
                  Json{{"kind", "isolated-env"}, {"created_at", utc_now_iso8601()}});
  return "created " + env_dir.string();
}

std::string exec_install_package(const TaskSpec& task, const registry::Repo& repo) {
  std::string ref = task.target.get<std::string>();
  metapkg::PackageSpec pkg = metapkg::load_package(repo, ref);
  // Idempotent: an already-installed matching env satisfies the task.
  auto repos = single_repo(repo);
  for (const auto& env : envdetect::load_all_envs(repos)) {
    if (env.soft_name == pkg.package_name && env.version.raw == pkg.version.raw &&
        env.tags.contains("installed") && fs::exists(env.tool_path))
      return "already installed: " + env.tool_path.string();
  }
  metapkg::EnvEntry env = metapkg::install_package(
      repo, pkg, metapkg::default_install_dir(repo, pkg), {});
  return "installed to " + env.tool_path.string();
}

std::string exec_detect_software(const TaskSpec& task, const registry::Repo& repo) {
  std::string ref = task.target.get<std::string>();
  auto [id, meta] = repo.find_entry("soft", ref);
  envdetect::SoftPlugin plugin = meta.merged().get<envdetect::SoftPlugin>();
  plugin.component_uid = id.uid;
  std::vector<fs::path> extra;
  for (const auto& r : task.params.value("roots", std::vector<std::string>{}))
    extra.emplace_back(r);
  auto found = envdetect::detect_software(plugin, extra);
  if (found.empty())
    throw Error(Errc::task_failed, "no installation of '" + plugin.soft_name + "' found");
  for (const auto& env : found) envdetect::register_env(repo, env);
  return "detected " + std::to_string(found.size()) + " environment(s)";
}

std::string exec_compile_program(const TaskSpec& task, const registry::Repo& repo,
                                 const fs::path& state_dir) {
  std::string ref = task.target.get<std::string>();
  pipeline::LoadedProgram program = pipeline::load_program(repo, ref);
  auto repos = single_repo(repo);
  auto envs = envdetect::load_all_envs(repos);
  auto packages = metapkg::load_all_packages(repos);
  metapkg::ResolutionPlan plan =
      metapkg::build_resolution_plan(program.spec.deps, envs, packages);
  metapkg::execute_plan(repo, plan);
  fs::path workdir = state_dir / "compile" / ref;
  std::error_code ec;
  fs::remove_all(workdir, ec);
  pipeline::PipelineState state = pipeline::assemble_pipeline(program, plan, workdir);
  pipeline::run_build(state);
  std::string status = state.at("build").at("status").get<std::string>();
  return "build status: " + status;
}

std::string exec_custom_script(const TaskSpec& task, const fs::path& state_dir) {
  proc::SpawnSpec spawn;
  spawn.argv = task.target.get<std::vector<std::string>>();
  spawn.workdir = state_dir;
  spawn.timeout_s = task.params.value("timeout_s", 600.0);
  auto res = proc::run_process(spawn);
  if (res.timed_out) throw Error(Errc::task_failed, "script timed out");
  if (res.exit_code != 0)
    throw Error(Errc::task_failed, "script exited " + std::to_string(res.exit_code) + ": " +
                                       res.stderr_text.substr(0, 256));
  return "script ok";
}

std::string execute_task(const TaskSpec& task, size_t index, const registry::Repo& repo,
                         const fs::path& state_dir) {
  // Uniform fault-injection hook used by the resume tests.
  if (const char* fail_at = std::getenv("CK_SOLUTION_FAIL_AT")) {
    if (std::to_string(index) == fail_at)
      throw Error(Errc::task_failed, "injected failure at task " + std::to_string(index));
  }
  if (task.action == "create-isolated-env") return exec_create_isolated_env(task, state_dir);
  if (task.action == "install-package") return exec_install_package(task, repo);
  if (task.action == "detect-software") return exec_detect_software(task, repo);
  if (task.action == "compile-program") return exec_compile_program(task, repo, state_dir);
  if (task.action == "custom-script") return exec_custom_script(task, state_dir);
  throw Error(Errc::schema_violation, "unknown task action '" + task.action + "'");
}

}  // namespace

SolutionState init_solution(const SolutionManifest& manifest, const registry::Repo& repo) {
  envdetect::PlatformInfo host = envdetect::collect_platform_info();
  std::string host_os = host.os_name;
  std::transform(host_os.begin(), host_os.end(), host_os.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  std::string want_os = manifest.target_os;
  std::transform(want_os.begin(), want_os.end(), want_os.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (want_os != "any" && want_os != host_os)
    throw Error(Errc::target_os_mismatch,
                "manifest targets '" + manifest.target_os + "', host is '" + host.os_name + "'");

  // Register or refresh the solution entry.
  registry::ComponentId id;
  try {
    auto [existing, meta] = repo.find_entry("solution", manifest.name);
    registry::EntryMeta updated;
    updated.tags = {"solution"};
    updated.meta = manifest;
    updated.created_at = meta.created_at;
    repo.update_entry(existing, updated);
    id = existing;
  } catch (const Error& e) {
    if (e.code() != Errc::not_found) throw;
    registry::EntryMeta meta;
    meta.tags = {"solution"};
    meta.meta = manifest;
    id = repo.add_entry("solution", manifest.name, meta);
  }

  SolutionState state;
  state.state_dir = repo.entry_dir(id) / "state";
  std::error_code ec;
  fs::create_directories(state.state_dir, ec);
  FileLock lock(state.state_dir / ".lock");

  fs::path journal_file = state.state_dir / "solution-state.json";
  std::vector<TaskOutcome> previous;
  if (fs::exists(journal_file))
    previous = journal_from_json(read_json_file(journal_file));

  auto flush = [&] { write_json_file(journal_file, journal_to_json(state.journal)); };

  for (size_t i = 0; i < manifest.tasks.size(); ++i) {
    const TaskSpec& task = manifest.tasks[i];
    std::string hash = task_hash(task);

    // Resume: an ok outcome for the same task content stands; skipped and
    // failed tasks are re-attempted, and edited tasks re-run.
    if (i < previous.size() && previous[i].content_hash == hash &&
        previous[i].status == "ok") {
      state.journal.push_back(previous[i]);
      flush();
      continue;
    }

    TaskOutcome outcome;
    outcome.index = i;
    outcome.action = task.action;
    outcome.content_hash = hash;
    try {
      outcome.note = execute_task(task, i, repo, state.state_dir);
      outcome.status = "ok";
    } catch (const Error& e) {
      outcome.note = e.what();
      outcome.status = task.skippable ? "skipped" : "failed";
    }
    outcome.finished_at = utc_now_iso8601();
    state.journal.push_back(outcome);
    flush();

    if (outcome.status == "failed")
      throw Error(Errc::task_failed,
                  "task " + std::to_string(i) + " (" + task.action + "): " + outcome.note);
  }
  return state;
}

ResultBundle run_benchmark(const std::string& solution_name, const registry::Repo& repo) {
  auto [id, entry_meta] = repo.find_entry("solution", solution_name);
  SolutionManifest manifest = entry_meta.meta.get<SolutionManifest>();

  fs::path state_dir = repo.entry_dir(id) / "state";
  fs::path journal_file = state_dir / "solution-state.json";
  SolutionState state;
  state.state_dir = state_dir;
  if (fs::exists(journal_file))
    state.journal = journal_from_json(read_json_file(journal_file));
  if (state.journal.size() != manifest.tasks.size() || !state.completed())
    throw Error(Errc::init_incomplete, "run `solution init` to completion first");

  pipeline::LoadedProgram program = pipeline::load_program(repo, manifest.benchmark.program);
  std::vector<registry::Repo> repos = {repo};
  auto envs = envdetect::load_all_envs(repos);
  auto packages = metapkg::load_all_packages(repos);
  metapkg::ResolutionPlan plan =
      metapkg::build_resolution_plan(program.spec.deps, envs, packages);
  metapkg::execute_plan(repo, plan);

  autotune::DesignSpace space;
  if (manifest.benchmark.space) space = *manifest.benchmark.space;

  autotune::Strategy strategy;
  strategy.kind = autotune::Strategy::Kind::grid;  // space absent => 1 default point

  autotune::ExploreOptions options;
  options.repetitions = manifest.benchmark.repetitions;
  options.workdir = state_dir / ("bench-" + generate_uid().substr(0, 8));
  options.extra_tags = {"solution-" + manifest.name};

  ResultBundle bundle;
  bundle.solution_name = manifest.name;
  bundle.records = autotune::explore(repo, program, plan, space, strategy, options);
  // Validation beyond extractor success: expected characteristics present.
  for (auto& record : bundle.records) {
    if (record.status != "ok") continue;
    for (const auto& key : manifest.benchmark.expected_keys) {
      if (!record.aggregated.contains(key)) {
        record.status = "failed";
        break;
      }
    }
  }
  bundle.platform = envdetect::collect_platform_info();
  bundle.created_at = utc_now_iso8601();
  bundle.format_version = 1;

  write_json_file(state_dir / "results.bundle.json", bundle);
  return bundle;
}

std::vector<SourcedRecord> merge_bundles(std::span<const ResultBundle> bundles) {
  if (!bundles.empty()) {
    int v = bundles.front().format_version;
    for (const auto& b : bundles)
      if (b.format_version != v)
        throw Error(Errc::format_version_mismatch,
                    std::to_string(b.format_version) + " vs " + std::to_string(v));
  }
  std::vector<SourcedRecord> out;
  std::set<std::string> seen;
  for (const auto& b : bundles) {
    std::string source = b.solution_name + "@" + b.created_at;
    for (const auto& r : b.records) {
      if (!seen.insert(r.experiment_uid).second) continue;
      out.push_back({source, r});
    }
  }
  return out;
}

namespace {

std::string format_number(double v) {
  Json j = v;
  return j.dump();
}

}  // namespace

std::string render_report(std::span<const SourcedRecord> records,
                          std::span<const autotune::ObjectiveSpec> objectives,
                          ReportFormat format,
                          const std::optional<ResultBundle>& reference) {
  if (objectives.empty()) throw Error(Errc::usage, "report needs at least one objective");

  std::vector<autotune::ExperimentRecord> ok_records;
  std::vector<const SourcedRecord*> ok_sources;
  for (const auto& sr : records) {
    if (sr.record.status != "ok") continue;
    ok_records.push_back(sr.record);
    ok_sources.push_back(&sr);
  }

  auto frontier = autotune::pareto_filter(ok_records, objectives);
  std::set<std::string> frontier_uids;
  for (const auto& r : frontier) frontier_uids.insert(r.experiment_uid);

  // Reference values: best per objective over the reference bundle.
  std::map<std::string, double> reference_best;
  if (reference) {
    for (const auto& o : objectives) {
      std::optional<double> best;
      for (const auto& r : reference->records) {
        if (r.status != "ok" || !r.aggregated.contains(o.key)) continue;
        double v = autotune::objective_value(r, o);
        bool better = !best || (o.direction == autotune::ObjectiveSpec::Direction::minimize
                                    ? v < *best
                                    : v > *best);
        if (better) best = v;
      }
      if (best) reference_best[o.key] = *best;
    }
  }

  // Sort by the first objective, best first; stable within ties.
  std::vector<size_t> order(ok_records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  const autotune::ObjectiveSpec& first = objectives.front();
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    double va = autotune::objective_value(ok_records[a], first);
    double vb = autotune::objective_value(ok_records[b], first);
    return first.direction == autotune::ObjectiveSpec::Direction::minimize ? va < vb : va > vb;
  });

  Json rows = Json::array();
  for (size_t idx : order) {
    const auto& sr = *ok_sources[idx];
    Json row;
    row["source"] = sr.source;
    row["experiment_uid"] = sr.record.experiment_uid;
    Json point = Json::object();
    for (const auto& [k, v] : sr.record.point) point[k] = v;
    row["point"] = std::move(point);
    Json values = Json::object();
    for (const auto& o : objectives)
      values[o.key] = autotune::objective_value(sr.record, o);
    row["objectives"] = std::move(values);
    row["on_frontier"] = frontier_uids.contains(sr.record.experiment_uid);
    if (reference) {
      Json deltas = Json::object();
      for (const auto& o : objectives) {
        if (reference_best.contains(o.key))
          deltas[o.key] =
              autotune::objective_value(sr.record, o) - reference_best.at(o.key);
      }
      row["delta_vs_reference"] = std::move(deltas);
    }
    rows.push_back(std::move(row));
  }

  if (format == ReportFormat::json) return canonical_dump(rows);

  std::ostringstream md;
  md << "| source | point |";
  for (const auto& o : objectives) md << " " << o.key << " |";
  md << " frontier |";
  if (reference)
    for (const auto& o : objectives) md << " delta_" << o.key << " |";
  md << "\n";
  md << "| --- | --- |";
  for (size_t i = 0; i < objectives.size(); ++i) md << " --- |";
  md << " --- |";
  if (reference)
    for (size_t i = 0; i < objectives.size(); ++i) md << " --- |";
  md << "\n";
  for (const auto& row : rows) {
    md << "| " << row["source"].get<std::string>() << " | " << row["point"].dump() << " |";
    for (const auto& o : objectives)
      md << " " << format_number(row["objectives"][o.key].get<double>()) << " |";
    md << (row["on_frontier"].get<bool>() ? " yes |" : " no |");
    if (reference) {
      for (const auto& o : objectives) {
        if (row["delta_vs_reference"].contains(o.key))
          md << " " << format_number(row["delta_vs_reference"][o.key].get<double>()) << " |";
        else
          md << " n/a |";
      }
    }
    md << "\n";
  }
  return md.str();
}

}  // namespace ck::solution
