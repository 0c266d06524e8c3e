#include "ck/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>

#include "ck/errors.hpp"
#include "ck/proc.hpp"

namespace fs = std::filesystem;

namespace ck::pipeline {

namespace {

bool is_characteristic_name(const std::string& s) {
  if (s.empty() || !(s[0] >= 'a' && s[0] <= 'z')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

}  // namespace

void to_json(Json& j, const ExtractorSpec& e) {
  j = Json{{"mode", e.mode == ExtractorSpec::Mode::result_file ? "result-file" : "stdout-regex"},
           {"result_file", e.result_file},
           {"patterns", e.patterns}};
}

void from_json(const Json& j, ExtractorSpec& e) {
  std::string mode = j.value("mode", "result-file");
  if (mode == "result-file") e.mode = ExtractorSpec::Mode::result_file;
  else if (mode == "stdout-regex") e.mode = ExtractorSpec::Mode::stdout_regex;
  else throw Error(Errc::schema_violation, "unknown extractor mode '" + mode + "'");
  e.result_file = j.value("result_file", "ck-result.json");
  e.patterns = j.value("patterns", std::map<std::string, std::string>{});
  for (const auto& [name, pattern] : e.patterns) {
    if (!is_characteristic_name(name))
      throw Error(Errc::schema_violation, "bad characteristic name '" + name + "'");
    std::regex re;
    try {
      re = std::regex(pattern);
    } catch (const std::regex_error& ex) {
      throw Error(Errc::schema_violation,
                  "bad pattern for '" + name + "': " + ex.what());
    }
    if (re.mark_count() != 1)
      throw Error(Errc::schema_violation,
                  "pattern for '" + name + "' must have exactly one capture group");
  }
}

void to_json(Json& j, const ProgramSpec& p) {
  j = Json{{"program_name", p.program_name},
           {"deps", p.deps},
           {"run",
            {{"argv", p.run.argv},
             {"workdir", p.run.workdir},
             {"repeat_default", p.run.repeat_default},
             {"timeout_s", p.run.timeout_s}}},
           {"extractor", p.extractor}};
  if (p.build)
    j["build"] = Json{{"argv", p.build->argv},
                      {"workdir", p.build->workdir},
                      {"env_keys", p.build->env_keys}};
  Json exposed = Json::object();
  for (const auto& [pointer, decl] : p.exposed) {
    Json dj = decl;
    dj.erase("pointer");
    exposed[pointer] = std::move(dj);
  }
  j["exposed"] = std::move(exposed);
}

void from_json(const Json& j, ProgramSpec& p) {
  p.program_name = j.at("program_name").get<std::string>();
  p.deps = j.value("deps", std::vector<metapkg::DependencySpec>{});
  if (j.contains("build") && !j.at("build").is_null()) {
    BuildSpec b;
    b.argv = j.at("build").at("argv").get<std::vector<std::string>>();
    b.workdir = j.at("build").value("workdir", "");
    b.env_keys = j.at("build").value("env_keys", std::vector<std::string>{});
    p.build = std::move(b);
  }
  const Json& r = j.at("run");
  p.run.argv = r.at("argv").get<std::vector<std::string>>();
  p.run.workdir = r.value("workdir", "");
  p.run.repeat_default = r.value("repeat_default", 1);
  p.run.timeout_s = r.value("timeout_s", 60.0);
  if (p.run.repeat_default < 1)
    throw Error(Errc::schema_violation, "repeat_default must be >= 1");
  p.extractor = j.value("extractor", ExtractorSpec{});
  p.exposed.clear();
  const Json exposed = j.value("exposed", Json::object());
  for (const auto& [pointer, dj] : exposed.items()) {
    autotune::ParameterDecl decl = dj.get<autotune::ParameterDecl>();
    decl.pointer = pointer;
    p.exposed[pointer] = std::move(decl);
  }
}

LoadedProgram load_program(const registry::Repo& repo, const std::string& key) {
  auto [id, meta] = repo.find_entry("program", key);
  LoadedProgram out;
  out.spec = meta.meta.get<ProgramSpec>();
  out.id = id;
  out.program_dir = repo.entry_dir(id);
  return out;
}

namespace {

std::string json_to_placeholder_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

std::vector<std::string> render_argv(const PipelineState& state,
                                     const std::vector<std::string>& argv_template) {
  std::vector<std::string> out;
  out.reserve(argv_template.size());
  for (const auto& arg : argv_template) {
    std::string rendered;
    size_t pos = 0;
    while (pos < arg.size()) {
      size_t open = arg.find('{', pos);
      if (open == std::string::npos) {
        rendered += arg.substr(pos);
        break;
      }
      size_t close = arg.find('}', open);
      if (close == std::string::npos) {
        rendered += arg.substr(pos);
        break;
      }
      rendered += arg.substr(pos, open - pos);
      std::string pointer = arg.substr(open + 1, close - open - 1);
      Json::json_pointer jp;
      try {
        jp = Json::json_pointer(pointer);
      } catch (const Json::exception&) {
        throw Error(Errc::unknown_parameter, "bad placeholder '" + pointer + "'");
      }
      if (!state.contains(jp))
        throw Error(Errc::unknown_parameter, "placeholder '" + pointer + "' not in state");
      rendered += json_to_placeholder_text(state.at(jp));
      pos = close + 1;
    }
    out.push_back(std::move(rendered));
  }
  return out;
}

std::map<std::string, std::string> state_env(const PipelineState& state) {
  std::map<std::string, std::string> env;
  for (const auto& [k, v] : state.at("env").items()) env[k] = v.get<std::string>();
  return env;
}

std::map<std::string, std::string> build_env(const PipelineState& state) {
  auto env = state_env(state);
  const Json& build = state.at("build");
  if (build.contains("env_keys") && !build.at("env_keys").empty()) {
    std::map<std::string, std::string> restricted;
    for (const auto& k : build.at("env_keys")) {
      auto it = env.find(k.get<std::string>());
      if (it != env.end()) restricted.insert(*it);
    }
    if (auto it = env.find("PATH"); it != env.end()) restricted.insert(*it);
    return restricted;
  }
  return env;
}

namespace {

void write_snapshot(const PipelineState& state, int stage) {
  fs::path workdir = state.at("meta").at("workdir").get<std::string>();
  write_json_file(workdir / ("state." + std::to_string(stage) + ".json"), state);
}

void append_spawn_log(const fs::path& workdir, const Json& record) {
  fs::path log = workdir / "spawn-log.json";
  Json entries = fs::exists(log) ? read_json_file(log) : Json::array();
  entries.push_back(record);
  write_json_file(log, entries);
}

}  // namespace

PipelineState assemble_pipeline(const LoadedProgram& program,
                                const metapkg::ResolutionPlan& plan,
                                const fs::path& workdir) {
  const ProgramSpec& spec = program.spec;
  for (const auto& dep : spec.deps) {
    if (plan.binding.contains(dep.name)) continue;
    bool skipped = std::find(plan.skipped.begin(), plan.skipped.end(), dep.name) !=
                   plan.skipped.end();
    if (dep.optional && skipped) continue;
    throw Error(Errc::unbound_dependency, "'" + dep.name + "'");
  }

  std::error_code ec;
  fs::create_directories(workdir, ec);
  if (ec) throw Error(Errc::io_failure, "cannot create workdir " + workdir.string());

  PipelineState state = Json::object();
  Json warnings = Json::array();

  Json deps = Json::object();
  Json env = Json::object();
  if (const char* path = std::getenv("PATH")) env["PATH"] = path;
  // Deps merge in plan order; later deps override on conflict.
  for (const auto& action : plan.actions) {
    const metapkg::EnvEntry& bound = plan.binding.at(action.dep_name);
    deps[action.dep_name] = Json{{"soft_name", bound.soft_name},
                                 {"version", bound.version.raw},
                                 {"tool_path", bound.tool_path.string()},
                                 {"uid", bound.uid}};
    for (const auto& [k, v] : bound.env_vars) {
      if (env.contains(k) && env[k] != Json(v) && k != "PATH")
        warnings.push_back("env conflict on " + k + ": '" + action.dep_name + "' overrides");
      env[k] = v;
    }
  }
  state["deps"] = std::move(deps);
  state["env"] = std::move(env);

  Json build = Json::object();
  if (spec.build) {
    build["argv"] = spec.build->argv;
    build["workdir"] = spec.build->workdir;
    build["env_keys"] = spec.build->env_keys;
    build["status"] = "pending";
  } else {
    build["status"] = "none";
  }
  build["exit_code"] = nullptr;
  state["build"] = std::move(build);

  Json run = Json::object();
  run["argv"] = spec.run.argv;
  run["workdir"] = spec.run.workdir;
  run["repeat_default"] = spec.run.repeat_default;
  run["timeout_s"] = spec.run.timeout_s;
  run["params"] = Json::object();
  state["run"] = std::move(run);

  Json meta = Json::object();
  meta["program_name"] = spec.program_name;
  meta["program_uid"] = program.id.uid;
  meta["program_alias"] = program.id.alias ? Json(*program.id.alias) : Json(nullptr);
  meta["program_dir"] = program.program_dir.string();
  meta["workdir"] = fs::absolute(workdir).string();
  meta["assembled_at"] = utc_now_iso8601();
  meta["extractor"] = spec.extractor;
  Json exposed = Json::object();
  for (const auto& [pointer, decl] : spec.exposed) {
    Json dj = decl;
    dj.erase("pointer");
    exposed[pointer] = std::move(dj);
  }
  meta["exposed"] = std::move(exposed);
  meta["warnings"] = std::move(warnings);
  state["meta"] = std::move(meta);

  // Materialize exposed defaults, then check that every exposed pointer and
  // every argv placeholder resolves.
  for (const auto& [pointer, decl] : spec.exposed) {
    Json::json_pointer jp;
    try {
      jp = Json::json_pointer(pointer);
    } catch (const Json::exception&) {
      throw Error(Errc::schema_violation, "bad exposed pointer '" + pointer + "'");
    }
    state[jp] = decl.default_value;
  }
  for (const auto& [pointer, decl] : spec.exposed) {
    (void)decl;
    if (!state.contains(Json::json_pointer(pointer)))
      throw Error(Errc::schema_violation,
                  "exposed pointer '" + pointer + "' does not resolve in the default state");
  }
  render_argv(state, spec.run.argv);
  if (spec.build) render_argv(state, spec.build->argv);

  write_snapshot(state, 0);
  return state;
}

PipelineState apply_point(const PipelineState& state, const autotune::Point& point) {
  PipelineState next = state;
  const Json& exposed = state.at("meta").at("exposed");
  for (const auto& [pointer, value] : point) {
    if (!exposed.contains(pointer))
      throw Error(Errc::unknown_parameter, "'" + pointer + "' is not an exposed parameter");
    autotune::ParameterDecl decl = exposed.at(pointer).get<autotune::ParameterDecl>();
    decl.pointer = pointer;
    if (!decl.domain.contains(value))
      throw Error(Errc::value_out_of_domain,
                  "'" + pointer + "' value " + value.dump() + " outside domain");
    next[Json::json_pointer(pointer)] = value;
  }
  return next;
}

void run_build(PipelineState& state) {
  fs::path workdir = state.at("meta").at("workdir").get<std::string>();
  Json& build = state.at("build");
  std::string status = build.at("status").get<std::string>();
  if (status == "none" || status == "ok") {
    // Nothing to spawn, but the stage still completes: snapshot it.
    write_snapshot(state, 1);
    return;
  }

  fs::path build_dir = workdir / "build";
  std::string sub = build.value("workdir", "");
  if (!sub.empty()) build_dir /= sub;
  std::error_code ec;
  fs::create_directories(build_dir, ec);

  std::vector<std::string> argv =
      render_argv(state, build.at("argv").get<std::vector<std::string>>());
  auto env = build_env(state);

  append_spawn_log(workdir, Json{{"stage", "build"},
                                 {"argv", argv},
                                 {"env", env},
                                 {"workdir", build_dir.string()}});

  proc::SpawnSpec spawn;
  spawn.argv = argv;
  spawn.workdir = build_dir;
  spawn.env = env;
  spawn.exact_env = true;
  spawn.stdout_file = workdir / "build.log";
  spawn.stderr_file = workdir / "build.err";
  auto res = proc::run_process(spawn);

  build["exit_code"] = res.exit_code;
  build["status"] = res.exit_code == 0 ? "ok" : "failed";
  write_snapshot(state, 1);
  if (res.exit_code != 0)
    throw Error(Errc::build_failed, "exit " + std::to_string(res.exit_code) + ", log " +
                                        (workdir / "build.err").string());
}

std::vector<RunResult> run_pipeline(PipelineState& state, int repetitions) {
  if (repetitions < 1) throw Error(Errc::usage, "repetitions must be >= 1");
  fs::path workdir = state.at("meta").at("workdir").get<std::string>();
  std::error_code ec;
  fs::create_directories(workdir, ec);

  run_build(state);

  std::vector<std::string> argv =
      render_argv(state, state.at("run").at("argv").get<std::vector<std::string>>());
  auto env = state_env(state);
  double timeout_s = state.at("run").at("timeout_s").get<double>();
  std::string run_sub = state.at("run").value("workdir", "");

  std::vector<RunResult> results;
  Json results_json = Json::array();
  for (int i = 0; i < repetitions; ++i) {
    fs::path rep_dir = workdir / ("rep." + std::to_string(i));
    fs::create_directories(rep_dir, ec);
    fs::path cwd = run_sub.empty() ? rep_dir : rep_dir / run_sub;
    fs::create_directories(cwd, ec);

    append_spawn_log(workdir, Json{{"stage", "run"},
                                   {"rep", i},
                                   {"argv", argv},
                                   {"env", env},
                                   {"workdir", cwd.string()}});

    RunResult r;
    r.rep = i;
    r.run_dir = cwd;
    r.stdout_path = rep_dir / "stdout.txt";
    r.stderr_path = rep_dir / "stderr.txt";

    proc::SpawnSpec spawn;
    spawn.argv = argv;
    spawn.workdir = cwd;
    spawn.env = env;
    spawn.exact_env = true;
    spawn.timeout_s = timeout_s;
    spawn.stdout_file = r.stdout_path;
    spawn.stderr_file = r.stderr_path;
    auto res = proc::run_process(spawn);

    r.exit_code = res.exit_code;
    r.timed_out = res.timed_out;
    r.wall_time_s = res.wall_time_s;
    results_json.push_back(Json{{"rep", i},
                                {"exit_code", r.exit_code},
                                {"timed_out", r.timed_out},
                                {"wall_time_s", r.wall_time_s}});
    results.push_back(std::move(r));
  }
  state["run"]["results"] = std::move(results_json);
  write_snapshot(state, 2);
  return results;
}

Characteristics extract_characteristics(const RunResult& result, const ExtractorSpec& spec) {
  Characteristics chars;
  auto check_finite = [](const std::string& name, double v) {
    if (!std::isfinite(v))
      throw Error(Errc::non_finite_value, "characteristic '" + name + "'");
    return v;
  };

  if (spec.mode == ExtractorSpec::Mode::result_file) {
    fs::path file = result.run_dir / spec.result_file;
    if (!fs::exists(file)) throw Error(Errc::missing_result_file, file.string());
    Json j = read_json_file(file);
    if (!j.is_object())
      throw Error(Errc::schema_violation, spec.result_file + " must be a flat JSON object");
    for (const auto& [name, value] : j.items()) {
      if (!is_characteristic_name(name))
        throw Error(Errc::schema_violation, "bad characteristic name '" + name + "'");
      double v;
      if (value.is_number()) {
        v = value.get<double>();
      } else if (value.is_string()) {
        // Tools sometimes quote numbers; "NaN"/garbage must still be caught.
        char* end = nullptr;
        const std::string s = value.get<std::string>();
        v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size() || s.empty()) v = std::nan("");
      } else {
        throw Error(Errc::non_finite_value, "characteristic '" + name + "' is not a number");
      }
      chars[name] = check_finite(name, v);
    }
  } else {
    std::string stdout_text = read_text_file(result.stdout_path);
    for (const auto& [name, pattern] : spec.patterns) {
      std::regex re;
      try {
        re = std::regex(pattern);
      } catch (const std::regex_error& e) {
        throw Error(Errc::schema_violation, "bad pattern for '" + name + "': " + e.what());
      }
      std::smatch m;
      if (!std::regex_search(stdout_text, m, re) || m.size() < 2)
        throw Error(Errc::pattern_not_matched, "'" + name + "'");
      char* end = nullptr;
      std::string cap = m[1].str();
      double v = std::strtod(cap.c_str(), &end);
      if (end != cap.c_str() + cap.size() || cap.empty()) v = std::nan("");
      chars[name] = check_finite(name, v);
    }
  }
  chars["wall_time_s"] = check_finite("wall_time_s", result.wall_time_s);
  return chars;
}

void to_json(Json& j, const Stat& s) {
  j = Json{{"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"n", s.n}};
  j["stddev"] = s.stddev ? Json(*s.stddev) : Json(nullptr);
}

void from_json(const Json& j, Stat& s) {
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  s.mean = j.at("mean").get<double>();
  s.n = j.at("n").get<size_t>();
  if (j.contains("stddev") && !j.at("stddev").is_null())
    s.stddev = j.at("stddev").get<double>();
  else
    s.stddev.reset();
}

AggregatedStats aggregate_stats(std::span<const Characteristics> samples) {
  if (samples.empty()) throw Error(Errc::empty_samples, "no samples to aggregate");
  const Characteristics& first = samples.front();
  for (const auto& s : samples) {
    if (s.size() != first.size() ||
        !std::equal(s.begin(), s.end(), first.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; }))
      throw Error(Errc::inconsistent_keys, "samples disagree on characteristic keys");
  }
  AggregatedStats stats;
  size_t n = samples.size();
  for (const auto& [key, v0] : first) {
    Stat st;
    st.n = n;
    st.min = st.max = v0;
    double sum = 0;
    for (const auto& s : samples) {
      double v = s.at(key);
      st.min = std::min(st.min, v);
      st.max = std::max(st.max, v);
      sum += v;
    }
    st.mean = sum / static_cast<double>(n);
    if (n >= 2) {
      double acc = 0;
      for (const auto& s : samples) {
        double d = s.at(key) - st.mean;
        acc += d * d;
      }
      st.stddev = std::sqrt(acc / static_cast<double>(n - 1));
    }
    stats[key] = st;
  }
  return stats;
}

}  // namespace ck::pipeline
