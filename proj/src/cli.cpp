#include "ck/cli.hpp"

#include <cstdlib>
#include <iostream>

#include "ck/autotune.hpp"
#include "ck/envdetect.hpp"
#include "ck/errors.hpp"
#include "ck/metapkg.hpp"
#include "ck/pipeline.hpp"
#include "ck/registry.hpp"
#include "ck/solution.hpp"

namespace fs = std::filesystem;

namespace ck::cli {

Json ResponseEnvelope::to_json() const {
  Json j = payload.is_object() ? payload : Json::object();
  j["return"] = return_code;
  if (return_code != 0) j["error"] = error;
  return j;
}

std::string usage_text() {
  return
      "usage: ck <command> [options]\n"
      "  ck repo init <path> --alias <name>\n"
      "  ck add <kind>:<alias> --tags <t1,t2> --meta <file> [--payload <dir>]\n"
      "  ck find <kind>:<key>\n"
      "  ck search --tags <t1,t2> [--kind <kind>]\n"
      "  ck detect <soft-alias> [--root <path>]...\n"
      "  ck install <package-alias> [--version <v>] [--force]\n"
      "  ck env list\n"
      "  ck run <program-alias> [--reps N] [--point <file>] [--workdir <dir>]\n"
      "  ck autotune <program-alias> --space <file> --strategy grid|random\n"
      "              [--seed S] [--iterations N] [--reps R] [--workdir <dir>]\n"
      "  ck pareto --objectives k:dir[,k:dir...] [--experiments <tags>]\n"
      "  ck report --format md|json --objectives k:dir[,...]\n"
      "            [--bundle <file>]... [--experiments <tags>] [--reference <bundle>]\n"
      "  ck solution init <manifest>\n"
      "  ck solution benchmark <name>\n"
      "  ck bundle merge <file>... [--out <file>]\n"
      "global: --repo <path> (repeatable, overrides CK_REPOS), --json-in <file>,\n"
      "        --quiet\n"
      "env: CK_REPOS = colon-separated repo roots, first is the write target\n";
}

namespace {

struct Args {
  std::vector<std::string> positional;
  Json flags = Json::object();
  bool quiet = false;
};

const std::set<std::string> kBoolFlags = {"quiet", "force"};

Args parse_args(const std::vector<std::string>& argv, const std::optional<Json>& stdin_json) {
  Args args;
  std::optional<std::string> json_in_file;
  for (size_t i = 0; i < argv.size(); ++i) {
    const std::string& a = argv[i];
    if (a.rfind("--", 0) != 0) {
      args.positional.push_back(a);
      continue;
    }
    std::string key = a.substr(2);
    std::string value;
    bool has_value = false;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
      has_value = true;
    } else if (!kBoolFlags.contains(key) && i + 1 < argv.size() &&
               argv[i + 1].rfind("--", 0) != 0) {
      value = argv[++i];
      has_value = true;
    }
    if (key == "json-in") {
      if (!has_value) throw Error(Errc::usage, "--json-in needs a file");
      json_in_file = value;
      continue;
    }
    if (key == "quiet") {
      args.quiet = true;
      continue;
    }
    if (!has_value) {
      args.flags[key] = true;
    } else if (args.flags.contains(key)) {
      // Repeated flags accumulate.
      if (!args.flags[key].is_array()) args.flags[key] = Json::array({args.flags[key]});
      args.flags[key].push_back(value);
    } else {
      args.flags[key] = value;
    }
  }
  Json structured = Json::object();
  if (json_in_file) {
    structured = read_json_file(*json_in_file);
    if (!structured.is_object()) throw Error(Errc::usage, "--json-in must hold a JSON object");
  } else if (stdin_json) {
    structured = *stdin_json;
    if (!structured.is_object()) throw Error(Errc::usage, "piped JSON input must be an object");
  }
  for (const auto& [k, v] : structured.items()) {
    if (k == "quiet") args.quiet = v.is_boolean() ? v.get<bool>() : true;
    else args.flags[k] = v;
  }
  return args;
}

std::string json_to_string(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::optional<std::string> flag_str(const Args& args, const std::string& key) {
  if (!args.flags.contains(key)) return std::nullopt;
  return json_to_string(args.flags.at(key));
}

std::string require_flag(const Args& args, const std::string& key) {
  auto v = flag_str(args, key);
  if (!v) throw Error(Errc::usage, "missing --" + key);
  return *v;
}

std::vector<std::string> flag_list(const Args& args, const std::string& key) {
  std::vector<std::string> out;
  if (!args.flags.contains(key)) return out;
  const Json& v = args.flags.at(key);
  if (v.is_array())
    for (const auto& e : v) out.push_back(json_to_string(e));
  else
    out.push_back(json_to_string(v));
  return out;
}

bool flag_bool(const Args& args, const std::string& key) {
  if (!args.flags.contains(key)) return false;
  const Json& v = args.flags.at(key);
  if (v.is_boolean()) return v.get<bool>();
  std::string s = json_to_string(v);
  return s == "1" || s == "true" || s == "yes";
}

long long flag_int(const Args& args, const std::string& key, long long fallback) {
  if (!args.flags.contains(key)) return fallback;
  const Json& v = args.flags.at(key);
  if (v.is_number_integer()) return v.get<long long>();
  try {
    return std::stoll(json_to_string(v));
  } catch (const std::exception&) {
    throw Error(Errc::usage, "--" + key + " must be an integer");
  }
}

uint64_t flag_u64(const Args& args, const std::string& key, uint64_t fallback) {
  if (!args.flags.contains(key)) return fallback;
  const Json& v = args.flags.at(key);
  if (v.is_number_unsigned()) return v.get<uint64_t>();
  if (v.is_number_integer()) return static_cast<uint64_t>(v.get<long long>());
  try {
    return std::stoull(json_to_string(v));
  } catch (const std::exception&) {
    throw Error(Errc::usage, "--" + key + " must be an unsigned integer");
  }
}

std::set<std::string> parse_tag_csv(const std::string& csv) {
  std::set<std::string> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    std::string t = comma == std::string::npos ? csv.substr(pos) : csv.substr(pos, comma - pos);
    if (!t.empty()) out.insert(t);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<registry::Repo> open_repos(const Args& args) {
  std::vector<std::string> roots = flag_list(args, "repo");
  if (roots.empty()) {
    if (const char* env = std::getenv("CK_REPOS")) {
      std::string p(env);
      size_t pos = 0;
      while (pos <= p.size()) {
        size_t next = p.find(':', pos);
        std::string r = next == std::string::npos ? p.substr(pos) : p.substr(pos, next - pos);
        if (!r.empty()) roots.push_back(r);
        if (next == std::string::npos) break;
        pos = next + 1;
      }
    }
  }
  if (roots.empty())
    throw Error(Errc::usage, "no repository configured (set CK_REPOS or pass --repo)");
  std::vector<registry::Repo> repos;
  for (const auto& r : roots) repos.push_back(registry::Repo::open(r));
  return repos;
}

// (kind, key) from a "kind:key" positional.
std::pair<std::string, std::string> split_kind_key(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= s.size())
    throw Error(Errc::usage, "expected <kind>:<key>, got '" + s + "'");
  return {s.substr(0, colon), s.substr(colon + 1)};
}

void log_note(const Args& args, const std::string& msg) {
  if (!args.quiet) std::cerr << "ck: " << msg << "\n";
}

// --- command handlers ------------------------------------------------------

Json cmd_repo(const Args& args) {
  if (args.positional.empty() || args.positional[0] != "init")
    throw Error(Errc::usage, "usage: ck repo init <path> --alias <name>");
  if (args.positional.size() < 2) throw Error(Errc::usage, "repo init needs a path");
  std::string alias = require_flag(args, "alias");
  registry::Repo repo = registry::Repo::init(args.positional[1], alias);
  return Json{{"repo", {{"root", repo.root().string()},
                        {"alias", repo.alias()},
                        {"uid", repo.uid()}}}};
}

Json cmd_add(const Args& args) {
  if (args.positional.empty()) throw Error(Errc::usage, "usage: ck add <kind>:<alias> ...");
  auto [kind, alias] = split_kind_key(args.positional[0]);
  auto repos = open_repos(args);
  registry::EntryMeta meta;
  meta.tags = parse_tag_csv(flag_str(args, "tags").value_or(""));
  if (auto meta_file = flag_str(args, "meta")) meta.meta = read_json_file(*meta_file);
  else if (args.flags.contains("meta_json")) meta.meta = args.flags.at("meta_json");
  std::optional<fs::path> payload;
  if (auto p = flag_str(args, "payload")) payload = *p;
  registry::ComponentId id = repos.front().add_entry(kind, alias, meta, payload);
  return Json{{"id", id}};
}

Json cmd_find(const Args& args) {
  if (args.positional.empty()) throw Error(Errc::usage, "usage: ck find <kind>:<key>");
  auto [kind, key] = split_kind_key(args.positional[0]);
  auto repos = open_repos(args);
  for (const auto& repo : repos) {
    try {
      auto [id, meta] = repo.find_entry(kind, key);
      return Json{{"id", id},
                  {"meta", meta.meta},
                  {"tags", meta.tags},
                  {"created_at", meta.created_at},
                  {"schema_version", meta.schema_version}};
    } catch (const Error& e) {
      if (e.code() != Errc::not_found) throw;
    }
  }
  throw Error(Errc::not_found, kind + ":" + key);
}

Json cmd_search(const Args& args) {
  auto repos = open_repos(args);
  std::set<std::string> tags = parse_tag_csv(require_flag(args, "tags"));
  std::optional<std::string> kind = flag_str(args, "kind");
  auto results = registry::search_by_tags(repos, kind, tags);
  return Json{{"results", results}};
}

Json cmd_detect(const Args& args) {
  if (args.positional.empty()) throw Error(Errc::usage, "usage: ck detect <soft-alias>");
  auto repos = open_repos(args);
  const std::string& ref = args.positional[0];
  std::optional<std::pair<registry::ComponentId, registry::EntryMeta>> hit;
  for (const auto& repo : repos) {
    try {
      hit = repo.find_entry("soft", ref);
      break;
    } catch (const Error& e) {
      if (e.code() != Errc::not_found) throw;
    }
  }
  if (!hit) throw Error(Errc::not_found, "soft:" + ref);
  envdetect::SoftPlugin plugin = hit->second.merged().get<envdetect::SoftPlugin>();
  plugin.component_uid = hit->first.uid;
  std::vector<fs::path> extra;
  for (const auto& r : flag_list(args, "root")) extra.emplace_back(r);
  auto found = envdetect::detect_software(plugin, extra);
  Json envs = Json::array();
  for (const auto& e : found) {
    registry::ComponentId id = envdetect::register_env(repos.front(), e);
    Json ej = e;
    ej["uid"] = id.uid;
    envs.push_back(std::move(ej));
  }
  log_note(args, "detected " + std::to_string(found.size()) + " environment(s)");
  return Json{{"envs", std::move(envs)}, {"count", found.size()}};
}

Json cmd_install(const Args& args) {
  if (args.positional.empty()) throw Error(Errc::usage, "usage: ck install <package-alias>");
  auto repos = open_repos(args);
  const std::string& ref = args.positional[0];
  std::optional<std::string> want_version = flag_str(args, "version");

  std::vector<metapkg::PackageSpec> candidates;
  for (const auto& repo : repos) {
    try {
      candidates.push_back(metapkg::load_package(repo, ref));
      break;
    } catch (const Error& e) {
      if (e.code() != Errc::not_found) throw;
    }
  }
  if (candidates.empty()) {
    for (const auto& pkg : metapkg::load_all_packages(repos))
      if (pkg.package_name == ref) candidates.push_back(pkg);
  }
  if (want_version) {
    std::erase_if(candidates, [&](const metapkg::PackageSpec& p) {
      return p.version.raw != *want_version;
    });
  }
  if (candidates.empty())
    throw Error(Errc::not_found, "package:" + ref +
                                     (want_version ? "@" + *want_version : std::string{}));
  const metapkg::PackageSpec* best = &candidates.front();
  for (const auto& c : candidates)
    if (envdetect::compare_versions(c.version, best->version) > 0) best = &c;

  // Install dependencies of the package first.
  auto envs = envdetect::load_all_envs(repos);
  auto packages = metapkg::load_all_packages(repos);
  metapkg::ResolutionPlan plan =
      metapkg::build_resolution_plan(best->deps, envs, packages);
  metapkg::execute_plan(repos.front(), plan);

  metapkg::InstallOptions options;
  options.force = flag_bool(args, "force");
  metapkg::EnvEntry env = metapkg::install_package(
      repos.front(), *best, metapkg::default_install_dir(repos.front(), *best),
      plan.binding, options);
  return Json{{"env", env}, {"install_dir", env.tool_path.string()}, {"env_uid", env.uid}};
}

Json cmd_env(const Args& args) {
  if (args.positional.empty() || args.positional[0] != "list")
    throw Error(Errc::usage, "usage: ck env list");
  auto repos = open_repos(args);
  Json list = Json::array();
  for (const auto& e : envdetect::load_all_envs(repos)) {
    list.push_back(Json{{"uid", e.uid},
                        {"soft_name", e.soft_name},
                        {"version", e.version.raw},
                        {"tool_path", e.tool_path.string()},
                        {"tags", e.tags}});
  }
  size_t count = list.size();
  return Json{{"envs", std::move(list)}, {"count", count}};
}

struct PreparedProgram {
  pipeline::LoadedProgram program;
  metapkg::ResolutionPlan plan;
  registry::Repo write_repo;
};

PreparedProgram prepare_program(const Args& args, const std::string& ref) {
  auto repos = open_repos(args);
  std::optional<pipeline::LoadedProgram> program;
  for (const auto& repo : repos) {
    try {
      program = pipeline::load_program(repo, ref);
      break;
    } catch (const Error& e) {
      if (e.code() != Errc::not_found) throw;
    }
  }
  if (!program) throw Error(Errc::not_found, "program:" + ref);
  auto envs = envdetect::load_all_envs(repos);
  auto packages = metapkg::load_all_packages(repos);
  metapkg::ResolutionPlan plan =
      metapkg::build_resolution_plan(program->spec.deps, envs, packages);
  metapkg::execute_plan(repos.front(), plan);
  return {std::move(*program), std::move(plan), repos.front()};
}

fs::path pick_workdir(const Args& args, const std::string& prefix) {
  if (auto w = flag_str(args, "workdir")) return *w;
  return fs::temp_directory_path() / ("ck-" + prefix + "-" + generate_uid().substr(0, 8));
}

Json cmd_run(const Args& args) {
  if (args.positional.empty()) throw Error(Errc::usage, "usage: ck run <program-alias>");
  PreparedProgram prep = prepare_program(args, args.positional[0]);
  int reps = static_cast<int>(flag_int(args, "reps", prep.program.spec.run.repeat_default));
  if (reps < 1) throw Error(Errc::usage, "--reps must be >= 1");

  autotune::Point point;
  if (auto point_file = flag_str(args, "point")) {
    Json pj = read_json_file(*point_file);
    if (!pj.is_object()) throw Error(Errc::usage, "point file must be a JSON object");
    for (const auto& [k, v] : pj.items()) point[k] = v;
  }

  fs::path workdir = pick_workdir(args, "run");
  pipeline::PipelineState state =
      pipeline::assemble_pipeline(prep.program, prep.plan, workdir);
  state = pipeline::apply_point(state, point);
  auto results = pipeline::run_pipeline(state, reps);

  autotune::ExperimentRecord record;
  record.experiment_uid = generate_uid();
  record.program = prep.program.id;
  record.point = point;
  record.platform = envdetect::collect_platform_info();
  record.env_fingerprint = autotune::env_fingerprint(prep.plan);
  record.timestamp = utc_now_iso8601();
  record.status = "ok";
  for (const auto& r : results) {
    if (r.exit_code == 0 && !r.timed_out) {
      record.repetitions.push_back(
          pipeline::extract_characteristics(r, prep.program.spec.extractor));
    } else {
      record.failed_repetitions.push_back(
          Json{{"rep", r.rep}, {"exit_code", r.exit_code}, {"timed_out", r.timed_out}});
    }
  }
  if (record.repetitions.empty()) record.status = "failed";
  else record.aggregated = pipeline::aggregate_stats(record.repetitions);
  autotune::persist_record(prep.write_repo, record);
  return Json{{"record", record}, {"workdir", workdir.string()}};
}

Json cmd_autotune(const Args& args) {
  if (args.positional.empty()) throw Error(Errc::usage, "usage: ck autotune <program-alias>");
  PreparedProgram prep = prepare_program(args, args.positional[0]);

  autotune::DesignSpace space;
  if (auto space_file = flag_str(args, "space"))
    space = read_json_file(*space_file).get<autotune::DesignSpace>();
  else if (args.flags.contains("space_json"))
    space = args.flags.at("space_json").get<autotune::DesignSpace>();
  else
    throw Error(Errc::usage, "missing --space");

  autotune::Strategy strategy;
  std::string kind = flag_str(args, "strategy").value_or("grid");
  if (kind == "grid") {
    strategy.kind = autotune::Strategy::Kind::grid;
  } else if (kind == "random") {
    strategy.kind = autotune::Strategy::Kind::random;
    strategy.seed = flag_u64(args, "seed", 0);
    strategy.n = static_cast<size_t>(flag_int(args, "iterations", 10));
  } else {
    throw Error(Errc::usage, "--strategy must be grid or random");
  }

  autotune::ExploreOptions options;
  options.repetitions =
      static_cast<int>(flag_int(args, "reps", prep.program.spec.run.repeat_default));
  options.workdir = pick_workdir(args, "autotune");

  auto records =
      autotune::explore(prep.write_repo, prep.program, prep.plan, space, strategy, options);
  Json uids = Json::array();
  for (const auto& r : records) uids.push_back(r.experiment_uid);
  return Json{{"records", records}, {"uids", std::move(uids)}, {"count", records.size()}};
}

std::vector<autotune::ExperimentRecord> gather_experiments(const Args& args) {
  auto repos = open_repos(args);
  std::set<std::string> filter;
  if (auto f = flag_str(args, "experiments")) filter = parse_tag_csv(*f);
  return autotune::load_experiments(repos, filter);
}

Json cmd_pareto(const Args& args) {
  auto objectives = autotune::parse_objectives(require_flag(args, "objectives"));
  auto records = gather_experiments(args);
  auto frontier = autotune::pareto_filter(records, objectives);
  Json uids = Json::array();
  for (const auto& r : frontier) uids.push_back(r.experiment_uid);
  return Json{{"frontier", frontier},
              {"uids", std::move(uids)},
              {"count", frontier.size()},
              {"total", records.size()}};
}

Json cmd_report(const Args& args) {
  auto objectives = autotune::parse_objectives(require_flag(args, "objectives"));
  std::string format_name = flag_str(args, "format").value_or("md");
  solution::ReportFormat format;
  if (format_name == "md" || format_name == "markdown") format = solution::ReportFormat::markdown;
  else if (format_name == "json") format = solution::ReportFormat::json;
  else throw Error(Errc::usage, "--format must be md or json");

  std::vector<solution::SourcedRecord> records;
  std::vector<std::string> bundle_files = flag_list(args, "bundle");
  if (!bundle_files.empty()) {
    std::vector<solution::ResultBundle> bundles;
    for (const auto& f : bundle_files)
      bundles.push_back(read_json_file(f).get<solution::ResultBundle>());
    records = solution::merge_bundles(bundles);
  } else {
    for (const auto& r : gather_experiments(args)) records.push_back({"local", r});
  }

  std::optional<solution::ResultBundle> reference;
  if (auto ref = flag_str(args, "reference"))
    reference = read_json_file(*ref).get<solution::ResultBundle>();

  std::string report = solution::render_report(records, objectives, format, reference);
  if (auto out = flag_str(args, "out")) write_text_file(*out, report);
  if (format == solution::ReportFormat::json)
    return Json{{"rows", Json::parse(report)}, {"format", "json"}};
  return Json{{"report", report}, {"format", "md"}};
}

Json cmd_solution(const Args& args) {
  if (args.positional.empty())
    throw Error(Errc::usage, "usage: ck solution init <manifest> | ck solution benchmark <name>");
  const std::string& verb = args.positional[0];
  auto repos = open_repos(args);
  if (verb == "init") {
    if (args.positional.size() < 2)
      throw Error(Errc::usage, "usage: ck solution init <manifest>");
    solution::SolutionManifest manifest =
        read_json_file(args.positional[1]).get<solution::SolutionManifest>();
    solution::SolutionState state = solution::init_solution(manifest, repos.front());
    Json journal = Json::array();
    for (const auto& t : state.journal)
      journal.push_back(Json{{"index", t.index},
                             {"action", t.action},
                             {"status", t.status},
                             {"note", t.note}});
    return Json{{"journal", std::move(journal)},
                {"state_dir", state.state_dir.string()},
                {"completed", state.completed()}};
  }
  if (verb == "benchmark") {
    if (args.positional.size() < 2)
      throw Error(Errc::usage, "usage: ck solution benchmark <name>");
    solution::ResultBundle bundle =
        solution::run_benchmark(args.positional[1], repos.front());
    fs::path bundle_file =
        solution::solution_state_dir(repos.front(), args.positional[1]) / "results.bundle.json";

    // Aggregated objective values, one row per record.
    auto [id, meta] = repos.front().find_entry("solution", args.positional[1]);
    (void)id;
    solution::SolutionManifest manifest = meta.meta.get<solution::SolutionManifest>();
    Json summary = Json::array();
    for (const auto& r : bundle.records) {
      Json row;
      row["experiment_uid"] = r.experiment_uid;
      row["status"] = r.status;
      Json point = Json::object();
      for (const auto& [k, v] : r.point) point[k] = v;
      row["point"] = std::move(point);
      Json values = Json::object();
      for (const auto& o : manifest.benchmark.objectives) {
        if (r.status == "ok" && r.aggregated.contains(o.key))
          values[o.key] = autotune::objective_value(r, o);
      }
      row["objectives"] = std::move(values);
      summary.push_back(std::move(row));
    }
    log_note(args, "bundle written to " + bundle_file.string());
    return Json{{"bundle_file", bundle_file.string()},
                {"record_count", bundle.records.size()},
                {"objective_summary", std::move(summary)}};
  }
  throw Error(Errc::usage, "unknown solution verb '" + verb + "'");
}

Json cmd_bundle(const Args& args) {
  if (args.positional.empty() || args.positional[0] != "merge")
    throw Error(Errc::usage, "usage: ck bundle merge <file>...");
  if (args.positional.size() < 2)
    throw Error(Errc::usage, "bundle merge needs at least one file");
  std::vector<solution::ResultBundle> bundles;
  for (size_t i = 1; i < args.positional.size(); ++i)
    bundles.push_back(read_json_file(args.positional[i]).get<solution::ResultBundle>());
  auto merged = solution::merge_bundles(bundles);
  Json records = Json::array();
  Json uids = Json::array();
  for (const auto& sr : merged) {
    Json rj = sr.record;
    rj["source"] = sr.source;
    records.push_back(std::move(rj));
    uids.push_back(sr.record.experiment_uid);
  }
  if (auto out = flag_str(args, "out"))
    write_json_file(*out, Json{{"records", records}, {"merged_from", bundles.size()}});
  return Json{{"records", std::move(records)},
              {"uids", std::move(uids)},
              {"count", merged.size()}};
}

}  // namespace

ResponseEnvelope dispatch(const std::vector<std::string>& argv,
                          const std::optional<Json>& stdin_json) {
  ResponseEnvelope envelope;
  try {
    if (argv.empty()) throw Error(Errc::usage, usage_text());
    const std::string& command = argv[0];
    Args args = parse_args({argv.begin() + 1, argv.end()}, stdin_json);

    if (command == "repo") envelope.payload = cmd_repo(args);
    else if (command == "add") envelope.payload = cmd_add(args);
    else if (command == "find") envelope.payload = cmd_find(args);
    else if (command == "search") envelope.payload = cmd_search(args);
    else if (command == "detect") envelope.payload = cmd_detect(args);
    else if (command == "install") envelope.payload = cmd_install(args);
    else if (command == "env") envelope.payload = cmd_env(args);
    else if (command == "run") envelope.payload = cmd_run(args);
    else if (command == "autotune") envelope.payload = cmd_autotune(args);
    else if (command == "pareto") envelope.payload = cmd_pareto(args);
    else if (command == "report") envelope.payload = cmd_report(args);
    else if (command == "solution") envelope.payload = cmd_solution(args);
    else if (command == "bundle") envelope.payload = cmd_bundle(args);
    else if (command == "help" || command == "--help")
      envelope.payload = Json{{"usage", usage_text()}};
    else
      throw Error(Errc::usage, "unknown command '" + command + "'\n" + usage_text());
  } catch (const Error& e) {
    switch (e.code()) {
      case Errc::usage: envelope.return_code = 2; break;
      case Errc::io_failure: envelope.return_code = 3; break;
      default: envelope.return_code = 1; break;
    }
    envelope.error = e.what();
  } catch (const Json::exception& e) {
    envelope.return_code = 1;
    envelope.error = std::string("json error: ") + e.what();
  } catch (const std::exception& e) {
    envelope.return_code = 1;
    envelope.error = e.what();
  }
  return envelope;
}

}  // namespace ck::cli
