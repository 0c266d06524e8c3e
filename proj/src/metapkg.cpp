#include "ck/metapkg.hpp"

#include <algorithm>
#include <fstream>

#include "ck/errors.hpp"
#include "ck/proc.hpp"

namespace fs = std::filesystem;

namespace ck::metapkg {

void to_json(Json& j, const DependencySpec& d) {
  j = Json{{"name", d.name},
           {"tags", d.tags},
           {"optional", d.optional},
           {"allow_install", d.allow_install}};
  if (d.version_min) j["version_min"] = d.version_min->raw;
  if (d.version_max) j["version_max"] = d.version_max->raw;
}

void from_json(const Json& j, DependencySpec& d) {
  d.name = j.at("name").get<std::string>();
  d.tags = j.at("tags").get<std::set<std::string>>();
  if (j.contains("version_min")) d.version_min = Version::parse(j.at("version_min").get<std::string>());
  if (j.contains("version_max")) d.version_max = Version::parse(j.at("version_max").get<std::string>());
  d.optional = j.value("optional", false);
  d.allow_install = j.value("allow_install", true);
  if (d.tags.empty())
    throw Error(Errc::schema_violation, "dependency '" + d.name + "' has no tags");
  if (d.version_min && d.version_max &&
      envdetect::compare_versions(*d.version_min, *d.version_max) > 0)
    throw Error(Errc::schema_violation, "dependency '" + d.name + "': version_min > version_max");
}

void to_json(Json& j, const InstallStep& s) {
  switch (s.kind) {
    case InstallStep::Kind::download:
      j = Json{{"kind", "download"}, {"url", s.url}, {"sha256", s.sha256}};
      if (!s.filename.empty()) j["filename"] = s.filename;
      return;
    case InstallStep::Kind::extract:
      j = Json{{"kind", "extract"}, {"archive_format", s.archive_format}, {"archive", s.archive}};
      return;
    case InstallStep::Kind::script:
      j = Json{{"kind", "script"}, {"command", s.command}};
      if (!s.workdir.empty()) j["workdir"] = s.workdir;
      return;
  }
}

void from_json(const Json& j, InstallStep& s) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "download") {
    s.kind = InstallStep::Kind::download;
    s.url = j.at("url").get<std::string>();
    s.sha256 = j.at("sha256").get<std::string>();
    s.filename = j.value("filename", "");
    if (s.sha256.size() != 64 ||
        !std::all_of(s.sha256.begin(), s.sha256.end(), [](char c) {
          return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
        }))
      throw Error(Errc::schema_violation, "download step needs a 64-hex sha256");
  } else if (kind == "extract") {
    s.kind = InstallStep::Kind::extract;
    s.archive_format = j.at("archive_format").get<std::string>();
    s.archive = j.at("archive").get<std::string>();
    if (s.archive_format != "tar-gz" && s.archive_format != "zip")
      throw Error(Errc::schema_violation, "unknown archive_format '" + s.archive_format + "'");
  } else if (kind == "script") {
    s.kind = InstallStep::Kind::script;
    s.command = j.at("command").get<std::vector<std::string>>();
    s.workdir = j.value("workdir", "");
    if (s.command.empty())
      throw Error(Errc::schema_violation, "script step needs a non-empty command");
  } else {
    throw Error(Errc::schema_violation, "unknown install step kind '" + kind + "'");
  }
}

void to_json(Json& j, const PackageSpec& p) {
  j = Json{{"package_name", p.package_name},
           {"tags", p.tags},
           {"version", p.version.raw},
           {"deps", p.deps},
           {"install_steps", p.install_steps},
           {"provides_env", p.provides_env}};
}

void from_json(const Json& j, PackageSpec& p) {
  p.package_name = j.at("package_name").get<std::string>();
  p.tags = j.at("tags").get<std::set<std::string>>();
  p.version = Version::parse(j.at("version").get<std::string>());
  p.deps = j.value("deps", std::vector<DependencySpec>{});
  p.install_steps = j.at("install_steps").get<std::vector<InstallStep>>();
  p.provides_env = j.value("provides_env", std::map<std::string, std::string>{});
  if (p.install_steps.empty())
    throw Error(Errc::schema_violation, "package '" + p.package_name + "' has no install steps");
}

Json ResolutionPlan::to_json_doc() const {
  Json j;
  j["actions"] = Json::array();
  for (const auto& a : actions) {
    Json aj;
    aj["dep"] = a.dep_name;
    if (a.kind == ResolutionAction::Kind::use_env) {
      aj["action"] = "use_env";
      aj["env"] = a.env;
    } else {
      aj["action"] = "install";
      aj["package"] = a.package;
    }
    j["actions"].push_back(std::move(aj));
  }
  j["skipped"] = skipped;
  Json b = Json::object();
  for (const auto& [name, env] : binding) b[name] = env;
  j["binding"] = std::move(b);
  return j;
}

namespace {

bool version_in_bounds(const Version& v, const DependencySpec& dep) {
  if (dep.version_min && envdetect::compare_versions(v, *dep.version_min) < 0) return false;
  if (dep.version_max && envdetect::compare_versions(v, *dep.version_max) > 0) return false;
  return true;
}

bool tags_superset(const std::set<std::string>& have, const std::set<std::string>& want) {
  return std::includes(have.begin(), have.end(), want.begin(), want.end());
}

}  // namespace

std::optional<EnvEntry> resolve_dependency(const DependencySpec& dep,
                                           std::span<const EnvEntry> envs) {
  const EnvEntry* best = nullptr;
  for (const auto& env : envs) {
    if (!tags_superset(env.tags, dep.tags)) continue;
    if (!version_in_bounds(env.version, dep)) continue;
    if (!best) {
      best = &env;
      continue;
    }
    int vc = envdetect::compare_versions(env.version, best->version);
    if (vc > 0 ||
        (vc == 0 && (env.detected_at > best->detected_at ||
                     (env.detected_at == best->detected_at && env.uid < best->uid))))
      best = &env;
  }
  if (!best) return std::nullopt;
  return *best;
}

namespace {

const PackageSpec* select_package(const DependencySpec& dep,
                                  std::span<const PackageSpec> packages) {
  const PackageSpec* best = nullptr;
  for (const auto& pkg : packages) {
    if (!tags_superset(pkg.tags, dep.tags)) continue;
    if (!version_in_bounds(pkg.version, dep)) continue;
    if (!best || envdetect::compare_versions(pkg.version, best->version) > 0 ||
        (envdetect::compare_versions(pkg.version, best->version) == 0 &&
         pkg.package_name < best->package_name))
      best = &pkg;
  }
  return best;
}

struct Planner {
  std::span<const EnvEntry> envs;
  std::span<const PackageSpec> packages;
  ResolutionPlan plan;
  std::map<std::string, const PackageSpec*> planned_deps;  // dep name -> package (null = env)
  std::set<std::string> planned_packages;                  // "name@version" already in plan
  std::vector<std::string> visiting;                       // stack for cycle detection

  void plan_dep(const DependencySpec& dep) {
    if (auto it = planned_deps.find(dep.name); it != planned_deps.end()) {
      // One binding per dep name; a second spec must accept what was planned.
      bool compatible;
      if (it->second == nullptr) {
        const EnvEntry& bound = plan.binding.at(dep.name);
        compatible = tags_superset(bound.tags, dep.tags) && version_in_bounds(bound.version, dep);
      } else {
        compatible = tags_superset(it->second->tags, dep.tags) &&
                     version_in_bounds(it->second->version, dep);
      }
      if (!compatible)
        throw Error(Errc::unresolved_dependency,
                    "'" + dep.name + "' conflicts with an existing binding");
      return;
    }
    if (auto env = resolve_dependency(dep, envs)) {
      plan.binding[dep.name] = *env;
      planned_deps[dep.name] = nullptr;
      plan.actions.push_back(
          {ResolutionAction::Kind::use_env, dep.name, *env, PackageSpec{}});
      return;
    }
    if (dep.allow_install) {
      if (const PackageSpec* pkg = select_package(dep, packages)) {
        plan_install(dep, pkg);
        return;
      }
    }
    if (dep.optional) {
      plan.skipped.push_back(dep.name);
      return;
    }
    throw Error(Errc::unresolved_dependency, "'" + dep.name + "'");
  }

  void plan_install(const DependencySpec& dep, const PackageSpec* pkg) {
    std::string key = pkg->package_name + "@" + pkg->version.raw;
    if (auto it = std::find(visiting.begin(), visiting.end(), key); it != visiting.end()) {
      std::string path;
      for (auto j = it; j != visiting.end(); ++j) path += *j + " -> ";
      path += key;
      throw Error(Errc::dependency_cycle, path);
    }
    if (!planned_packages.contains(key)) {
      visiting.push_back(key);
      for (const auto& sub : pkg->deps) plan_dep(sub);
      visiting.pop_back();
      planned_packages.insert(key);
    }
    planned_deps[dep.name] = pkg;
    plan.actions.push_back({ResolutionAction::Kind::install, dep.name, EnvEntry{}, *pkg});
  }
};

}  // namespace

ResolutionPlan build_resolution_plan(std::span<const DependencySpec> deps,
                                     std::span<const EnvEntry> envs,
                                     std::span<const PackageSpec> packages) {
  Planner planner{envs, packages, {}, {}, {}};
  for (const auto& dep : deps) planner.plan_dep(dep);
  return std::move(planner.plan);
}

Fetcher default_fetcher() {
  return [](const std::string& url, const fs::path& dest) {
    std::string src = url;
    if (src.rfind("file://", 0) == 0) src = src.substr(7);
    if (src.find("://") != std::string::npos)
      throw Error(Errc::io_failure, "unsupported URL scheme: " + url);
    std::error_code ec;
    fs::copy_file(src, dest, fs::copy_options::overwrite_existing, ec);
    if (ec) throw Error(Errc::io_failure, "fetch failed: " + url + " (" + ec.message() + ")");
  };
}

fs::path default_install_dir(const registry::Repo& repo, const PackageSpec& pkg) {
  return repo.root() / "installed" /
         (pkg.package_name + "-" + pkg.version.raw + "-" + generate_uid().substr(0, 8));
}

namespace {

std::string render_install_template(const std::string& tmpl, const fs::path& install_dir) {
  std::string out = tmpl;
  const std::string needle = "{install_dir}";
  size_t pos = 0;
  std::string value = install_dir.string();
  while ((pos = out.find(needle, pos)) != std::string::npos) {
    out.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return out;
}

void run_step(const InstallStep& step, size_t index, const fs::path& target_dir,
              const std::map<std::string, EnvEntry>& bound_deps, const Fetcher& fetch) {
  switch (step.kind) {
    case InstallStep::Kind::download: {
      std::string name = step.filename;
      if (name.empty()) {
        auto slash = step.url.find_last_of('/');
        name = slash == std::string::npos ? step.url : step.url.substr(slash + 1);
        if (name.empty()) name = "download";
      }
      fs::path dest = target_dir / name;
      fetch(step.url, dest);
      std::string actual = sha256_file_hex(dest);
      if (actual != step.sha256)
        throw Error(Errc::checksum_mismatch,
                    "step " + std::to_string(index) + ": expected " + step.sha256 +
                        ", actual " + actual);
      return;
    }
    case InstallStep::Kind::extract: {
      fs::path archive = target_dir / step.archive;
      if (!fs::exists(archive))
        throw Error(Errc::step_failed,
                    "step " + std::to_string(index) + ": archive missing: " + archive.string());
      proc::SpawnSpec spawn;
      if (step.archive_format == "tar-gz")
        spawn.argv = {"tar", "-xzf", archive.string(), "-C", target_dir.string()};
      else
        spawn.argv = {"unzip", "-o", "-q", archive.string(), "-d", target_dir.string()};
      spawn.timeout_s = 600;
      auto res = proc::run_process(spawn);
      if (res.exit_code != 0)
        throw Error(Errc::step_failed, "step " + std::to_string(index) + ": extract exited " +
                                           std::to_string(res.exit_code));
      return;
    }
    case InstallStep::Kind::script: {
      proc::SpawnSpec spawn;
      spawn.argv = step.command;
      for (auto& a : spawn.argv) a = render_install_template(a, target_dir);
      spawn.workdir = step.workdir.empty() ? target_dir : target_dir / step.workdir;
      for (const auto& [name, env] : bound_deps)
        for (const auto& [k, v] : env.env_vars) spawn.env[k] = v;
      spawn.env["CK_INSTALL_DIR"] = target_dir.string();
      spawn.timeout_s = 600;
      auto res = proc::run_process(spawn);
      if (res.exit_code != 0)
        throw Error(Errc::step_failed, "step " + std::to_string(index) + ": command exited " +
                                           std::to_string(res.exit_code) + ": " +
                                           res.stderr_text.substr(0, 512));
      return;
    }
  }
}

}  // namespace

EnvEntry install_package(const registry::Repo& repo, const PackageSpec& pkg,
                         const fs::path& target_dir,
                         const std::map<std::string, EnvEntry>& bound_deps,
                         const InstallOptions& options) {
  std::error_code ec;
  fs::create_directories(target_dir.parent_path(), ec);
  fs::path lock_file = target_dir;
  lock_file += ".lock";
  FileLock lock(lock_file);

  if (fs::exists(target_dir) && !fs::is_empty(target_dir, ec)) {
    if (!options.force)
      throw Error(Errc::io_failure,
                  "target dir not empty: " + target_dir.string() + " (use force to reinstall)");
    fs::remove_all(target_dir, ec);
  }
  fs::create_directories(target_dir, ec);
  if (ec) throw Error(Errc::io_failure, "cannot create " + target_dir.string());

  try {
    for (size_t i = 0; i < pkg.install_steps.size(); ++i)
      run_step(pkg.install_steps[i], i, target_dir, bound_deps, options.fetcher);
  } catch (...) {
    std::error_code cleanup;
    fs::remove_all(target_dir, cleanup);
    throw;
  }

  EnvEntry entry;
  entry.soft_name = pkg.package_name;
  entry.soft_uid = pkg.component_uid;
  entry.tags = pkg.tags;
  entry.tags.insert("installed");
  entry.version = pkg.version;
  entry.tool_path = target_dir;
  for (const auto& [var, tmpl] : pkg.provides_env)
    entry.env_vars[var] = render_install_template(tmpl, target_dir);
  entry.platform = envdetect::collect_platform_info();
  entry.detected_at = utc_now_iso8601();
  registry::ComponentId id = envdetect::register_env(repo, entry);
  entry.uid = id.uid;
  return entry;
}

void execute_plan(const registry::Repo& repo, ResolutionPlan& plan,
                  const InstallOptions& options) {
  std::map<std::string, EnvEntry> installed;  // package key -> env
  for (auto& action : plan.actions) {
    if (action.kind != ResolutionAction::Kind::install) continue;
    std::string key = action.package.package_name + "@" + action.package.version.raw;
    if (auto it = installed.find(key); it != installed.end()) {
      action.env = it->second;
      plan.binding[action.dep_name] = it->second;
      continue;
    }
    EnvEntry env = install_package(repo, action.package,
                                   default_install_dir(repo, action.package),
                                   plan.binding, options);
    installed[key] = env;
    action.env = env;
    plan.binding[action.dep_name] = env;
  }
}

PackageSpec load_package(const registry::Repo& repo, const std::string& key) {
  auto [id, meta] = repo.find_entry("package", key);
  PackageSpec pkg = meta.merged().get<PackageSpec>();
  pkg.component_uid = id.uid;
  return pkg;
}

std::vector<PackageSpec> load_all_packages(std::span<const registry::Repo> repos) {
  std::vector<PackageSpec> out;
  for (const auto& repo : repos)
    for (const auto& id : repo.list_entries("package"))
      out.push_back(load_package(repo, id.uid));
  return out;
}

}  // namespace ck::metapkg
