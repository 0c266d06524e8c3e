#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ck/envdetect.hpp"
#include "ck/registry.hpp"

namespace ck::metapkg {

using envdetect::EnvEntry;
using envdetect::Version;

struct DependencySpec {
  std::string name;
  std::set<std::string> tags;
  std::optional<Version> version_min;
  std::optional<Version> version_max;
  bool optional = false;
  bool allow_install = true;
};

void to_json(Json& j, const DependencySpec& d);
void from_json(const Json& j, DependencySpec& d);

struct InstallStep {
  enum class Kind { download, extract, script };
  Kind kind = Kind::script;
  // download
  std::string url;
  std::string sha256;  // 64 hex chars
  std::string filename;  // target file name, default = last url path segment
  // extract
  std::string archive_format;  // "tar-gz" | "zip"
  std::string archive;         // file inside the install dir
  // script
  std::vector<std::string> command;  // exec-style argv, no shell
  std::string workdir;               // relative to the install dir
};

void to_json(Json& j, const InstallStep& s);
void from_json(const Json& j, InstallStep& s);

struct PackageSpec {
  std::string package_name;
  std::set<std::string> tags;
  Version version;
  std::vector<DependencySpec> deps;
  std::vector<InstallStep> install_steps;
  std::map<std::string, std::string> provides_env;  // {install_dir} placeholder
  std::string component_uid;  // registry uid when loaded from kind `package`
};

void to_json(Json& j, const PackageSpec& p);
void from_json(const Json& j, PackageSpec& p);

struct ResolutionAction {
  enum class Kind { use_env, install };
  Kind kind = Kind::use_env;
  std::string dep_name;   // dependency satisfied by this action
  EnvEntry env;           // use_env
  PackageSpec package;    // install
};

struct ResolutionPlan {
  std::vector<ResolutionAction> actions;
  std::map<std::string, EnvEntry> binding;  // filled for use_env at plan time,
                                            // for install after execution
  std::vector<std::string> skipped;         // unsatisfiable optional deps

  Json to_json_doc() const;
};

// Highest version wins; ties broken by latest detected_at, then lowest uid.
std::optional<EnvEntry> resolve_dependency(const DependencySpec& dep,
                                           std::span<const EnvEntry> envs);

ResolutionPlan build_resolution_plan(std::span<const DependencySpec> deps,
                                     std::span<const EnvEntry> envs,
                                     std::span<const PackageSpec> packages);

// Copies url -> dest. The default fetcher handles file:// URLs and plain
// filesystem paths.
using Fetcher = std::function<void(const std::string& url, const std::filesystem::path& dest)>;
Fetcher default_fetcher();

struct InstallOptions {
  bool force = false;
  Fetcher fetcher = default_fetcher();
};

// Runs the steps in order inside target_dir; any failure removes target_dir.
// On success the provided environment is registered under kind `env`.
EnvEntry install_package(const registry::Repo& repo, const PackageSpec& pkg,
                         const std::filesystem::path& target_dir,
                         const std::map<std::string, EnvEntry>& bound_deps,
                         const InstallOptions& options = {});

// Standard install location: <repo-root>/installed/<name>-<version>-<uid8>/
std::filesystem::path default_install_dir(const registry::Repo& repo, const PackageSpec& pkg);

// Executes install actions of a plan against a repo and completes `binding`.
void execute_plan(const registry::Repo& repo, ResolutionPlan& plan,
                  const InstallOptions& options = {});

PackageSpec load_package(const registry::Repo& repo, const std::string& key);
std::vector<PackageSpec> load_all_packages(std::span<const registry::Repo> repos);

}  // namespace ck::metapkg
