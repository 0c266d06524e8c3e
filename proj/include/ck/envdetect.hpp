#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ck/registry.hpp"
#include "ck/util.hpp"
#include "ck/version.hpp"

namespace ck::envdetect {

struct ProbeSpec {
  std::vector<std::string> binary_names;
  // Literal paths plus the token "$PATH" (expanded at call time). Literal
  // roots are searched non-recursively plus one bin/ level.
  std::vector<std::string> search_roots;
  std::vector<std::string> version_args;
  std::string version_regex;  // exactly one capture group
  double run_timeout_s = 10.0;
};

struct SoftPlugin {
  std::string soft_name;
  std::set<std::string> tags;
  ProbeSpec probe;
  // var-name -> template with {path}, {dir}, {version} placeholders
  std::map<std::string, std::string> env_template;
  std::string component_uid;  // registry uid when loaded from kind `soft`
};

void to_json(Json& j, const SoftPlugin& p);
void from_json(const Json& j, SoftPlugin& p);

struct PlatformInfo {
  std::string os_name = "unknown";
  std::string os_version = "unknown";
  std::string cpu_model = "unknown";
  int cpu_count = 1;
  long long memory_mb = 0;
  std::string hostname_hash;  // 16 hex chars; hostname itself is never stored

  bool operator==(const PlatformInfo&) const = default;
};

void to_json(Json& j, const PlatformInfo& p);
void from_json(const Json& j, PlatformInfo& p);

struct EnvEntry {
  std::string soft_name;
  std::string soft_uid;  // ComponentId uid of the plugin, may be empty
  std::set<std::string> tags;  // plugin tags plus "detected" or "installed"
  Version version;
  std::filesystem::path tool_path;
  std::map<std::string, std::string> env_vars;
  PlatformInfo platform;
  std::string detected_at;
  std::string uid;  // registry uid once registered
};

void to_json(Json& j, const EnvEntry& e);
void from_json(const Json& j, EnvEntry& e);

// Throws PluginInvalid on a malformed plugin; otherwise probe failures are
// skipped and the result may be empty.
std::vector<EnvEntry> detect_software(
    const SoftPlugin& plugin,
    std::span<const std::filesystem::path> extra_roots = {});

// Stores under kind `env`; re-detection of the same (tool_path, version)
// updates detected_at in place instead of duplicating.
registry::ComponentId register_env(const registry::Repo& repo, const EnvEntry& entry);

EnvEntry load_env(const registry::Repo& repo, const std::string& key);
std::vector<EnvEntry> load_all_envs(std::span<const registry::Repo> repos);

enum class ScriptDialect { posix_shell, windows_batch };

std::string render_env_script(const EnvEntry& entry, ScriptDialect dialect);

PlatformInfo collect_platform_info();

}  // namespace ck::envdetect
