#include "ck/envdetect.hpp"

#include <unistd.h>
#include <sys/utsname.h>

#include <algorithm>
#include <fstream>
#include <regex>
#include <thread>

#include "ck/errors.hpp"
#include "ck/proc.hpp"

namespace fs = std::filesystem;

namespace ck::envdetect {

namespace {

constexpr size_t kProbeOutputCap = 64 * 1024;

bool is_env_var_name(const std::string& s) {
  if (s.empty() || !(s[0] >= 'A' && s[0] <= 'Z')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

std::string substitute(std::string tmpl, const std::map<std::string, std::string>& subs) {
  for (const auto& [key, value] : subs) {
    std::string needle = "{" + key + "}";
    size_t pos = 0;
    while ((pos = tmpl.find(needle, pos)) != std::string::npos) {
      tmpl.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  return tmpl;
}

std::vector<std::string> path_entries() {
  std::vector<std::string> out;
  const char* path = ::getenv("PATH");
  if (!path) return out;
  std::string p(path);
  size_t pos = 0;
  while (pos <= p.size()) {
    size_t next = p.find(':', pos);
    std::string dir = next == std::string::npos ? p.substr(pos) : p.substr(pos, next - pos);
    if (!dir.empty()) out.push_back(dir);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

bool is_executable_file(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(fs::status(p, ec))) return false;
  return ::access(p.c_str(), X_OK) == 0;
}

std::string first_line_of(const fs::path& file, const std::string& prefix) {
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) return line;
  }
  return {};
}

}  // namespace

void to_json(Json& j, const SoftPlugin& p) {
  j = Json{{"soft_name", p.soft_name},
           {"tags", p.tags},
           {"probe",
            {{"binary_names", p.probe.binary_names},
             {"search_roots", p.probe.search_roots},
             {"version_args", p.probe.version_args},
             {"version_regex", p.probe.version_regex},
             {"run_timeout_s", p.probe.run_timeout_s}}},
           {"env_template", p.env_template}};
}

void from_json(const Json& j, SoftPlugin& p) {
  p.soft_name = j.at("soft_name").get<std::string>();
  p.tags = j.at("tags").get<std::set<std::string>>();
  const Json& probe = j.at("probe");
  p.probe.binary_names = probe.at("binary_names").get<std::vector<std::string>>();
  p.probe.search_roots = probe.at("search_roots").get<std::vector<std::string>>();
  p.probe.version_args = probe.at("version_args").get<std::vector<std::string>>();
  p.probe.version_regex = probe.at("version_regex").get<std::string>();
  p.probe.run_timeout_s = probe.value("run_timeout_s", 10.0);
  p.env_template = j.value("env_template", std::map<std::string, std::string>{});
}

void to_json(Json& j, const PlatformInfo& p) {
  j = Json{{"os_name", p.os_name},         {"os_version", p.os_version},
           {"cpu_model", p.cpu_model},     {"cpu_count", p.cpu_count},
           {"memory_mb", p.memory_mb},     {"hostname_hash", p.hostname_hash}};
}

void from_json(const Json& j, PlatformInfo& p) {
  p.os_name = j.value("os_name", "unknown");
  p.os_version = j.value("os_version", "unknown");
  p.cpu_model = j.value("cpu_model", "unknown");
  p.cpu_count = j.value("cpu_count", 1);
  p.memory_mb = j.value("memory_mb", 0LL);
  p.hostname_hash = j.value("hostname_hash", "");
}

void to_json(Json& j, const EnvEntry& e) {
  j = Json{{"soft_name", e.soft_name},
           {"soft_uid", e.soft_uid},
           {"tags", e.tags},
           {"version", e.version.raw},
           {"tool_path", e.tool_path.string()},
           {"env_vars", e.env_vars},
           {"platform", e.platform},
           {"detected_at", e.detected_at}};
}

void from_json(const Json& j, EnvEntry& e) {
  e.soft_name = j.value("soft_name", "");
  e.soft_uid = j.value("soft_uid", "");
  e.tags = j.value("tags", std::set<std::string>{});
  e.version = Version::parse(j.value("version", ""));
  e.tool_path = j.value("tool_path", "");
  e.env_vars = j.value("env_vars", std::map<std::string, std::string>{});
  if (j.contains("platform")) e.platform = j.at("platform").get<PlatformInfo>();
  e.detected_at = j.value("detected_at", "");
}

std::vector<EnvEntry> detect_software(const SoftPlugin& plugin,
                                      std::span<const fs::path> extra_roots) {
  if (plugin.probe.binary_names.empty())
    throw Error(Errc::plugin_invalid, plugin.soft_name + ": no binary names");
  std::regex version_re;
  try {
    version_re = std::regex(plugin.probe.version_regex);
  } catch (const std::regex_error& e) {
    throw Error(Errc::plugin_invalid, plugin.soft_name + ": bad regex: " + e.what());
  }
  if (version_re.mark_count() != 1)
    throw Error(Errc::plugin_invalid,
                plugin.soft_name + ": version_regex must have exactly one capture group");
  for (const auto& [var, tmpl] : plugin.env_template) {
    (void)tmpl;
    if (!is_env_var_name(var))
      throw Error(Errc::plugin_invalid, plugin.soft_name + ": bad env var name '" + var + "'");
  }

  // Candidate directories in order: extra roots first, then plugin roots.
  struct Root {
    fs::path dir;
    bool with_bin_level;
  };
  std::vector<Root> roots;
  for (const auto& r : extra_roots) roots.push_back({r, true});
  for (const auto& r : plugin.probe.search_roots) {
    if (r == "$PATH") {
      for (const auto& dir : path_entries()) roots.push_back({dir, false});
    } else {
      roots.push_back({fs::path(r), true});
    }
  }

  PlatformInfo platform = collect_platform_info();
  std::vector<EnvEntry> found;
  std::set<std::string> seen;  // resolved absolute paths

  for (const auto& root : roots) {
    for (const auto& name : plugin.probe.binary_names) {
      std::vector<fs::path> candidates = {root.dir / name};
      if (root.with_bin_level) candidates.push_back(root.dir / "bin" / name);
      for (const auto& cand : candidates) {
        if (!is_executable_file(cand)) continue;
        std::error_code ec;
        fs::path resolved = fs::canonical(cand, ec);
        if (ec) resolved = fs::absolute(cand);
        if (!seen.insert(resolved.string()).second) continue;

        proc::SpawnSpec spawn;
        spawn.argv.push_back(resolved.string());
        for (const auto& a : plugin.probe.version_args) spawn.argv.push_back(a);
        spawn.timeout_s = plugin.probe.run_timeout_s;
        spawn.combine_output = true;
        spawn.capture_limit = kProbeOutputCap;
        proc::SpawnResult run;
        try {
          run = proc::run_process(spawn);
        } catch (const Error&) {
          continue;  // probe failures are skipped, not fatal
        }
        if (run.timed_out || run.spawn_failed || run.exit_code != 0) continue;

        std::smatch m;
        if (!std::regex_search(run.stdout_text, m, version_re) || m.size() < 2) continue;
        std::string version_raw = m[1].str();

        EnvEntry entry;
        entry.soft_name = plugin.soft_name;
        entry.soft_uid = plugin.component_uid;
        entry.tags = plugin.tags;
        entry.tags.insert("detected");
        entry.version = Version::parse(version_raw);
        entry.tool_path = resolved;
        std::map<std::string, std::string> subs = {
            {"path", resolved.string()},
            {"dir", resolved.parent_path().string()},
            {"version", version_raw}};
        for (const auto& [var, tmpl] : plugin.env_template)
          entry.env_vars[var] = substitute(tmpl, subs);
        entry.platform = platform;
        entry.detected_at = utc_now_iso8601();
        found.push_back(std::move(entry));
      }
    }
  }
  return found;
}

registry::ComponentId register_env(const registry::Repo& repo, const EnvEntry& entry) {
  // Dedup rule: same (tool_path, version, soft_name) updates the timestamp.
  for (const auto& id : repo.list_entries("env")) {
    auto [found, meta] = repo.find_entry("env", id.uid);
    EnvEntry existing = meta.merged().get<EnvEntry>();
    if (existing.tool_path == entry.tool_path &&
        existing.version.raw == entry.version.raw &&
        existing.soft_name == entry.soft_name) {
      EnvEntry updated = entry;
      updated.detected_at = utc_now_iso8601();
      registry::EntryMeta new_meta;
      new_meta.tags = updated.tags;
      new_meta.meta = updated;
      new_meta.created_at = meta.created_at;
      new_meta.schema_version = meta.schema_version;
      repo.update_entry(found, new_meta);
      return found;
    }
  }
  registry::EntryMeta meta;
  meta.tags = entry.tags;
  meta.meta = entry;
  return repo.add_entry("env", std::nullopt, meta);
}

EnvEntry load_env(const registry::Repo& repo, const std::string& key) {
  auto [id, meta] = repo.find_entry("env", key);
  EnvEntry entry = meta.merged().get<EnvEntry>();
  entry.uid = id.uid;
  return entry;
}

std::vector<EnvEntry> load_all_envs(std::span<const registry::Repo> repos) {
  std::vector<EnvEntry> out;
  for (const auto& repo : repos) {
    for (const auto& id : repo.list_entries("env")) out.push_back(load_env(repo, id.uid));
  }
  return out;
}

std::string render_env_script(const EnvEntry& entry, ScriptDialect dialect) {
  std::string out;
  switch (dialect) {
    case ScriptDialect::posix_shell:
      for (const auto& [k, v] : entry.env_vars) {
        std::string escaped;
        for (char c : v) {
          if (c == '"' || c == '\\' || c == '$' || c == '`') escaped.push_back('\\');
          escaped.push_back(c);
        }
        out += "export " + k + "=\"" + escaped + "\"\n";
      }
      return out;
    case ScriptDialect::windows_batch:
      for (const auto& [k, v] : entry.env_vars) out += "set " + k + "=" + v + "\r\n";
      return out;
  }
  throw Error(Errc::unsupported_dialect, "unknown script dialect");
}

PlatformInfo collect_platform_info() {
  PlatformInfo info;
  struct utsname uts{};
  if (::uname(&uts) == 0) {
    info.os_name = uts.sysname;
    info.os_version = uts.release;
  }
  std::string model = first_line_of("/proc/cpuinfo", "model name");
  if (!model.empty()) {
    auto colon = model.find(':');
    if (colon != std::string::npos) {
      size_t start = model.find_first_not_of(" \t", colon + 1);
      if (start != std::string::npos) info.cpu_model = model.substr(start);
    }
  }
  unsigned hw = std::thread::hardware_concurrency();
  info.cpu_count = hw >= 1 ? static_cast<int>(hw) : 1;
  std::string mem = first_line_of("/proc/meminfo", "MemTotal");
  if (!mem.empty()) {
    long long kb = 0;
    if (std::sscanf(mem.c_str(), "MemTotal: %lld kB", &kb) == 1) info.memory_mb = kb / 1024;
  }
  char host[256] = {0};
  if (::gethostname(host, sizeof host - 1) == 0) {
    info.hostname_hash = sha256_hex(std::string(host)).substr(0, 16);
  } else {
    info.hostname_hash = sha256_hex(std::string("unknown")).substr(0, 16);
  }
  return info;
}

}  // namespace ck::envdetect
