#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ck/util.hpp"

namespace ck::registry {

// Component kinds are a closed set; unknown kinds are rejected.
const std::set<std::string>& known_kinds();
bool is_known_kind(const std::string& kind);

bool is_valid_alias(const std::string& alias);

struct ComponentId {
  std::string repo_alias;
  std::string kind;
  std::string uid;
  std::optional<std::string> alias;

  bool operator==(const ComponentId&) const = default;
};

void to_json(Json& j, const ComponentId& id);
void from_json(const Json& j, ComponentId& id);

struct EntryMeta {
  std::set<std::string> tags;
  Json meta = Json::object();
  std::string created_at;
  int schema_version = 1;

  // meta with "tags" re-merged — the exact meta.json document. Kind
  // schemas that carry tags themselves (soft, package, env) read this.
  Json merged() const {
    Json j = meta;
    j["tags"] = tags;
    return j;
  }
};

// A repository rooted at a directory carrying `.ckr.json`.
class Repo {
 public:
  static Repo init(const std::filesystem::path& root, const std::string& alias);
  static Repo open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const std::string& alias() const { return alias_; }
  const std::string& uid() const { return uid_; }

  ComponentId add_entry(const std::string& kind,
                        const std::optional<std::string>& alias,
                        const EntryMeta& meta,
                        const std::optional<std::filesystem::path>& payload_dir = {}) const;

  std::pair<ComponentId, EntryMeta> find_entry(const std::string& kind,
                                               const std::string& key) const;

  // Rewrites meta.json/info.json of an existing entry in place (atomic,
  // entry-locked). created_at of `meta` is kept as given.
  void update_entry(const ComponentId& id, const EntryMeta& meta) const;

  void remove_entry(const std::string& kind, const std::string& key) const;

  std::vector<ComponentId> list_entries(const std::string& kind) const;

  // Absolute path of the entry directory (payload lives next to .meta/).
  std::filesystem::path entry_dir(const ComponentId& id) const;

 private:
  Repo() = default;

  std::filesystem::path kind_dir(const std::string& kind) const;
  std::filesystem::path index_file() const;
  Json load_index() const;
  Json rebuild_index() const;
  std::optional<std::string> dir_name_for_uid(const std::string& kind,
                                              const std::string& uid) const;

  std::filesystem::path root_;
  std::string alias_;
  std::string uid_;
};

// Entries whose tag set is a superset of `tags`, over all repos, ordered by
// (repo_alias, kind, uid).
std::vector<ComponentId> search_by_tags(std::span<const Repo> repos,
                                        const std::optional<std::string>& kind,
                                        const std::set<std::string>& tags);

}  // namespace ck::registry
