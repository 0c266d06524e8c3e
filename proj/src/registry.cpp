#include "ck/registry.hpp"

#include <algorithm>
#include <fstream>

#include "ck/errors.hpp"

namespace fs = std::filesystem;

namespace ck::registry {

const std::set<std::string>& known_kinds() {
  static const std::set<std::string> kinds = {
      "soft", "package", "program", "env", "experiment", "solution", "dataset-stub"};
  return kinds;
}

bool is_known_kind(const std::string& kind) { return known_kinds().contains(kind); }

bool is_valid_alias(const std::string& alias) {
  if (alias.empty()) return false;
  char c0 = alias[0];
  if (!(std::isalpha(static_cast<unsigned char>(c0)) || c0 == '_')) return false;
  for (char c : alias) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-'))
      return false;
  }
  // An alias must never be mistakable for a uid.
  if (is_uid(alias)) return false;
  return true;
}

void to_json(Json& j, const ComponentId& id) {
  j = Json{{"repo_alias", id.repo_alias}, {"kind", id.kind}, {"uid", id.uid}};
  j["alias"] = id.alias ? Json(*id.alias) : Json(nullptr);
}

void from_json(const Json& j, ComponentId& id) {
  id.repo_alias = j.at("repo_alias").get<std::string>();
  id.kind = j.at("kind").get<std::string>();
  id.uid = j.at("uid").get<std::string>();
  if (j.contains("alias") && !j.at("alias").is_null())
    id.alias = j.at("alias").get<std::string>();
  else
    id.alias.reset();
}

namespace {

void validate_tags(const std::set<std::string>& tags) {
  for (const auto& t : tags) {
    if (t.empty()) throw Error(Errc::schema_violation, "empty tag");
    for (char c : t)
      if (std::isspace(static_cast<unsigned char>(c)))
        throw Error(Errc::schema_violation, "tag contains whitespace: '" + t + "'");
  }
}

void copy_tree(const fs::path& from, const fs::path& to) {
  fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::copy_symlinks);
}

Json info_json(const ComponentId& id, const std::string& created_at, int schema_version) {
  Json info;
  info["uid"] = id.uid;
  info["alias"] = id.alias ? Json(*id.alias) : Json(nullptr);
  info["kind"] = id.kind;
  info["created_at"] = created_at;
  info["schema_version"] = schema_version;
  return info;
}

Json meta_json(const EntryMeta& meta) {
  if (!meta.meta.is_object())
    throw Error(Errc::schema_violation, "entry meta must be a JSON object");
  Json j = meta.meta;
  j["tags"] = meta.tags;
  return j;
}

EntryMeta load_entry_meta(const fs::path& meta_dir) {
  Json meta = read_json_file(meta_dir / "meta.json");
  Json info = read_json_file(meta_dir / "info.json");
  EntryMeta out;
  if (meta.contains("tags")) {
    out.tags = meta.at("tags").get<std::set<std::string>>();
    meta.erase("tags");
  }
  out.meta = std::move(meta);
  out.created_at = info.value("created_at", "");
  out.schema_version = info.value("schema_version", 1);
  return out;
}

}  // namespace

Repo Repo::init(const fs::path& root, const std::string& alias) {
  if (!is_valid_alias(alias)) throw Error(Errc::invalid_alias, "repo alias '" + alias + "'");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(Errc::io_failure, "cannot create " + root.string());
  fs::path descriptor = root / ".ckr.json";
  if (fs::exists(descriptor))
    throw Error(Errc::io_failure, "repo already initialized at " + root.string());
  Json j;
  j["uid"] = generate_uid();
  j["alias"] = alias;
  j["schema_version"] = 1;
  write_json_file(descriptor, j);
  return open(root);
}

Repo Repo::open(const fs::path& root) {
  fs::path descriptor = root / ".ckr.json";
  if (!fs::exists(descriptor))
    throw Error(Errc::not_found, "no repo at " + root.string() + " (missing .ckr.json)");
  Json j = read_json_file(descriptor);
  Repo r;
  r.root_ = fs::absolute(root);
  r.alias_ = j.at("alias").get<std::string>();
  r.uid_ = j.at("uid").get<std::string>();
  return r;
}

fs::path Repo::kind_dir(const std::string& kind) const { return root_ / kind; }

fs::path Repo::index_file() const { return root_ / ".ckr-index.json"; }

fs::path Repo::entry_dir(const ComponentId& id) const {
  return kind_dir(id.kind) / (id.alias ? *id.alias : id.uid);
}

ComponentId Repo::add_entry(const std::string& kind,
                            const std::optional<std::string>& alias,
                            const EntryMeta& meta,
                            const std::optional<fs::path>& payload_dir) const {
  if (!is_known_kind(kind)) throw Error(Errc::unknown_kind, "'" + kind + "'");
  if (alias && !is_valid_alias(*alias))
    throw Error(Errc::invalid_alias, "'" + *alias + "'");
  validate_tags(meta.tags);

  fs::path kdir = kind_dir(kind);
  std::error_code ec;
  fs::create_directories(kdir, ec);
  if (ec) throw Error(Errc::io_failure, "cannot create " + kdir.string());

  std::string uid = generate_uid();
  // Collision triggers regeneration, never failure. Collisions with
  // alias-named entries are caught at lookup time (AmbiguousKey) instead;
  // consulting the index here would rescan the store on every add.
  while (fs::exists(kdir / uid)) uid = generate_uid();

  ComponentId id{alias_, kind, uid, alias};
  if (alias && fs::exists(kdir / *alias))
    throw Error(Errc::duplicate_alias, "'" + *alias + "' in kind '" + kind + "'");

  std::string created = meta.created_at.empty() ? utc_now_iso8601() : meta.created_at;

  // Stage the full entry in a temp dir, then atomically rename into place.
  fs::path staged = kdir / fs::path(".tmp-" + uid);
  fs::create_directories(staged / ".meta");
  write_json_file(staged / ".meta" / "meta.json", meta_json(meta));
  write_json_file(staged / ".meta" / "info.json", info_json(id, created, meta.schema_version));
  if (payload_dir) {
    if (!fs::is_directory(*payload_dir)) {
      fs::remove_all(staged, ec);
      throw Error(Errc::io_failure, "payload dir missing: " + payload_dir->string());
    }
    for (const auto& item : fs::directory_iterator(*payload_dir))
      copy_tree(item.path(), staged / item.path().filename());
  }

  fs::path final_dir = kdir / (alias ? *alias : uid);
  fs::rename(staged, final_dir, ec);
  if (ec) {
    std::error_code ec2;
    fs::remove_all(staged, ec2);
    if (alias && fs::exists(final_dir))
      throw Error(Errc::duplicate_alias, "'" + *alias + "' in kind '" + kind + "'");
    throw Error(Errc::io_failure, "cannot commit entry " + final_dir.string());
  }

  // Best-effort index update; lookups rebuild a stale index on demand.
  try {
    FileLock lock(root_ / ".ckr-index.lock");
    Json index = fs::exists(index_file()) ? read_json_file(index_file()) : Json::object();
    index[kind][uid] = alias ? Json(*alias) : Json(nullptr);
    write_json_file(index_file(), index);
  } catch (const Error&) {
  }
  return id;
}

Json Repo::rebuild_index() const {
  Json index = Json::object();
  for (const auto& kind : known_kinds()) {
    fs::path kdir = kind_dir(kind);
    if (!fs::is_directory(kdir)) continue;
    for (const auto& e : fs::directory_iterator(kdir)) {
      if (!e.is_directory()) continue;
      std::string name = e.path().filename().string();
      if (name.starts_with(".tmp-")) continue;
      fs::path info_file = e.path() / ".meta" / "info.json";
      if (!fs::exists(info_file)) continue;
      Json info;
      try {
        info = read_json_file(info_file);
      } catch (const Error&) {
        continue;
      }
      std::string uid = info.value("uid", "");
      if (!is_uid(uid)) continue;
      if (index.contains(kind) && index[kind].contains(uid)) {
        // Two directories claim the same uid: corrupted store.
        index[kind][uid] = Json::array({index[kind][uid], name});
      } else {
        index[kind][uid] =
            info.contains("alias") && !info["alias"].is_null() ? info["alias"] : Json(nullptr);
      }
    }
  }
  try {
    FileLock lock(root_ / ".ckr-index.lock");
    write_json_file(index_file(), index);
  } catch (const Error&) {
  }
  return index;
}

Json Repo::load_index() const {
  if (fs::exists(index_file())) {
    try {
      return read_json_file(index_file());
    } catch (const Error&) {
    }
  }
  return rebuild_index();
}

std::optional<std::string> Repo::dir_name_for_uid(const std::string& kind,
                                                  const std::string& uid) const {
  auto resolve = [&](const Json& index) -> std::optional<std::string> {
    if (!index.contains(kind) || !index.at(kind).contains(uid)) return std::nullopt;
    const Json& v = index.at(kind).at(uid);
    if (v.is_array())
      throw Error(Errc::ambiguous_key, "uid '" + uid + "' claimed by multiple entries");
    std::string dir = v.is_null() ? uid : v.get<std::string>();
    if (fs::exists(kind_dir(kind) / dir / ".meta" / "info.json")) return dir;
    return std::nullopt;
  };
  if (auto hit = resolve(load_index())) return hit;
  // A miss in a fresh index is authoritative. Rebuild only when the kind
  // directory changed after the index was written (crashed writer, external
  // edits); rebuilding on every miss makes NotFound lookups O(store).
  std::error_code ec;
  auto kind_mtime = fs::last_write_time(kind_dir(kind), ec);
  if (ec) return std::nullopt;  // no kind dir, nothing to find
  auto index_mtime = fs::last_write_time(index_file(), ec);
  if (!ec && index_mtime >= kind_mtime) return std::nullopt;
  return resolve(rebuild_index());
}

std::pair<ComponentId, EntryMeta> Repo::find_entry(const std::string& kind,
                                                   const std::string& key) const {
  if (!is_known_kind(kind)) throw Error(Errc::unknown_kind, "'" + kind + "'");
  fs::path dir = kind_dir(kind) / key;
  std::string dir_name = key;
  if (!fs::exists(dir / ".meta" / "info.json")) {
    std::optional<std::string> via_uid =
        is_uid(key) ? dir_name_for_uid(kind, key) : std::nullopt;
    if (!via_uid) throw Error(Errc::not_found, kind + ":" + key);
    dir_name = *via_uid;
    dir = kind_dir(kind) / dir_name;
  }
  Json info = read_json_file(dir / ".meta" / "info.json");
  ComponentId id;
  id.repo_alias = alias_;
  id.kind = kind;
  id.uid = info.at("uid").get<std::string>();
  if (info.contains("alias") && !info["alias"].is_null())
    id.alias = info["alias"].get<std::string>();
  return {id, load_entry_meta(dir / ".meta")};
}

void Repo::update_entry(const ComponentId& id, const EntryMeta& meta) const {
  validate_tags(meta.tags);
  fs::path dir = entry_dir(id);
  if (!fs::exists(dir / ".meta" / "info.json"))
    throw Error(Errc::not_found, id.kind + ":" + id.uid);
  FileLock lock(dir / ".meta" / ".lock");
  write_json_file(dir / ".meta" / "meta.json", meta_json(meta));
  write_json_file(dir / ".meta" / "info.json",
                  info_json(id, meta.created_at.empty() ? utc_now_iso8601() : meta.created_at,
                            meta.schema_version));
}

void Repo::remove_entry(const std::string& kind, const std::string& key) const {
  auto [id, meta] = find_entry(kind, key);
  (void)meta;
  fs::path dir = entry_dir(id);
  {
    FileLock lock(dir / ".meta" / ".lock");
    // Hide the entry first so readers never see a half-removed one.
    fs::path doomed = kind_dir(kind) / fs::path(".tmp-rm-" + id.uid);
    std::error_code ec;
    fs::rename(dir, doomed, ec);
    if (ec) throw Error(Errc::io_failure, "cannot remove " + dir.string());
    fs::remove_all(doomed, ec);
  }
  try {
    FileLock lock(root_ / ".ckr-index.lock");
    Json index = fs::exists(index_file()) ? read_json_file(index_file()) : Json::object();
    if (index.contains(kind)) index[kind].erase(id.uid);
    write_json_file(index_file(), index);
  } catch (const Error&) {
  }
}

std::vector<ComponentId> Repo::list_entries(const std::string& kind) const {
  if (!is_known_kind(kind)) throw Error(Errc::unknown_kind, "'" + kind + "'");
  std::vector<ComponentId> out;
  fs::path kdir = kind_dir(kind);
  if (!fs::is_directory(kdir)) return out;
  for (const auto& e : fs::directory_iterator(kdir)) {
    if (!e.is_directory()) continue;
    std::string name = e.path().filename().string();
    if (name.starts_with(".tmp-")) continue;
    fs::path info_file = e.path() / ".meta" / "info.json";
    if (!fs::exists(info_file)) continue;
    Json info;
    try {
      info = read_json_file(info_file);
    } catch (const Error&) {
      continue;
    }
    ComponentId id;
    id.repo_alias = alias_;
    id.kind = kind;
    id.uid = info.value("uid", "");
    if (info.contains("alias") && !info["alias"].is_null())
      id.alias = info["alias"].get<std::string>();
    if (is_uid(id.uid)) out.push_back(std::move(id));
  }
  std::sort(out.begin(), out.end(),
            [](const ComponentId& a, const ComponentId& b) { return a.uid < b.uid; });
  return out;
}

std::vector<ComponentId> search_by_tags(std::span<const Repo> repos,
                                        const std::optional<std::string>& kind,
                                        const std::set<std::string>& tags) {
  if (tags.empty()) throw Error(Errc::usage, "tag query must be non-empty");
  std::vector<ComponentId> out;
  std::vector<std::string> kinds;
  if (kind) {
    if (!is_known_kind(*kind)) throw Error(Errc::unknown_kind, "'" + *kind + "'");
    kinds.push_back(*kind);
  } else {
    kinds.assign(known_kinds().begin(), known_kinds().end());
  }
  // One pass per (repo, kind): read each entry's meta/info exactly once.
  for (const Repo& repo : repos) {
    for (const auto& k : kinds) {
      fs::path kdir = repo.root() / k;
      if (!fs::is_directory(kdir)) continue;
      for (const auto& e : fs::directory_iterator(kdir)) {
        if (!e.is_directory()) continue;
        if (e.path().filename().string().starts_with(".tmp-")) continue;
        fs::path meta_file = e.path() / ".meta" / "meta.json";
        fs::path info_file = e.path() / ".meta" / "info.json";
        if (!fs::exists(meta_file) || !fs::exists(info_file)) continue;
        Json meta, info;
        try {
          meta = read_json_file(meta_file);
          info = read_json_file(info_file);
        } catch (const Error&) {
          continue;
        }
        auto entry_tags = meta.value("tags", std::set<std::string>{});
        if (!std::includes(entry_tags.begin(), entry_tags.end(), tags.begin(), tags.end()))
          continue;
        ComponentId id;
        id.repo_alias = repo.alias();
        id.kind = k;
        id.uid = info.value("uid", "");
        if (!is_uid(id.uid)) continue;
        if (info.contains("alias") && !info["alias"].is_null())
          id.alias = info["alias"].get<std::string>();
        out.push_back(std::move(id));
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const ComponentId& a, const ComponentId& b) {
    return std::tie(a.repo_alias, a.kind, a.uid) < std::tie(b.repo_alias, b.kind, b.uid);
  });
  return out;
}

}  // namespace ck::registry
