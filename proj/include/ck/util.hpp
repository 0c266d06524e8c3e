#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace ck {

using Json = nlohmann::json;

// Canonical JSON: UTF-8, keys sorted (nlohmann object order), 2-space
// indent, trailing newline. All on-disk JSON uses this form.
std::string canonical_dump(const Json& j);

Json read_json_file(const std::filesystem::path& file);

// Writes canonical JSON atomically (temp file + rename).
void write_json_file(const std::filesystem::path& file, const Json& j);

void write_text_file(const std::filesystem::path& file, const std::string& text);
std::string read_text_file(const std::filesystem::path& file);

// 16 lowercase hex chars from /dev/urandom.
std::string generate_uid();
bool is_uid(const std::string& s);

// ISO-8601 UTC with microseconds, e.g. "2026-08-10T12:34:56.123456Z".
std::string utc_now_iso8601();

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& data);
std::string sha256_file_hex(const std::filesystem::path& file);

// Create-exclusive lock file with bounded retry; released on destruction.
class FileLock {
 public:
  explicit FileLock(std::filesystem::path lock_file, double timeout_s = 10.0);
  ~FileLock();

  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace ck
