#include "ck/util.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include "ck/errors.hpp"

namespace fs = std::filesystem;

namespace ck {

std::string canonical_dump(const Json& j) { return j.dump(2) + "\n"; }

Json read_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::io_failure, "cannot open " + file.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw Error(Errc::io_failure, "invalid JSON in " + file.string() + ": " + e.what());
  }
  return j;
}

void write_text_file(const fs::path& file, const std::string& text) {
  fs::path tmp = file;
  tmp += ".tmp-" + generate_uid().substr(0, 8);
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::io_failure, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error(Errc::io_failure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(Errc::io_failure, "rename to " + file.string() + " failed");
  }
}

void write_json_file(const fs::path& file, const Json& j) {
  write_text_file(file, canonical_dump(j));
}

std::string read_text_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

std::string generate_uid() {
  static const char* hexdig = "0123456789abcdef";
  std::array<unsigned char, 8> buf{};
  int fd = ::open("/dev/urandom", O_RDONLY);
  bool ok = false;
  if (fd >= 0) {
    ok = ::read(fd, buf.data(), buf.size()) == static_cast<ssize_t>(buf.size());
    ::close(fd);
  }
  if (!ok) {
    // Fallback only when the system RNG is unreadable.
    std::random_device rd;
    for (auto& b : buf) b = static_cast<unsigned char>(rd());
  }
  std::string uid(16, '0');
  for (size_t i = 0; i < 8; ++i) {
    uid[2 * i] = hexdig[buf[i] >> 4];
    uid[2 * i + 1] = hexdig[buf[i] & 0xf];
  }
  return uid;
}

bool is_uid(const std::string& s) {
  if (s.size() != 16) return false;
  for (char c : s)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

std::string utc_now_iso8601() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto us = duration_cast<microseconds>(now.time_since_epoch()) % 1'000'000;
  std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<int>(us.count()));
  return buf;
}

static std::string digest_to_hex(const unsigned char* md, unsigned len) {
  static const char* hexdig = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned i = 0; i < len; ++i) {
    out[2 * i] = hexdig[md[i] >> 4];
    out[2 * i + 1] = hexdig[md[i] & 0xf];
  }
  return out;
}

std::string sha256_hex(const void* data, size_t len) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned md_len = 0;
  if (!EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr))
    throw Error(Errc::io_failure, "sha256 digest failed");
  return digest_to_hex(md, md_len);
}

std::string sha256_hex(const std::string& data) {
  return sha256_hex(data.data(), data.size());
}

std::string sha256_file_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + file.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned md_len = 0;
  EVP_DigestFinal_ex(ctx, md, &md_len);
  EVP_MD_CTX_free(ctx);
  return digest_to_hex(md, md_len);
}

FileLock::FileLock(fs::path lock_file, double timeout_s) : path_(std::move(lock_file)) {
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                      std::chrono::duration<double>(timeout_s));
  for (;;) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ >= 0) return;
    if (std::chrono::steady_clock::now() >= deadline)
      throw Error(Errc::io_failure, "lock timeout on " + path_.string());
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

}  // namespace ck
