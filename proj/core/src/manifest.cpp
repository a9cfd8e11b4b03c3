#include "ldpp/manifest.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ldpp/error.hpp"

namespace ldpp {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw RuntimeFailure("sha256 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot hash missing file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out << content;
    if (!out) throw RuntimeFailure("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LockFile::LockFile(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  path_ = dir / ".lock";
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    throw RuntimeFailure("run directory " + dir.string() +
                         " is locked by " + path_.string() +
                         " (another writer, or a stale lock to delete)");
  }
  std::fclose(f);
}

LockFile::~LockFile() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

std::string now_iso8601() {
  using namespace std::chrono;
  auto now = time_point_cast<seconds>(system_clock::now());
  std::time_t tt = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  return nlohmann::json{{"command", command},
                        {"config_hash", config_hash},
                        {"seed", seed},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"started_at", started_at},
                        {"finished_at", finished_at},
                        {"output_hashes", output_hashes}};
}

void write_run_manifest(RunManifest m, const std::filesystem::path& path) {
  for (const auto& out : m.outputs) {
    if (!std::filesystem::exists(out)) {
      throw RuntimeFailure("manifest lists missing output " + out);
    }
    // Directory outputs (checkpoints) arrive with their digest precomputed.
    if (!m.output_hashes.count(out)) m.output_hashes[out] = sha256_file(out);
  }
  m.finished_at = now_iso8601();
  atomic_write_file(path, m.to_json().dump(1) + "\n");
}

}  // namespace ldpp
