#pragma once

#include <nlohmann/json.hpp>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ldpp {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Shortest round-trip decimal form, used by every CSV writer.
std::string format_double(double v);

// Writes via a temp file in the same directory, then renames into place.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

// Created at command start, removed on scope exit; a pre-existing lock aborts.
class LockFile {
 public:
  explicit LockFile(const std::filesystem::path& dir);
  ~LockFile();
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::filesystem::path path_;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  long long seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;  // every listed file must exist at write time
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> output_hashes;

  nlohmann::json to_json() const;
};

std::string now_iso8601();

// Verifies listed outputs exist, fills output_hashes, writes atomically.
void write_run_manifest(RunManifest m, const std::filesystem::path& path);

}  // namespace ldpp
