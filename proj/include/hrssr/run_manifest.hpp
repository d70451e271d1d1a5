#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "hrssr/config.hpp"

namespace hrssr {

// run_manifest.json in a run directory. Rewritten atomically (temp file +
// rename) on every change, so a crashed run still leaves a readable record.
class RunManifest {
 public:
  RunManifest(std::filesystem::path run_dir, const std::string& command, const Config& cfg);

  void set_seed(const std::string& name, std::uint64_t seed);
  void set_backend(const std::string& name, const std::string& value);
  // Records the path and the FNV-1a hash of the file contents.
  void add_checkpoint(const std::string& label, const std::filesystem::path& file);
  void add_artifact(const std::string& label, const std::filesystem::path& file);
  void finish(bool ok, const std::string& message = "");

  const nlohmann::json& data() const { return data_; }
  const std::filesystem::path& file() const { return file_; }

 private:
  void write() const;

  std::filesystem::path file_;
  nlohmann::json data_;
};

std::uint64_t hash_file(const std::filesystem::path& file);
std::string utc_timestamp();

}  // namespace hrssr
