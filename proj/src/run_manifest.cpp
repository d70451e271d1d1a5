#include "hrssr/run_manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include "hrssr/checkpoint.hpp"

namespace hrssr {

namespace fs = std::filesystem;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t hash_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

RunManifest::RunManifest(fs::path run_dir, const std::string& command, const Config& cfg)
    : file_(std::move(run_dir) / "run_manifest.json") {
  fs::create_directories(file_.parent_path());
  data_["command"] = command;
  data_["config"] = cfg.values();
  data_["config_text"] = cfg.to_text();
  data_["seeds"] = nlohmann::json::object();
  data_["backends"] = nlohmann::json::object();
  data_["checkpoints"] = nlohmann::json::object();
  data_["artifacts"] = nlohmann::json::object();
  data_["started"] = utc_timestamp();
  data_["status"] = "running";
  write();
}

void RunManifest::set_seed(const std::string& name, std::uint64_t seed) {
  data_["seeds"][name] = seed;
  write();
}

void RunManifest::set_backend(const std::string& name, const std::string& value) {
  data_["backends"][name] = value;
  write();
}

void RunManifest::add_checkpoint(const std::string& label, const fs::path& file) {
  data_["checkpoints"][label] = {{"path", fs::absolute(file).string()}, {"fnv1a64", hex64(hash_file(file))}};
  write();
}

void RunManifest::add_artifact(const std::string& label, const fs::path& file) {
  data_["artifacts"][label] = fs::absolute(file).string();
  write();
}

void RunManifest::finish(bool ok, const std::string& message) {
  data_["status"] = ok ? "ok" : "failed";
  if (!message.empty()) data_["message"] = message;
  data_["finished"] = utc_timestamp();
  write();
}

void RunManifest::write() const {
  auto tmp = file_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << data_.dump(2) << '\n';
  }
  fs::rename(tmp, file_);
}

}  // namespace hrssr
