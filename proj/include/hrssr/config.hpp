#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace hrssr {

// Flat `key = value` configuration. Lines starting with '#' are comments;
// keys are dotted names such as `train.lr` or `controller.enabled`.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& file);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  // "key=value"
  void set_assignment(const std::string& assignment);
  void merge(const Config& overrides);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace hrssr
