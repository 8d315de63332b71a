#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace simsr {

/// Flat "key = value" text. Blank lines and lines starting with '#' are
/// ignored; later assignments override earlier ones.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  /// Throws invalid_argument naming the first key outside known.
  void require_known(const std::set<std::string>& known) const;

  std::string str() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace simsr
