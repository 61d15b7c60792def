#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace qtw::kvtext {

// Ordered "key = value" records with optional [section] headers and '#'
// comments. Used for configs, sidecars, manifests, reports and epoch logs.
// Keys inside a section are stored as "section.key".
struct Document {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value);
  void set_f64(const std::string& key, double value);  // %.17g round-trip format
  void set_u64(const std::string& key, uint64_t value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws ConfigError if missing
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_f64(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;
  int64_t get_i64(const std::string& key) const;

  // All values for a repeated key, in order.
  std::vector<std::string> get_all(const std::string& key) const;

  std::string serialize() const;  // flat form: one "key = value" per line
};

Document parse(const std::string& text);
Document load(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const Document& doc);

std::string format_f64(double v);  // %.17g, bit-exact double round-trip
double parse_f64(const std::string& s);

}  // namespace qtw::kvtext
