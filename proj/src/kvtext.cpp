#include "qtw/kvtext.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "qtw/errors.hpp"

namespace qtw::kvtext {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string format_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_f64(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

void Document::set(const std::string& key, const std::string& value) {
  entries.emplace_back(key, value);
}

void Document::set_f64(const std::string& key, double value) { set(key, format_f64(value)); }

void Document::set_u64(const std::string& key, uint64_t value) { set(key, std::to_string(value)); }

bool Document::has(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

const std::string& Document::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw ConfigError("missing key: " + key);
}

std::string Document::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

double Document::get_f64(const std::string& key) const { return parse_f64(get(key)); }

uint64_t Document::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  uint64_t v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str()) throw ConfigError("not an unsigned integer: '" + s + "' for " + key);
  return v;
}

int64_t Document::get_i64(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  int64_t v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str()) throw ConfigError("not an integer: '" + s + "' for " + key);
  return v;
}

std::vector<std::string> Document::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries)
    if (k == key) out.push_back(v);
  return out;
}

std::string Document::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
  return os.str();
}

Document parse(const std::string& text) {
  Document doc;
  std::istringstream is(text);
  std::string line, section;
  while (std::getline(is, line)) {
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed line: '" + line + "'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key in line: '" + line + "'");
    doc.set(section.empty() ? key : section + "." + key, value);
  }
  return doc;
}

Document load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return parse(os.str());
}

void save(const std::filesystem::path& path, const Document& doc) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << doc.serialize();
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace qtw::kvtext
