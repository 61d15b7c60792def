#include "qtw/digest.hpp"

#include <cstdio>
#include <fstream>

#include "qtw/errors.hpp"

namespace qtw::digest {

std::string to_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for digest: " + path.string());
  uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
  }
  return to_hex(h);
}

}  // namespace qtw::digest
