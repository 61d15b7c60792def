#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace qtw::digest {

// FNV-1a 64-bit. Integrity guard for manifests and train/test disjointness
// checks, not a cryptographic hash.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string to_hex(uint64_t h);

// Digest of a file's full contents. Throws IoError if unreadable.
std::string file_digest(const std::filesystem::path& path);

}  // namespace qtw::digest
