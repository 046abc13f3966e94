#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace s3a {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::span<const std::uint32_t> values,
                             std::uint64_t h = kFnvOffset) {
  for (std::uint32_t v : values) {
    for (int b = 0; b < 4; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Streams the file; throws s3a::Error if it cannot be read.
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace s3a
