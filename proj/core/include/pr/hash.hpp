#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace pr {

// FNV-1a, 64-bit. Used for content hashes (sample ids, score-file
// provenance, config hashes); not cryptographic.
std::uint64_t fnv1a(const void* data, std::size_t n_bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a(const std::string& s);

std::string hash_hex(std::uint64_t h);
std::uint64_t hash_file(const std::string& path);

}  // namespace pr
