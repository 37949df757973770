#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace montage {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// First 16 hex digits of sha256_hex; used for ids and cache keys.
std::string short_hash(std::string_view data);

std::string base64_encode(std::span<const unsigned char> bytes);

/// Deterministic 64-bit value derived from a string (first 8 bytes of SHA-256).
std::uint64_t hash64(std::string_view data);

}  // namespace montage
