#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace jitfb {

/// 64-bit FNV-1a. Stable across platforms and runs; used for prompt content
/// hashes, idempotency keys and presentation-order seeds.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// FNV-1a over the parts joined with a 0x1f unit separator.
std::uint64_t stable_hash(std::initializer_list<std::string_view> parts) noexcept;

std::string to_hex(std::uint64_t value);

/// Keyed one-way pseudonym (HMAC-SHA256, hex) for raw student identifiers.
std::string anonymize_student(std::string_view raw_id, std::string_view key);

/// splitmix64 step; derives independent seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace jitfb
