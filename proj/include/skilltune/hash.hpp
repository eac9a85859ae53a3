#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace skilltune {

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

/// 64-bit FNV-1a. Used for artifact digests, package digests and virtual-mode draws.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffsetBasis) noexcept {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

/// Lower-case, zero-padded 16 character hex form of a 64-bit digest.
std::string hex_digest(std::uint64_t value);

/// Maps FNV-1a(bytes) into [0, 1). The top 53 bits are kept so the result is
/// exactly representable and never rounds up to 1.0.
double hash_unit(std::string_view bytes) noexcept;

/// Incremental digest over several fields, each terminated by a 0x1F separator.
class DigestBuilder {
 public:
  DigestBuilder& add(std::string_view field);
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const { return hex_digest(state_); }

 private:
  std::uint64_t state_ = kFnvOffsetBasis;
};

}  // namespace skilltune
