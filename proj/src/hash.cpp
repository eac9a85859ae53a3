#include "skilltune/hash.hpp"

#include <fmt/format.h>

namespace skilltune {

std::string hex_digest(std::uint64_t value) { return fmt::format("{:016x}", value); }

double hash_unit(std::string_view bytes) noexcept {
  const std::uint64_t h = fnv1a64(bytes);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

DigestBuilder& DigestBuilder::add(std::string_view field) {
  state_ = fnv1a64(field, state_);
  state_ = fnv1a64(std::string_view("\x1f", 1), state_);
  return *this;
}

}  // namespace skilltune
