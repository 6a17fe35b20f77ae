#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace hypergan {

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;

// 64-bit FNV-1a, chainable through `state`.
inline uint64_t fnv1a(const void* data, size_t size, uint64_t state = kFnvOffset) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    state ^= bytes[i];
    state *= 0x100000001b3ull;
  }
  return state;
}

inline uint64_t fnv1a(std::string_view text, uint64_t state = kFnvOffset) {
  return fnv1a(text.data(), text.size(), state);
}

std::string to_hex(uint64_t value);

}  // namespace hypergan
