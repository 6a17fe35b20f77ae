#include "hypergan/hashing.hpp"

#include <cstdio>

namespace hypergan {

std::string to_hex(uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace hypergan
