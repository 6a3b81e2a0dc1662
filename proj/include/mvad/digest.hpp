#pragma once

#include <string>
#include <string_view>

namespace mvad {

// 64-bit FNV-1a as 16 lowercase hex digits. Identifies files and configs in
// logs; not a cryptographic hash.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace mvad
