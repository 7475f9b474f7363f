#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace rrmar {

/// Shortest-safe text for a double: 17 significant digits, so the value
/// round-trips exactly. Non-finite values print as nan, inf, -inf.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Fixed decimals, with negative zero printed as zero.
inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace rrmar
