#pragma once

#include <cstdio>
#include <optional>
#include <string>

namespace cct::detail {

/// Fixed six-decimal rendering used by every CSV the library writes.
inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline std::string fixed6(const std::optional<double>& v) { return v ? fixed6(*v) : std::string("NA"); }

}  // namespace cct::detail
