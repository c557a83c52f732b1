#pragma once

#include <charconv>
#include <compare>
#include <string>
#include <system_error>

#include "errors.hpp"

namespace ecstat {

// Identifies one weight-style-content transfer produced by one method.
struct TripletKey {
  std::string method;
  std::string style_id;
  std::string content_id;
  double style_weight = 0.0;

  auto operator<=>(const TripletKey&) const = default;
  bool operator==(const TripletKey&) const = default;
};

// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw FormatError("not a number: '" + std::string(text) + "'");
  return v;
}

inline std::string to_string(const TripletKey& k) {
  return k.method + "/" + k.style_id + "/" + k.content_id + "/" + format_double(k.style_weight);
}

} // namespace ecstat
