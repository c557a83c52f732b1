#pragma once

// Minimal NPY reader/writer: format versions 1.0 and 2.0, C order,
// little-endian f4/f8/i4/i8/u1/u2. Values are widened to double on load.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace ecstat::npy {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

enum class DType { F4, F8, I4, I8, U1, U2 };

inline std::size_t dtype_size(DType t) {
  switch (t) {
  case DType::F4: return 4;
  case DType::F8: return 8;
  case DType::I4: return 4;
  case DType::I8: return 8;
  case DType::U1: return 1;
  case DType::U2: return 2;
  }
  return 0;
}

inline std::string_view dtype_descr(DType t) {
  switch (t) {
  case DType::F4: return "<f4";
  case DType::F8: return "<f8";
  case DType::I4: return "<i4";
  case DType::I8: return "<i8";
  case DType::U1: return "|u1";
  case DType::U2: return "<u2";
  }
  return "";
}

inline bool is_integer(DType t) { return t != DType::F4 && t != DType::F8; }

struct Array {
  std::vector<std::size_t> shape;
  DType dtype = DType::F8;
  std::vector<double> values; // widened, C order

  std::size_t element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
};

namespace detail {

inline constexpr char kMagic[] = "\x93NUMPY";

inline DType parse_descr(std::string_view d) {
  if (d == "<f4") return DType::F4;
  if (d == "<f8") return DType::F8;
  if (d == "<i4") return DType::I4;
  if (d == "<i8") return DType::I8;
  if (d == "|u1" || d == "<u1") return DType::U1;
  if (d == "<u2") return DType::U2;
  throw FormatError("unsupported NPY dtype '" + std::string(d) + "'");
}

// Finds the value text following 'key': in a Python dict literal.
inline std::string_view dict_value(std::string_view header, std::string_view key) {
  std::string quoted = "'" + std::string(key) + "'";
  auto pos = header.find(quoted);
  if (pos == std::string_view::npos) throw FormatError("NPY header lacks key " + quoted);
  pos = header.find(':', pos + quoted.size());
  if (pos == std::string_view::npos) throw FormatError("NPY header malformed near " + quoted);
  ++pos;
  while (pos < header.size() && std::isspace(static_cast<unsigned char>(header[pos]))) ++pos;
  return header.substr(pos);
}

inline std::vector<std::size_t> parse_shape(std::string_view text) {
  if (text.empty() || text.front() != '(') throw FormatError("NPY shape is not a tuple");
  auto close = text.find(')');
  if (close == std::string_view::npos) throw FormatError("NPY shape tuple not closed");
  std::vector<std::size_t> shape;
  std::string_view body = text.substr(1, close - 1);
  std::size_t i = 0;
  while (i < body.size()) {
    while (i < body.size() && (std::isspace(static_cast<unsigned char>(body[i])) || body[i] == ','))
      ++i;
    if (i >= body.size()) break;
    if (!std::isdigit(static_cast<unsigned char>(body[i])))
      throw FormatError("NPY shape contains a non-integer entry");
    std::size_t v = 0;
    while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i])))
      v = v * 10 + static_cast<std::size_t>(body[i++] - '0');
    // Python long suffix from very old writers.
    if (i < body.size() && (body[i] == 'L' || body[i] == 'l')) ++i;
    shape.push_back(v);
  }
  return shape;
}

template <class T>
void widen(const char* src, std::size_t n, std::vector<double>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    out[i] = static_cast<double>(v);
  }
}

inline std::string format_shape(std::span<const std::size_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  s += ")";
  return s;
}

} // namespace detail

inline Array parse(std::span<const char> bytes) {
  using namespace detail;
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 6) != 0)
    throw FormatError("not an NPY file (bad magic)");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) |
                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else if (major == 2) {
    if (bytes.size() < 12) throw FormatError("truncated NPY v2 preamble");
    header_len = 0;
    for (int b = 0; b < 4; ++b)
      header_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + b])) << (8 * b);
    offset = 12;
  } else {
    throw FormatError("unsupported NPY version " + std::to_string(major));
  }
  if (offset + header_len > bytes.size()) throw FormatError("truncated NPY header");
  std::string_view header(bytes.data() + offset, header_len);
  if (header.find('{') == std::string_view::npos) throw FormatError("NPY header is not a dict");

  std::string_view descr_text = dict_value(header, "descr");
  if (descr_text.empty() || (descr_text.front() != '\'' && descr_text.front() != '"'))
    throw FormatError("NPY descr is not a string");
  auto descr_end = descr_text.find(descr_text.front(), 1);
  if (descr_end == std::string_view::npos) throw FormatError("NPY descr string not closed");
  Array arr;
  arr.dtype = parse_descr(descr_text.substr(1, descr_end - 1));

  std::string_view fortran = dict_value(header, "fortran_order");
  if (fortran.starts_with("True")) throw FormatError("Fortran-ordered NPY arrays are not supported");
  if (!fortran.starts_with("False")) throw FormatError("NPY fortran_order is not a boolean");

  arr.shape = parse_shape(dict_value(header, "shape"));

  const std::size_t n = arr.element_count();
  const std::size_t data_offset = offset + header_len;
  const std::size_t need = n * dtype_size(arr.dtype);
  if (bytes.size() - data_offset != need)
    throw FormatError("NPY data section has " + std::to_string(bytes.size() - data_offset) +
                      " bytes, expected " + std::to_string(need));
  const char* src = bytes.data() + data_offset;
  switch (arr.dtype) {
  case DType::F4: widen<float>(src, n, arr.values); break;
  case DType::F8: widen<double>(src, n, arr.values); break;
  case DType::I4: widen<std::int32_t>(src, n, arr.values); break;
  case DType::I8: widen<std::int64_t>(src, n, arr.values); break;
  case DType::U1: widen<std::uint8_t>(src, n, arr.values); break;
  case DType::U2: widen<std::uint16_t>(src, n, arr.values); break;
  }
  return arr;
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Array load(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return parse(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Serializes to NPY v1.0 bytes. Values are narrowed to `dtype`.
inline std::vector<char> serialize(std::span<const std::size_t> shape, std::span<const double> values,
                                   DType dtype) {
  std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (n != values.size()) throw ShapeError("NPY shape does not match value count");

  std::string header = "{'descr': '" + std::string(dtype_descr(dtype)) +
                       "', 'fortran_order': False, 'shape': " + detail::format_shape(shape) + ", }";
  // Pad so that magic + version + length + header is a multiple of 64.
  std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  if (header.size() > 0xFFFF) throw FormatError("NPY header too long for v1.0");

  std::vector<char> out;
  out.reserve(10 + header.size() + n * dtype_size(dtype));
  out.insert(out.end(), detail::kMagic, detail::kMagic + 6);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(header.size() & 0xFF));
  out.push_back(static_cast<char>((header.size() >> 8) & 0xFF));
  out.insert(out.end(), header.begin(), header.end());

  auto put = [&out](const auto& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    out.insert(out.end(), p, p + sizeof(v));
  };
  for (double v : values) {
    switch (dtype) {
    case DType::F4: put(static_cast<float>(v)); break;
    case DType::F8: put(v); break;
    case DType::I4: put(static_cast<std::int32_t>(v)); break;
    case DType::I8: put(static_cast<std::int64_t>(v)); break;
    case DType::U1: put(static_cast<std::uint8_t>(v)); break;
    case DType::U2: put(static_cast<std::uint16_t>(v)); break;
    }
  }
  return out;
}

inline void save(const std::filesystem::path& path, std::span<const std::size_t> shape,
                 std::span<const double> values, DType dtype) {
  auto bytes = serialize(shape, values, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

} // namespace ecstat::npy
