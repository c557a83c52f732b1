#pragma once

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <png.h>

#include <nlohmann/json.hpp>

#include "feature_map.hpp"
#include "npy.hpp"
#include "triplet.hpp"

namespace ecstat {

enum class AxisOrder { HWC, CHW };

struct LoadOptions {
  AxisOrder axis_order = AxisOrder::HWC;
  // Layer name stamped on the result. When it names a VGG layer the channel
  // count is checked unless check_channels is false.
  std::string layer;
  bool check_channels = true;
};

inline FeatureMap to_feature_map(const npy::Array& arr, const LoadOptions& opts = {}) {
  if (arr.shape.size() != 3)
    throw ShapeError("feature tensor must have rank 3, got rank " + std::to_string(arr.shape.size()));
  if (npy::is_integer(arr.dtype)) throw FormatError("feature tensor must be float32 or float64");
  for (double v : arr.values)
    if (!std::isfinite(v)) throw DataError("feature tensor contains NaN or Inf");

  std::size_t h, w, c;
  std::vector<double> values;
  if (opts.axis_order == AxisOrder::HWC) {
    h = arr.shape[0];
    w = arr.shape[1];
    c = arr.shape[2];
    values = arr.values;
  } else {
    c = arr.shape[0];
    h = arr.shape[1];
    w = arr.shape[2];
    values.resize(arr.values.size());
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          values[(y * w + x) * c + ch] = arr.values[(ch * h + y) * w + x];
  }
  if (h == 0 || w == 0 || c == 0) throw ShapeError("feature tensor has an empty dimension");
  if (opts.check_channels && !opts.layer.empty()) {
    if (auto expected = expected_channels(opts.layer); expected && *expected != c)
      throw ShapeError("layer " + opts.layer + " expects " + std::to_string(*expected) +
                       " channels, tensor has " + std::to_string(c));
  }
  return FeatureMap(h, w, c, std::move(values), opts.layer);
}

inline FeatureMap load_feature_map(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  try {
    return to_feature_map(npy::load(path), opts);
  } catch (const FormatError&) {
    throw;
  } catch (const ShapeError& e) {
    throw ShapeError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Writes NPY v1.0, float32, C order, shape (H, W, C).
inline void save_feature_map(const FeatureMap& map, const std::filesystem::path& path) {
  const std::size_t shape[3] = {map.height(), map.width(), map.channels()};
  npy::save(path, shape, map.values(), npy::DType::F4);
}

// ---------------------------------------------------------------------------
// Segment masks

class SegmentMask {
public:
  SegmentMask() = default;

  // Relabels `raw` to 0..S-1 in ascending order of the original label values.
  SegmentMask(std::size_t height, std::size_t width, std::vector<long long> raw)
      : height_(height), width_(width) {
    if (height == 0 || width == 0) throw ShapeError("mask dimensions must be positive");
    if (raw.size() != height * width) throw ShapeError("mask label count does not match H*W");
    std::vector<long long> distinct = raw;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.front() < 0) throw DataError("mask labels must be non-negative");
    labels_.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
      labels_[i] = static_cast<std::size_t>(
          std::lower_bound(distinct.begin(), distinct.end(), raw[i]) - distinct.begin());
    segments_ = distinct.size();
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t segment_count() const { return segments_; }
  std::size_t at(std::size_t h, std::size_t w) const { return labels_[h * width_ + w]; }
  std::span<const std::size_t> labels() const { return labels_; }

  // Nearest-neighbour resample to a (typically coarser) layer grid. Segments
  // that vanish are dropped and the remainder relabelled.
  SegmentMask resample(std::size_t target_h, std::size_t target_w) const {
    std::vector<long long> raw(target_h * target_w);
    for (std::size_t y = 0; y < target_h; ++y)
      for (std::size_t x = 0; x < target_w; ++x)
        raw[y * target_w + x] =
            static_cast<long long>(at(y * height_ / target_h, x * width_ / target_w));
    return SegmentMask(target_h, target_w, std::move(raw));
  }

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t segments_ = 0;
  std::vector<std::size_t> labels_;
};

namespace detail {

struct PngReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngReadState() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (file) std::fclose(file);
  }
};

struct PngWriteState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngWriteState() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (file) std::fclose(file);
  }
};

inline bool read_png_gray(const std::filesystem::path& path, std::size_t& h, std::size_t& w,
                          std::vector<long long>& out, std::string& err) {
  PngReadState st;
  st.file = std::fopen(path.c_str(), "rb");
  if (!st.file) {
    err = "cannot open";
    return false;
  }
  st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!st.png) return false;
  st.info = png_create_info_struct(st.png);
  if (!st.info) return false;
  if (setjmp(png_jmpbuf(st.png))) {
    err = "libpng decode failure";
    return false;
  }
  png_init_io(st.png, st.file);
  png_read_png(st.png, st.info, PNG_TRANSFORM_IDENTITY, nullptr);
  const auto color = png_get_color_type(st.png, st.info);
  const auto depth = png_get_bit_depth(st.png, st.info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    err = "mask PNG must be 8- or 16-bit grayscale";
    return false;
  }
  h = png_get_image_height(st.png, st.info);
  w = png_get_image_width(st.png, st.info);
  png_bytepp rows = png_get_rows(st.png, st.info);
  out.resize(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      out[y * w + x] = depth == 8 ? rows[y][x] : (rows[y][2 * x] << 8) | rows[y][2 * x + 1];
  return true;
}

} // namespace detail

inline SegmentMask mask_from_array(const npy::Array& arr) {
  if (arr.shape.size() != 2) throw ShapeError("mask array must have rank 2");
  if (!npy::is_integer(arr.dtype)) throw FormatError("mask array must have an integer dtype");
  std::vector<long long> raw(arr.values.size());
  std::transform(arr.values.begin(), arr.values.end(), raw.begin(),
                 [](double v) { return static_cast<long long>(v); });
  return SegmentMask(arr.shape[0], arr.shape[1], std::move(raw));
}

inline SegmentMask load_mask(const std::filesystem::path& path) {
  SegmentMask mask;
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    std::size_t h = 0, w = 0;
    std::vector<long long> raw;
    std::string err;
    if (!detail::read_png_gray(path, h, w, raw, err))
      throw FormatError(path.string() + ": " + (err.empty() ? "PNG read failed" : err));
    mask = SegmentMask(h, w, std::move(raw));
  } else {
    mask = mask_from_array(npy::load(path));
  }
  if (mask.segment_count() < 2)
    throw DegenerateError(path.string() + ": mask has fewer than 2 distinct labels");
  return mask;
}

// 8-bit grayscale when every label fits, 16-bit otherwise.
inline void save_mask_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                          std::span<const unsigned> labels) {
  if (labels.size() != height * width) throw ShapeError("mask label count does not match H*W");
  const unsigned max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  if (max_label > 0xFFFF) throw RangeError("label exceeds 16-bit PNG range");
  const int depth = max_label > 0xFF ? 16 : 8;
  const std::size_t bpp = depth / 8;
  std::vector<png_byte> data(height * width * bpp);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (depth == 8) {
      data[i] = static_cast<png_byte>(labels[i]);
    } else {
      data[2 * i] = static_cast<png_byte>(labels[i] >> 8);
      data[2 * i + 1] = static_cast<png_byte>(labels[i] & 0xFF);
    }
  }
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = data.data() + y * width * bpp;

  detail::PngWriteState st;
  st.file = std::fopen(path.c_str(), "wb");
  if (!st.file) throw IoError("cannot write " + path.string());
  st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!st.png) throw IoError("libpng init failed");
  st.info = png_create_info_struct(st.png);
  if (!st.info) throw IoError("libpng init failed");
  bool ok = true;
  if (setjmp(png_jmpbuf(st.png))) {
    ok = false;
  } else {
    png_init_io(st.png, st.file);
    png_set_IHDR(st.png, st.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_rows(st.png, st.info, rows.data());
    png_write_png(st.png, st.info, PNG_TRANSFORM_IDENTITY, nullptr);
  }
  if (!ok) throw IoError("PNG encode failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
  std::string method;
  std::string style_id;
  std::string content_id;
  double style_weight = 0.0;
  std::map<std::string, std::string> transferred_features; // layer -> path
  std::map<std::string, std::string> style_features;
  std::map<std::string, std::string> content_features;
  std::optional<std::string> mask;
  std::optional<double> pb_auc;
  AxisOrder axis_order = AxisOrder::HWC;

  TripletKey key() const { return {method, style_id, content_id, style_weight}; }
};

struct Manifest {
  // Directory that relative entry paths are resolved against.
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

enum class ProblemKind { DuplicateTriplet, MissingFile, Schema };

struct ManifestProblem {
  ProblemKind kind;
  std::size_t entry = 0;
  std::string message;
};

namespace detail {

inline std::map<std::string, std::string> path_map(const nlohmann::json& j, const char* field) {
  std::map<std::string, std::string> out;
  if (!j.contains(field)) return out;
  const auto& obj = j.at(field);
  if (!obj.is_object()) throw FormatError(std::string("manifest field '") + field + "' must be an object");
  for (const auto& [layer, path] : obj.items()) {
    if (!path.is_string())
      throw FormatError(std::string("manifest field '") + field + "." + layer + "' must be a string");
    out.emplace(layer, path.get<std::string>());
  }
  return out;
}

} // namespace detail

inline Manifest parse_manifest(const nlohmann::json& doc, std::filesystem::path base_dir = {}) {
  if (!doc.is_object() || !doc.contains("entries") || !doc.at("entries").is_array())
    throw FormatError("manifest must be an object with an 'entries' array");
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::size_t idx = 0;
  for (const auto& j : doc.at("entries")) {
    auto where = "manifest entry " + std::to_string(idx++);
    if (!j.is_object()) throw FormatError(where + " is not an object");
    ManifestEntry e;
    try {
      e.method = j.at("method").get<std::string>();
      e.style_id = j.at("style_id").get<std::string>();
      e.content_id = j.at("content_id").get<std::string>();
      e.style_weight = j.at("style_weight").get<double>();
      if (j.contains("mask") && !j.at("mask").is_null()) e.mask = j.at("mask").get<std::string>();
      if (j.contains("pb_auc") && !j.at("pb_auc").is_null()) e.pb_auc = j.at("pb_auc").get<double>();
      if (j.contains("axis_order")) {
        auto order = j.at("axis_order").get<std::string>();
        if (order == "HWC") e.axis_order = AxisOrder::HWC;
        else if (order == "CHW") e.axis_order = AxisOrder::CHW;
        else throw FormatError(where + ": axis_order must be HWC or CHW");
      }
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(where + ": " + ex.what());
    }
    if (!(e.style_weight >= 0.0)) throw FormatError(where + ": style_weight must be non-negative");
    e.transferred_features = detail::path_map(j, "transferred_features");
    e.style_features = detail::path_map(j, "style_features");
    e.content_features = detail::path_map(j, "content_features");
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json j;
    j["method"] = e.method;
    j["style_id"] = e.style_id;
    j["content_id"] = e.content_id;
    j["style_weight"] = e.style_weight;
    j["transferred_features"] = e.transferred_features;
    j["style_features"] = e.style_features;
    if (!e.content_features.empty()) j["content_features"] = e.content_features;
    if (e.mask) j["mask"] = *e.mask;
    if (e.pb_auc) j["pb_auc"] = *e.pb_auc;
    if (e.axis_order == AxisOrder::CHW) j["axis_order"] = "CHW";
    entries.push_back(std::move(j));
  }
  return nlohmann::json{{"entries", std::move(entries)}};
}

// Empty result iff every manifest invariant holds.
inline std::vector<ManifestProblem> validate_manifest(const Manifest& m) {
  std::vector<ManifestProblem> problems;
  std::set<TripletKey> seen;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (!seen.insert(e.key()).second)
      problems.push_back({ProblemKind::DuplicateTriplet, i, "duplicate triplet " + to_string(e.key())});
    if (e.transferred_features.empty())
      problems.push_back({ProblemKind::Schema, i, "entry has no transferred_features"});
    if (e.pb_auc && (*e.pb_auc < 0.0 || *e.pb_auc > 1.0))
      problems.push_back({ProblemKind::Schema, i, "pb_auc outside [0,1]"});
    auto check = [&](const std::string& p) {
      if (!std::filesystem::exists(m.resolve(p)))
        problems.push_back({ProblemKind::MissingFile, i, "missing file " + m.resolve(p).string()});
    };
    for (const auto* paths : {&e.transferred_features, &e.style_features, &e.content_features})
      for (const auto& [layer, p] : *paths) check(p);
    if (e.mask) check(*e.mask);
  }
  return problems;
}

} // namespace ecstat
