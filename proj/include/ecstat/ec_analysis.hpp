#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "loess.hpp"
#include "triplet.hpp"

namespace ecstat {

struct TripletRecord {
  std::string method;
  std::string style_id;
  std::string content_id;
  double style_weight = 0.0;
  std::map<std::string, double> e_values; // layer -> E
  std::optional<double> c_auc;
  std::map<std::string, double> c_lm;     // layer -> L_m
  std::optional<std::string> source_method; // set on ensemble output

  TripletKey key() const { return {method, style_id, content_id, style_weight}; }
  bool operator==(const TripletRecord&) const = default;
};

enum class CKind { Auc, Lm };

inline std::optional<double> c_value(const TripletRecord& r, CKind kind, const std::string& layer) {
  if (kind == CKind::Auc) return r.c_auc;
  if (auto it = r.c_lm.find(layer); it != r.c_lm.end()) return it->second;
  return std::nullopt;
}

// Pb AUC when every record carries one, otherwise L_m.
inline CKind choose_c_axis(const std::vector<TripletRecord>& records) {
  for (const auto& r : records)
    if (!r.c_auc) return CKind::Lm;
  return records.empty() ? CKind::Lm : CKind::Auc;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kEcCsvHeader = "method,style_id,content_id,style_weight,layer,E,C_auc,C_lm";

inline void sort_records(std::vector<TripletRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const TripletRecord& a, const TripletRecord& b) { return a.key() < b.key(); });
}

// One row per layer that has an E or L_m value; records are written in key order.
inline std::string format_ec_csv(std::vector<TripletRecord> records) {
  sort_records(records);
  const bool provenance =
      std::any_of(records.begin(), records.end(), [](const auto& r) { return r.source_method.has_value(); });
  std::ostringstream out;
  out << kEcCsvHeader << (provenance ? ",source_method" : "") << '\n';
  for (const auto& r : records) {
    std::set<std::string> layers;
    for (const auto& [l, v] : r.e_values) layers.insert(l);
    for (const auto& [l, v] : r.c_lm) layers.insert(l);
    if (layers.empty()) layers.insert("");
    for (const auto& layer : layers) {
      out << csv::escape(r.method) << ',' << csv::escape(r.style_id) << ',' << csv::escape(r.content_id) << ','
          << format_double(r.style_weight) << ',' << layer << ',';
      if (auto it = r.e_values.find(layer); it != r.e_values.end()) out << format_double(it->second);
      out << ',';
      if (r.c_auc) out << format_double(*r.c_auc);
      out << ',';
      if (auto it = r.c_lm.find(layer); it != r.c_lm.end()) out << format_double(it->second);
      if (provenance) out << ',' << csv::escape(r.source_method.value_or(""));
      out << '\n';
    }
  }
  return out.str();
}

inline void emit_ec_csv(const std::vector<TripletRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_ec_csv(records);
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<TripletRecord> parse_ec_csv(const csv::Table& t) {
  const char* names[] = {"method", "style_id", "content_id", "style_weight", "layer", "E", "C_auc", "C_lm"};
  int col[8];
  for (int i = 0; i < 8; ++i) {
    col[i] = t.column(names[i]);
    if (col[i] < 0) throw FormatError(std::string("EC CSV is missing column '") + names[i] + "'");
  }
  const int prov = t.column("source_method");
  std::vector<TripletRecord> records;
  std::map<TripletKey, std::size_t> index;
  for (const auto& row : t.rows) {
    TripletKey key{row[col[0]], row[col[1]], row[col[2]], parse_double(row[col[3]])};
    auto [it, fresh] = index.emplace(key, records.size());
    if (fresh) {
      TripletRecord r;
      r.method = key.method;
      r.style_id = key.style_id;
      r.content_id = key.content_id;
      r.style_weight = key.style_weight;
      records.push_back(std::move(r));
    }
    auto& r = records[it->second];
    const std::string& layer = row[col[4]];
    if (!row[col[5]].empty()) r.e_values[layer] = parse_double(row[col[5]]);
    if (!row[col[6]].empty()) {
      const double auc = parse_double(row[col[6]]);
      if (r.c_auc && *r.c_auc != auc) throw DataError("conflicting C_auc values for " + to_string(key));
      r.c_auc = auc;
    }
    if (!row[col[7]].empty()) r.c_lm[layer] = parse_double(row[col[7]]);
    if (prov >= 0 && !row[prov].empty()) r.source_method = row[prov];
  }
  return records;
}

inline std::vector<TripletRecord> load_ec_csv(const std::filesystem::path& path) {
  try {
    return parse_ec_csv(csv::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Ensembles

enum class EnsembleMode { E, Q };

struct EnsembleOptions {
  EnsembleMode mode = EnsembleMode::E;
  std::string layer = "R11";
  CKind c_kind = CKind::Auc;
  // Rescale C to [0,1] over all candidate records before forming Q = E*C.
  bool normalize_c = false;
};

// Per (style, content, weight), the record of the method with the largest E
// (mode E) or E*C (mode Q). Ties go to the lexicographically smallest method.
inline std::vector<TripletRecord>
ensemble_select(const std::map<std::string, std::vector<TripletRecord>>& records_by_method,
                const EnsembleOptions& opts) {
  using Slot = std::tuple<std::string, std::string, double>;
  std::map<std::string, std::map<Slot, const TripletRecord*>> table;
  std::set<Slot> slots;
  for (const auto& [method, recs] : records_by_method) {
    auto& m = table[method];
    for (const auto& r : recs) {
      Slot s{r.style_id, r.content_id, r.style_weight};
      if (!m.emplace(s, &r).second)
        throw DataError("method " + method + " has duplicate triplet " + r.style_id + "/" + r.content_id);
      slots.insert(s);
    }
  }
  std::vector<std::string> missing;
  for (const auto& [method, m] : table)
    for (const auto& s : slots)
      if (!m.count(s))
        missing.push_back(method + ":" + std::get<0>(s) + "/" + std::get<1>(s) + "/" +
                          format_double(std::get<2>(s)));
  if (!missing.empty()) {
    std::string msg = "ensemble: triplets missing from some methods:";
    for (const auto& k : missing) msg += " " + k;
    throw DataError(msg);
  }

  auto e_of = [&](const TripletRecord& r) {
    auto it = r.e_values.find(opts.layer);
    if (it == r.e_values.end()) throw DataError("ensemble: no E at layer " + opts.layer + " for " + to_string(r.key()));
    return it->second;
  };
  auto c_of = [&](const TripletRecord& r) {
    auto c = c_value(r, opts.c_kind, opts.layer);
    if (!c) throw DataError("ensemble: no C value for " + to_string(r.key()));
    return *c;
  };

  double c_lo = 0.0, c_hi = 1.0;
  if (opts.mode == EnsembleMode::Q && opts.normalize_c) {
    c_lo = std::numeric_limits<double>::infinity();
    c_hi = -c_lo;
    for (const auto& [method, m] : table)
      for (const auto& [s, r] : m) {
        c_lo = std::min(c_lo, c_of(*r));
        c_hi = std::max(c_hi, c_of(*r));
      }
  }
  auto score = [&](const TripletRecord& r) {
    const double e = e_of(r);
    if (opts.mode == EnsembleMode::E) return e;
    double c = c_of(r);
    if (opts.normalize_c) c = c_hi > c_lo ? (c - c_lo) / (c_hi - c_lo) : 0.0;
    return e * c;
  };

  std::vector<TripletRecord> out;
  out.reserve(slots.size());
  for (const auto& s : slots) {
    const TripletRecord* best = nullptr;
    double best_score = 0.0;
    for (const auto& [method, m] : table) { // std::map: ascending method names
      const TripletRecord* r = m.at(s);
      const double v = score(*r);
      if (!best || v > best_score) {
        best = r;
        best_score = v;
      }
    }
    TripletRecord r = *best;
    r.source_method = best->method;
    r.method = opts.mode == EnsembleMode::E ? "ensemble-E" : "ensemble-Q";
    out.push_back(std::move(r));
  }
  return out;
}

inline std::map<std::string, std::vector<TripletRecord>> group_by_method(const std::vector<TripletRecord>& records) {
  std::map<std::string, std::vector<TripletRecord>> out;
  for (const auto& r : records) out[r.method].push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// EC plot

inline std::vector<Point2> ec_points(const std::vector<TripletRecord>& records, const std::string& layer,
                                     CKind kind) {
  std::vector<Point2> pts;
  for (const auto& r : records) {
    auto e = r.e_values.find(layer);
    auto c = c_value(r, kind, layer);
    if (e != r.e_values.end() && c) pts.push_back({*c, e->second});
  }
  return pts;
}

inline nlohmann::json curve_to_json(const std::string& method, const LoessCurve& c) {
  return {{"method", method},     {"span", c.span},         {"degree", c.degree},
          {"grid", c.grid},       {"fitted", c.fitted},     {"stderr", c.std_error},
          {"residual_sigma", c.residual_sigma}};
}

// FNV-1a, used to give every style a stable colour.
inline std::uint32_t stable_hash(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 16777619u;
  }
  return h;
}

struct PlotOptions {
  std::string layer = "R11";
  CKind c_kind = CKind::Auc;
  double width = 640;
  double height = 480;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out.push_back(ch);
    }
  }
  return out;
}

} // namespace detail

// Scatter of (C, E) with one marker per record (colour keyed to style, size
// keyed to weight), and per method a Loess curve with a +-1 stderr band.
inline std::string render_ec_svg(const std::vector<TripletRecord>& records,
                                 const std::map<std::string, LoessCurve>& curves, const PlotOptions& opts) {
  using detail::num;
  const double margin = 50;
  const double pw = opts.width - 2 * margin, ph = opts.height - 2 * margin;

  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo, wmax = 0.0;
  const auto pts = ec_points(records, opts.layer, opts.c_kind);
  for (const auto& p : pts) {
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
    ylo = std::min(ylo, p.y);
    yhi = std::max(yhi, p.y);
  }
  for (const auto& [m, c] : curves)
    for (std::size_t i = 0; i < c.grid.size(); ++i) {
      ylo = std::min(ylo, c.fitted[i] - c.std_error[i]);
      yhi = std::max(yhi, c.fitted[i] + c.std_error[i]);
    }
  for (const auto& r : records) wmax = std::max(wmax, r.style_weight);
  if (!(xhi > xlo)) { xlo -= 0.5; xhi += 0.5; }
  if (!(yhi > ylo)) { ylo -= 0.5; yhi += 0.5; }
  auto sx = [&](double x) { return margin + (x - xlo) / (xhi - xlo) * pw; };
  auto sy = [&](double y) { return margin + ph - (y - ylo) / (yhi - ylo) * ph; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(opts.width) << "\" height=\""
      << num(opts.height) << "\">\n"
      << "<rect x=\"" << num(margin) << "\" y=\"" << num(margin) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<text x=\"" << num(margin + pw / 2) << "\" y=\"" << num(opts.height - 10)
      << "\" text-anchor=\"middle\">C (" << (opts.c_kind == CKind::Auc ? "Pb AUC" : "L_m") << ")</text>\n"
      << "<text x=\"15\" y=\"" << num(margin + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << num(margin + ph / 2) << ")\">E (" << detail::xml_escape(opts.layer) << ")</text>\n"
      << "<text x=\"" << num(margin) << "\" y=\"" << num(margin + ph + 15) << "\">" << num(xlo) << "</text>\n"
      << "<text x=\"" << num(margin + pw) << "\" y=\"" << num(margin + ph + 15) << "\" text-anchor=\"end\">"
      << num(xhi) << "</text>\n";

  std::size_t mi = 0;
  for (const auto& [method, c] : curves) {
    const unsigned hue = (stable_hash(method) % 360);
    svg << "<polygon class=\"band\" fill=\"hsl(" << hue << ",60%,50%)\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < c.grid.size(); ++i)
      svg << num(sx(c.grid[i])) << ',' << num(sy(c.fitted[i] + c.std_error[i])) << ' ';
    for (std::size_t i = c.grid.size(); i-- > 0;)
      svg << num(sx(c.grid[i])) << ',' << num(sy(c.fitted[i] - c.std_error[i])) << ' ';
    svg << "\"/>\n<path class=\"loess\" data-method=\"" << detail::xml_escape(method) << "\" fill=\"none\" stroke=\"hsl("
        << hue << ",60%,35%)\" stroke-width=\"2\" d=\"";
    for (std::size_t i = 0; i < c.grid.size(); ++i)
      svg << (i ? " L" : "M") << num(sx(c.grid[i])) << ',' << num(sy(c.fitted[i]));
    svg << "\"/>\n<text x=\"" << num(margin + pw - 5) << "\" y=\"" << num(margin + 15 + 15 * static_cast<double>(mi++))
        << "\" text-anchor=\"end\" fill=\"hsl(" << hue << ",60%,35%)\">" << detail::xml_escape(method) << "</text>\n";
  }
  for (const auto& r : records) {
    auto e = r.e_values.find(opts.layer);
    auto c = c_value(r, opts.c_kind, opts.layer);
    if (e == r.e_values.end() || !c) continue;
    const unsigned hue = stable_hash(r.style_id) % 360;
    const double radius = 2.0 + (wmax > 0.0 ? 6.0 * r.style_weight / wmax : 0.0);
    svg << "<circle cx=\"" << num(sx(*c)) << "\" cy=\"" << num(sy(e->second)) << "\" r=\"" << num(radius)
        << "\" fill=\"hsl(" << hue << ",70%,50%)\" fill-opacity=\"0.7\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

} // namespace ecstat
