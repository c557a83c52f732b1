#pragma once

// Batch pipelines behind the command-line tool.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coherence.hpp"
#include "ec_analysis.hpp"
#include "effectiveness.hpp"
#include "gram_losses.hpp"
#include "parallel.hpp"
#include "symmetry.hpp"
#include "tensor_store.hpp"

namespace ecstat {

inline constexpr const char* kOutputDirEnv = "ECSTAT_OUTPUT_DIR";

// Explicit flag first, then $ECSTAT_OUTPUT_DIR, then the current directory.
inline std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return ".";
}

struct RunConfig {
  std::filesystem::path manifest_path;
  std::vector<std::string> layers{"R11"};
  std::uint64_t seed = 0;
  std::size_t directions = kDefaultDirections;
  std::optional<double> ridge;
  LoessOptions loess;
  std::filesystem::path output_dir = ".";
  unsigned threads = 1;
  bool require_lm = false;
  bool check_channels = true;
  KlDirection kl_direction = KlDirection::StyleToTransferred;
  std::optional<std::filesystem::path> pb_csv;

  // Empty iff the configuration is usable.
  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    if (layers.empty()) out.push_back("no layers requested");
    for (const auto& l : layers)
      if (!layer_index(l)) out.push_back("unknown layer '" + l + "'");
    if (directions == 0) out.push_back("directions must be >= 1");
    if (ridge && *ridge < 0.0) out.push_back("ridge must be non-negative");
    if (!(loess.span > 0.0 && loess.span <= 1.0)) out.push_back("span must be in (0, 1]");
    if (loess.degree != 1 && loess.degree != 2) out.push_back("degree must be 1 or 2");
    if (loess.grid_size == 0) out.push_back("grid size must be positive");
    if (threads == 0) out.push_back("threads must be >= 1");
    return out;
  }
};

struct EntryFailure {
  TripletKey key;
  std::string message;
};

struct EvaluateResult {
  std::vector<TripletRecord> records; // sorted by triplet key
  std::vector<EntryFailure> failures;
};

inline TripletRecord evaluate_entry(const Manifest& manifest, const ManifestEntry& entry, const RunConfig& cfg,
                                    const std::map<TripletKey, double>& pb_auc) {
  TripletRecord rec;
  rec.method = entry.method;
  rec.style_id = entry.style_id;
  rec.content_id = entry.content_id;
  rec.style_weight = entry.style_weight;
  if (entry.pb_auc) rec.c_auc = entry.pb_auc;
  if (auto it = pb_auc.find(entry.key()); it != pb_auc.end()) rec.c_auc = it->second;
  if (rec.c_auc && !(*rec.c_auc >= 0.0 && *rec.c_auc <= 1.0)) throw RangeError("pb_auc outside [0,1]");

  if (cfg.require_lm && !entry.mask) throw DataError("entry has no mask but L_m is required");
  std::optional<SegmentMask> mask;
  if (entry.mask) mask = load_mask(manifest.resolve(*entry.mask));

  for (const auto& layer : cfg.layers) {
    auto tp = entry.transferred_features.find(layer);
    auto sp = entry.style_features.find(layer);
    if (tp == entry.transferred_features.end()) throw DataError("no transferred features for layer " + layer);
    if (sp == entry.style_features.end()) throw DataError("no style features for layer " + layer);
    LoadOptions lo{entry.axis_order, layer, cfg.check_channels};
    const FeatureMap transferred = load_feature_map(manifest.resolve(tp->second), lo);
    const FeatureMap style = load_feature_map(manifest.resolve(sp->second), lo);
    const auto dirs = make_directions(transferred.channels(), cfg.directions, layer_seed(cfg.seed, *layer_index(layer)));
    rec.e_values[layer] = e_statistic(transferred, style, dirs, {cfg.kl_direction, 1});
    if (mask) rec.c_lm[layer] = object_coherence(transferred, *mask, cfg.ridge).l_m;
  }
  return rec;
}

// One record per manifest entry; failing entries are reported, not fatal.
inline EvaluateResult evaluate_manifest(const Manifest& manifest, const RunConfig& cfg) {
  std::map<TripletKey, double> pb;
  if (cfg.pb_csv) pb = ingest_pb_auc(*cfg.pb_csv);
  const auto n = manifest.entries.size();
  std::vector<std::optional<TripletRecord>> slots(n);
  std::vector<std::string> errors(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    try {
      slots[i] = evaluate_entry(manifest, manifest.entries[i], cfg, pb);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  EvaluateResult result;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) result.records.push_back(std::move(*slots[i]));
    else result.failures.push_back({manifest.entries[i].key(), errors[i]});
  }
  sort_records(result.records);
  std::sort(result.failures.begin(), result.failures.end(),
            [](const auto& a, const auto& b) { return a.key < b.key; });
  return result;
}

inline EvaluateResult cmd_evaluate(const RunConfig& cfg) {
  if (auto p = cfg.problems(); !p.empty()) throw ArgumentError("invalid run configuration: " + p.front());
  const Manifest manifest = load_manifest(cfg.manifest_path);
  auto result = evaluate_manifest(manifest, cfg);
  std::filesystem::create_directories(cfg.output_dir);
  emit_ec_csv(result.records, cfg.output_dir / "evaluation.csv");
  return result;
}

// ---------------------------------------------------------------------------

enum class WeightScheme { Main, Aggressive };

struct ManifestSpec {
  std::size_t styles = 1;
  std::size_t contents = 1;
  WeightScheme mode = WeightScheme::Main;
  std::uint64_t seed = 0;
  std::string method = "gatys";
  std::vector<std::string> layers{"R11", "R21", "R31", "R41", "R51"};
  std::size_t weight_count = 20;
  std::size_t pairs_per_weight = 15;
};

inline std::vector<double> main_weights(std::size_t count) {
  std::vector<double> w(count);
  for (std::size_t i = 0; i < count; ++i)
    w[i] = count == 1 ? 50.0 : 50.0 + 1950.0 * static_cast<double>(i) / static_cast<double>(count - 1);
  return w;
}

inline std::string id_string(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03zu", prefix, i);
  return buf;
}

// Skeleton manifest: `weight_count` weights, each with `pairs_per_weight`
// distinct random style/content pairs, placeholder paths.
inline Manifest make_manifest(const ManifestSpec& spec) {
  if (spec.styles == 0 || spec.contents == 0) throw ArgumentError("styles and contents must be >= 1");
  const std::size_t pool = spec.styles * spec.contents;
  if (pool < spec.pairs_per_weight)
    throw ArgumentError("need at least " + std::to_string(spec.pairs_per_weight) +
                        " distinct style/content pairs, have " + std::to_string(pool));
  std::mt19937_64 rng(spec.seed);
  std::vector<double> weights;
  if (spec.mode == WeightScheme::Main) {
    weights = main_weights(spec.weight_count);
  } else {
    std::uniform_real_distribution<double> u(2000.0, 10000.0);
    for (std::size_t i = 0; i < spec.weight_count; ++i) weights.push_back(u(rng));
  }
  Manifest m;
  for (std::size_t wi = 0; wi < weights.size(); ++wi) {
    // Partial Fisher-Yates over the style x content grid.
    std::vector<std::size_t> cells(pool);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    for (std::size_t k = 0; k < spec.pairs_per_weight; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool - 1);
      std::swap(cells[k], cells[pick(rng)]);
      const auto style = id_string("style", cells[k] / spec.contents);
      const auto content = id_string("content", cells[k] % spec.contents);
      ManifestEntry e;
      e.method = spec.method;
      e.style_id = style;
      e.content_id = content;
      e.style_weight = weights[wi];
      const auto dir = "features/" + spec.method + "/" + style + "__" + content + "__w" + std::to_string(wi);
      for (const auto& layer : spec.layers) {
        e.transferred_features[layer] = dir + "/" + layer + ".npy";
        e.style_features[layer] = "features/styles/" + style + "/" + layer + ".npy";
      }
      e.mask = "masks/" + content + ".png";
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------

struct EcPlotResult {
  CKind c_kind = CKind::Auc;
  std::map<std::string, LoessCurve> curves;
  std::string svg;
  nlohmann::json curves_json;
};

inline EcPlotResult ec_plot(const std::vector<TripletRecord>& records, const std::string& layer,
                            std::optional<CKind> c_kind, const LoessOptions& loess) {
  if (records.empty()) throw DegenerateError("ecplot: no records");
  EcPlotResult out;
  out.c_kind = c_kind.value_or(choose_c_axis(records));
  for (const auto& [method, recs] : group_by_method(records))
    out.curves.emplace(method, loess_fit(ec_points(recs, layer, out.c_kind), loess));
  PlotOptions po;
  po.layer = layer;
  po.c_kind = out.c_kind;
  out.svg = render_ec_svg(records, out.curves, po);
  out.curves_json = nlohmann::json::array();
  for (const auto& [method, curve] : out.curves) out.curves_json.push_back(curve_to_json(method, curve));
  return out;
}

inline std::vector<TripletRecord> load_ec_csvs(const std::vector<std::filesystem::path>& paths) {
  std::vector<TripletRecord> all;
  for (const auto& p : paths) {
    auto recs = load_ec_csv(p);
    all.insert(all.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return all;
}

// ---------------------------------------------------------------------------

struct SymmetryCheckOptions {
  long c1 = 8;
  long c2 = 5;
  long samples = 0; // 0: 40 * c1
  double b_scale = 0.5;
  std::uint64_t seed = 0;
  std::size_t trials = 10;
};

inline nlohmann::json verify_report_json(const symmetry::VerifyReport& r) {
  return {{"gram1_delta", r.gram1_delta},       {"gram2_delta", r.gram2_delta},
          {"cross_delta", r.cross_delta},       {"expected_cross_delta", r.expected_cross},
          {"cross_residual", r.cross_residual}};
}

inline nlohmann::json cmd_symmetry_check(const SymmetryCheckOptions& o, double tol = 1e-9) {
  const long N = o.samples > 0 ? o.samples : 40 * o.c1;
  nlohmann::json trials = nlohmann::json::array();
  bool ok = true;
  for (std::size_t t = 0; t < o.trials; ++t) {
    const auto r = symmetry::run_trial(o.c1, o.c2, N, o.b_scale, o.seed + 4 * t);
    const bool within_ok = r.within.gram1_delta <= tol * r.within.gram1_scale &&
                           r.within.gram2_delta <= tol * r.within.gram2_scale && r.within.cross_residual <= tol;
    const bool cross_ok = r.cross.gram1_delta <= tol * r.cross.gram1_scale &&
                          r.cross.gram2_delta <= tol * r.cross.gram2_scale && r.cross.cross_delta <= tol;
    ok = ok && within_ok && cross_ok;
    trials.push_back({{"trial", t},
                      {"seed", r.seed},
                      {"c1", r.c1},
                      {"c2", r.c2},
                      {"samples", r.samples},
                      {"b_norm", r.b_norm},
                      {"within_layer", verify_report_json(r.within)},
                      {"cross_layer", verify_report_json(r.cross)},
                      {"within_ok", within_ok},
                      {"cross_ok", cross_ok}});
  }
  return {{"tolerance", tol}, {"all_ok", ok}, {"trials", std::move(trials)}};
}

} // namespace ecstat
