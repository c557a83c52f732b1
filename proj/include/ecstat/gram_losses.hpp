#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "feature_map.hpp"

namespace ecstat {

enum class GramNormalization { RawSum, PerLocation };

struct GramMatrix {
  std::string layer_a;
  std::string layer_b; // equals layer_a for within-layer grams
  Eigen::MatrixXd values;
  GramNormalization normalization = GramNormalization::RawSum;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

namespace detail {

// Row-major (locations x channels) view of a feature map.
using ConstLocMatrix =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline ConstLocMatrix as_matrix(const FeatureMap& f) {
  return ConstLocMatrix(f.values().data(), static_cast<Eigen::Index>(f.locations()),
                        static_cast<Eigen::Index>(f.channels()));
}

} // namespace detail

// G_ij = sum_p f_{i,p} f_{j,p}
inline GramMatrix within_gram(const FeatureMap& f) {
  auto F = detail::as_matrix(f);
  GramMatrix g{f.layer(), f.layer(), Eigen::MatrixXd(F.cols(), F.cols())};
  g.values.setZero();
  g.values.selfadjointView<Eigen::Lower>().rankUpdate(F.transpose());
  g.values = g.values.selfadjointView<Eigen::Lower>();
  return g;
}

enum class Upsampling { Nearest, Bilinear };

// Nearest: output (h, w) takes source (floor(h*H/th), floor(w*W/tw)).
// Bilinear: half-pixel centres, edges clamped.
inline FeatureMap upsample(const FeatureMap& f, std::size_t target_h, std::size_t target_w,
                           Upsampling method = Upsampling::Nearest) {
  if (target_h < f.height() || target_w < f.width())
    throw ArgumentError("upsample target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                        " is smaller than source " + std::to_string(f.height()) + "x" +
                        std::to_string(f.width()));
  const std::size_t H = f.height(), W = f.width(), C = f.channels();
  FeatureMap out(target_h, target_w, C, f.layer());
  if (method == Upsampling::Nearest) {
    for (std::size_t h = 0; h < target_h; ++h) {
      const std::size_t sh = h * H / target_h;
      for (std::size_t w = 0; w < target_w; ++w) {
        const std::size_t sw = w * W / target_w;
        auto src = f.location(sh * W + sw);
        auto dst = out.location(h * target_w + w);
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
    return out;
  }
  auto source_coord = [](std::size_t i, std::size_t src, std::size_t dst) {
    double x = (static_cast<double>(i) + 0.5) * static_cast<double>(src) / static_cast<double>(dst) - 0.5;
    return std::clamp(x, 0.0, static_cast<double>(src - 1));
  };
  for (std::size_t h = 0; h < target_h; ++h) {
    const double y = source_coord(h, H, target_h);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t w = 0; w < target_w; ++w) {
      const double x = source_coord(w, W, target_w);
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double fx = x - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double top = (1 - fx) * f.at(y0, x0, c) + fx * f.at(y0, x1, c);
        const double bottom = (1 - fx) * f.at(y1, x0, c) + fx * f.at(y1, x1, c);
        out.at(h, w, c) = (1 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

inline FeatureMap upsample_nearest(const FeatureMap& f, std::size_t target_h, std::size_t target_w) {
  return upsample(f, target_h, target_w, Upsampling::Nearest);
}

// G^{l,m}_ij = sum_p f^l_{i,p} (up f^m)_{j,p}, with f_m upsampled to f_l's grid.
inline GramMatrix cross_gram(const FeatureMap& f_l, const FeatureMap& f_m,
                             Upsampling method = Upsampling::Nearest) {
  if (f_m.height() > f_l.height() || f_m.width() > f_l.width())
    throw ArgumentError("cross_gram: second map must not be spatially larger than the first");
  auto L = detail::as_matrix(f_l);
  GramMatrix g{f_l.layer(), f_m.layer(), {}};
  if (f_m.height() == f_l.height() && f_m.width() == f_l.width()) {
    g.values = L.transpose() * detail::as_matrix(f_m);
  } else {
    FeatureMap up = upsample(f_m, f_l.height(), f_l.width(), method);
    g.values = L.transpose() * detail::as_matrix(up);
  }
  return g;
}

inline void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels())
    throw ShapeError(std::string(what) + ": feature map shapes differ");
}

// 1/2 sum ||f_new - f_content||^2 for one layer.
inline double content_loss(const FeatureMap& f_new, const FeatureMap& f_content) {
  require_same_shape(f_new, f_content, "content_loss");
  auto a = f_new.values();
  auto b = f_content.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return 0.5 * sum;
}

// sum_l w_l / (4 N_l^2 M_l^2) ||G(new_l) - G(style_l)||_F^2, with N_l channels
// and M_l locations of the new image.
inline double gatys_style_loss(std::span<const FeatureMap> new_layers,
                               std::span<const FeatureMap> style_layers,
                               std::span<const double> layer_weights = {}) {
  if (new_layers.size() != style_layers.size())
    throw ArgumentError("gatys_style_loss: new/style layer lists differ in length");
  if (!layer_weights.empty() && layer_weights.size() != new_layers.size())
    throw ArgumentError("gatys_style_loss: weight list length does not match layers");
  double total = 0.0;
  for (std::size_t l = 0; l < new_layers.size(); ++l) {
    const auto& fn = new_layers[l];
    const auto& fs = style_layers[l];
    if (fn.channels() != fs.channels())
      throw ShapeError("gatys_style_loss: channel mismatch at layer " + std::to_string(l));
    const double w = layer_weights.empty() ? 1.0 : layer_weights[l];
    const double N = static_cast<double>(fn.channels());
    const double M = static_cast<double>(fn.locations());
    const double diff = (within_gram(fn).values - within_gram(fs).values).squaredNorm();
    total += w * diff / (4.0 * N * N * M * M);
  }
  return total;
}

enum class PairingStrategy { PairwiseDescending, AllDistinctPairs, Custom };

// Pairs of indices into an ordered (finest first) layer list. In each pair
// the first layer is the coarser one and the second the finer one, e.g.
// (R51, R41).
struct LayerPairing {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  PairingStrategy strategy = PairingStrategy::Custom;

  static LayerPairing pairwise_descending(std::size_t layer_count) {
    LayerPairing p{{}, PairingStrategy::PairwiseDescending};
    for (std::size_t i = layer_count; i-- > 1;) p.pairs.emplace_back(i, i - 1);
    return p;
  }

  static LayerPairing all_distinct_pairs(std::size_t layer_count) {
    LayerPairing p{{}, PairingStrategy::AllDistinctPairs};
    for (std::size_t coarse = layer_count; coarse-- > 1;)
      for (std::size_t fine = coarse; fine-- > 0;) p.pairs.emplace_back(coarse, fine);
    return p;
  }
};

// sum over pairs (m, l) of w / (4 N_l N_m M_l^2) ||G^{l,m}(new) - G^{l,m}(style)||_F^2.
inline double acg_style_loss(std::span<const FeatureMap> new_layers,
                             std::span<const FeatureMap> style_layers, const LayerPairing& pairing,
                             std::span<const double> pair_weights = {},
                             Upsampling method = Upsampling::Nearest) {
  if (new_layers.size() != style_layers.size())
    throw ArgumentError("acg_style_loss: new/style layer lists differ in length");
  if (!pair_weights.empty() && pair_weights.size() != pairing.pairs.size())
    throw ArgumentError("acg_style_loss: weight list length does not match pairs");
  double total = 0.0;
  for (std::size_t k = 0; k < pairing.pairs.size(); ++k) {
    const auto [coarse, fine] = pairing.pairs[k];
    if (coarse >= new_layers.size() || fine >= new_layers.size())
      throw ArgumentError("acg_style_loss: pairing references a missing layer");
    const auto& nl = new_layers[fine];
    const auto& nm = new_layers[coarse];
    const auto& sl = style_layers[fine];
    const auto& sm = style_layers[coarse];
    if (nl.channels() != sl.channels() || nm.channels() != sm.channels())
      throw ShapeError("acg_style_loss: channel mismatch between new and style layers");
    const double w = pair_weights.empty() ? 1.0 : pair_weights[k];
    const double Nl = static_cast<double>(nl.channels());
    const double Nm = static_cast<double>(nm.channels());
    const double Ml = static_cast<double>(nl.locations());
    const double diff =
        (cross_gram(nl, nm, method).values - cross_gram(sl, sm, method).values).squaredNorm();
    total += w * diff / (4.0 * Nl * Nm * Ml * Ml);
  }
  return total;
}

// Multiplicative cross-layer loss: L_c * L_s.
inline double mcg_loss(double content, double style) {
  if (!std::isfinite(content) || !std::isfinite(style))
    throw ArgumentError("mcg_loss: losses must be finite");
  return content * style;
}

enum class ConstraintMode { Within, CrossPairwiseDescending };

inline std::uint64_t constraint_count(std::span<const std::uint64_t> channels, ConstraintMode mode) {
  if (channels.empty()) throw ArgumentError("constraint_count: empty channel list");
  std::uint64_t total = 0;
  if (mode == ConstraintMode::Within) {
    for (auto c : channels) total += c * c;
  } else {
    for (std::size_t i = 0; i + 1 < channels.size(); ++i) total += channels[i] * channels[i + 1];
  }
  return total;
}

} // namespace ecstat
