#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "feature_map.hpp"
#include "parallel.hpp"

namespace ecstat {

inline constexpr double kVarianceFloor = 1e-10;
inline constexpr double kDivergenceClamp = 1e-12;
inline constexpr std::size_t kDefaultDirections = 128;

// `count` random unit vectors in R^dimension, reproducible from `seed`.
struct DirectionSet {
  std::size_t dimension = 0;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::vector<double> vectors; // count x dimension, row-major

  std::span<const double> row(std::size_t k) const {
    return {vectors.data() + k * dimension, dimension};
  }
};

inline DirectionSet make_directions(std::size_t dimension, std::size_t count, std::uint64_t seed) {
  if (dimension == 0 || count == 0) throw ArgumentError("make_directions: dimension and count must be >= 1");
  DirectionSet d{dimension, count, seed, std::vector<double>(dimension * count)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> draw(dimension);
  for (std::size_t k = 0; k < count; ++k) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : draw) {
        x = normal(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
    } while (!(norm > 0.0));
    for (std::size_t i = 0; i < dimension; ++i) d.vectors[k * dimension + i] = draw[i] / norm;
  }
  return d;
}

// One direction set per layer, all derived from a single master seed so the
// same directions are reused for every method under comparison.
inline std::uint64_t layer_seed(std::uint64_t master_seed, std::size_t layer_idx) {
  return master_seed ^ static_cast<std::uint64_t>(layer_idx);
}

// p_p = v . f_p at every location.
inline std::vector<double> project(const FeatureMap& f, std::span<const double> v) {
  if (v.size() != f.channels())
    throw ShapeError("project: direction has length " + std::to_string(v.size()) + ", map has " +
                     std::to_string(f.channels()) + " channels");
  std::vector<double> out(f.locations());
  for (std::size_t p = 0; p < out.size(); ++p) {
    auto x = f.location(p);
    double s = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) s += v[c] * x[c];
    out[p] = s;
  }
  return out;
}

struct GaussianSummary {
  double mean = 0.0;
  double variance = kVarianceFloor;
  std::size_t sample_count = 0;
};

// Maximum-likelihood fit: population variance (divide by n), floored.
inline GaussianSummary fit_gaussian(std::span<const double> samples) {
  if (samples.size() < 2) throw ArgumentError("fit_gaussian: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  const double mean = pairwise_sum(samples) / n;
  std::vector<double> sq(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d = samples[i] - mean;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / n;
  return {mean, std::max(var, kVarianceFloor), samples.size()};
}

// KL(p || q) between two univariate Gaussians.
inline double gaussian_kl(const GaussianSummary& p, const GaussianSummary& q) {
  const double vp = std::max(p.variance, kVarianceFloor);
  const double vq = std::max(q.variance, kVarianceFloor);
  const double dm = p.mean - q.mean;
  const double kl = 0.5 * std::log(vq / vp) + (vp + dm * dm) / (2.0 * vq) - 0.5;
  return std::max(kl, 0.0);
}

enum class KlDirection { StyleToTransferred, TransferredToStyle };

struct EffectivenessOptions {
  KlDirection direction = KlDirection::StyleToTransferred;
  unsigned threads = 1;
};

// Per-direction divergences d(v_k), in direction order.
inline std::vector<double> direction_divergences(const FeatureMap& transferred, const FeatureMap& style,
                                                 const DirectionSet& dirs,
                                                 const EffectivenessOptions& opts = {}) {
  if (transferred.channels() != dirs.dimension || style.channels() != dirs.dimension)
    throw ShapeError("e_statistic: channel count does not match direction dimension");
  std::vector<double> d(dirs.count);
  parallel_for(dirs.count, opts.threads, [&](std::size_t k) {
    const auto t = fit_gaussian(project(transferred, dirs.row(k)));
    const auto s = fit_gaussian(project(style, dirs.row(k)));
    d[k] = opts.direction == KlDirection::StyleToTransferred ? gaussian_kl(s, t) : gaussian_kl(t, s);
  });
  return d;
}

// E = -log(mean_k d(v_k)), mean clamped below at 1e-12.
inline double e_statistic(const FeatureMap& transferred, const FeatureMap& style, const DirectionSet& dirs,
                          const EffectivenessOptions& opts = {}) {
  const auto d = direction_divergences(transferred, style, dirs, opts);
  const double mean = pairwise_sum(d) / static_cast<double>(d.size());
  return -std::log(std::max(mean, kDivergenceClamp));
}

} // namespace ecstat
