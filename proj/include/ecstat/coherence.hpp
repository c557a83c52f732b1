#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csv.hpp"
#include "feature_map.hpp"
#include "tensor_store.hpp"
#include "triplet.hpp"

namespace ecstat {

inline constexpr double kLambdaFloor = 1e-12;

struct SegmentStats {
  std::size_t segment_count = 0;
  Eigen::MatrixXd means;       // S x C
  Eigen::MatrixXd between_cov; // C x C, covariance of the segment means
  Eigen::MatrixXd within_cov;  // C x C, pooled over deviations from segment means
  std::vector<std::size_t> locations_per_segment;
};

// Unweighted treats every segment mean as one sample; SizeWeighted weights
// each mean by its location count.
enum class BetweenWeighting { Unweighted, SizeWeighted };

// The mask is resampled (nearest neighbour) to the feature grid first.
// Covariances divide by count.
inline SegmentStats segment_stats(const FeatureMap& f, const SegmentMask& mask,
                                  BetweenWeighting weighting = BetweenWeighting::Unweighted) {
  const SegmentMask aligned = (mask.height() == f.height() && mask.width() == f.width())
                                  ? mask
                                  : mask.resample(f.height(), f.width());
  const std::size_t S = aligned.segment_count();
  if (S < 2) throw DegenerateError("segment_stats: fewer than 2 segments on the feature grid");
  const auto C = static_cast<Eigen::Index>(f.channels());
  const auto labels = aligned.labels();

  SegmentStats st;
  st.segment_count = S;
  st.locations_per_segment.assign(S, 0);
  st.means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), C);
  for (std::size_t p = 0; p < f.locations(); ++p) {
    auto x = f.location(p);
    const auto s = static_cast<Eigen::Index>(labels[p]);
    ++st.locations_per_segment[labels[p]];
    for (Eigen::Index c = 0; c < C; ++c) st.means(s, c) += x[static_cast<std::size_t>(c)];
  }
  for (std::size_t s = 0; s < S; ++s)
    st.means.row(static_cast<Eigen::Index>(s)) /= static_cast<double>(st.locations_per_segment[s]);

  Eigen::VectorXd weight = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(S), 1.0 / static_cast<double>(S));
  if (weighting == BetweenWeighting::SizeWeighted)
    for (std::size_t s = 0; s < S; ++s)
      weight(static_cast<Eigen::Index>(s)) =
          static_cast<double>(st.locations_per_segment[s]) / static_cast<double>(f.locations());
  const Eigen::RowVectorXd grand = weight.transpose() * st.means;
  const Eigen::MatrixXd centered_means = st.means.rowwise() - grand;
  st.between_cov = centered_means.transpose() * weight.asDiagonal() * centered_means;

  Eigen::MatrixXd dev(static_cast<Eigen::Index>(f.locations()), C);
  for (std::size_t p = 0; p < f.locations(); ++p) {
    auto x = f.location(p);
    const auto s = static_cast<Eigen::Index>(labels[p]);
    for (Eigen::Index c = 0; c < C; ++c)
      dev(static_cast<Eigen::Index>(p), c) = x[static_cast<std::size_t>(c)] - st.means(s, c);
  }
  const Eigen::RowVectorXd dev_mean = dev.colwise().mean();
  dev.rowwise() -= dev_mean;
  st.within_cov = dev.transpose() * dev / static_cast<double>(f.locations());
  return st;
}

enum class CoherenceKind { ObjectCoherence, PbAuc };

struct CoherenceScore {
  double lambda_max = 0.0;
  double l_m = 0.0;
  std::string layer;
  CoherenceKind kind = CoherenceKind::ObjectCoherence;
};

// 1e-6 * trace(Sigma_w) / C, or 1e-12 when Sigma_w vanishes.
inline double default_ridge(const SegmentStats& stats) {
  const double r = 1e-6 * stats.within_cov.trace() / static_cast<double>(stats.within_cov.rows());
  return r > 0.0 ? r : 1e-12;
}

// Largest generalized eigenvalue of Sigma_b x = lambda (Sigma_w + ridge I) x,
// via Cholesky reduction to a standard symmetric eigenproblem.
inline double largest_generalized_eigenvalue(const Eigen::MatrixXd& between,
                                             const Eigen::MatrixXd& within, double ridge) {
  if (ridge < 0.0) throw ArgumentError("ridge must be non-negative");
  const auto n = within.rows();
  Eigen::MatrixXd regularized = within;
  regularized.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  if (llt.info() != Eigen::Success) throw NumericError("within-class covariance is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(L(i, i) > 0.0)) throw NumericError("within-class covariance is singular");
  // reduced = L^{-1} Sigma_b L^{-T}
  Eigen::MatrixXd tmp = llt.matrixL().solve(between);
  Eigen::MatrixXd reduced = llt.matrixL().solve(tmp.transpose());
  reduced = 0.5 * (reduced + reduced.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(reduced, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericError("symmetric eigensolver did not converge");
  return std::max(eig.eigenvalues().maxCoeff(), 0.0);
}

inline CoherenceScore lambda_max(const SegmentStats& stats, std::optional<double> ridge = std::nullopt,
                                 std::string layer = {}) {
  const double lam =
      largest_generalized_eigenvalue(stats.between_cov, stats.within_cov, ridge.value_or(default_ridge(stats)));
  return {lam, std::log(std::max(lam, kLambdaFloor)), std::move(layer), CoherenceKind::ObjectCoherence};
}

inline CoherenceScore object_coherence(const FeatureMap& f, const SegmentMask& mask,
                                       std::optional<double> ridge = std::nullopt) {
  return lambda_max(segment_stats(f, mask), ridge, f.layer());
}

// Reads method,style_id,content_id,style_weight,auc rows.
inline std::map<TripletKey, double> ingest_pb_auc(const std::filesystem::path& csv_path) {
  const auto table = csv::read_file(csv_path);
  const char* names[] = {"method", "style_id", "content_id", "style_weight", "auc"};
  int col[5];
  for (int i = 0; i < 5; ++i) {
    col[i] = table.column(names[i]);
    if (col[i] < 0) throw FormatError(csv_path.string() + ": missing column '" + names[i] + "'");
  }
  std::map<TripletKey, double> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    TripletKey key{row[col[0]], row[col[1]], row[col[2]], parse_double(row[col[3]])};
    const double auc = parse_double(row[col[4]]);
    if (!(auc >= 0.0 && auc <= 1.0))
      throw RangeError(csv_path.string() + ": auc " + row[col[4]] + " outside [0,1] on data row " +
                       std::to_string(r + 1));
    if (!out.emplace(key, auc).second)
      throw DataError(csv_path.string() + ": duplicate key " + to_string(key));
  }
  return out;
}

} // namespace ecstat
