#pragma once

// Local polynomial regression (Loess) of one response on one predictor,
// tricube weights over the nearest span*n points, with pointwise standard
// errors from the linear-smoother operator.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace ecstat {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  auto operator<=>(const Point2&) const = default;
};

struct LoessOptions {
  double span = 0.75;
  int degree = 2;
  std::size_t grid_size = 100;
};

struct LoessCurve {
  std::vector<double> grid;
  std::vector<double> fitted;
  std::vector<double> std_error;
  double span = 0.75;
  int degree = 2;
  double residual_sigma = 0.0;
};

class Loess {
public:
  Loess(std::vector<Point2> points, double span, int degree) : points_(std::move(points)), span_(span), degree_(degree) {
    if (degree_ != 1 && degree_ != 2) throw ArgumentError("loess degree must be 1 or 2");
    if (!(span_ > 0.0 && span_ <= 1.0)) throw ArgumentError("loess span must be in (0, 1]");
    if (points_.size() < static_cast<std::size_t>(degree_) + 2)
      throw DegenerateError("loess needs at least degree + 2 points");
    // Sorting makes the fit independent of input order bit for bit.
    std::sort(points_.begin(), points_.end());
    if (points_.front().x == points_.back().x) throw DegenerateError("loess: all predictor values identical");
    const auto n = points_.size();
    neighbours_ = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(span_ * static_cast<double>(n))),
                                          static_cast<std::size_t>(degree_) + 1, n);
    y_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) y_(static_cast<Eigen::Index>(i)) = points_[i].y;
    estimate_sigma();
  }

  const std::vector<Point2>& points() const { return points_; }

  // Smoother weights l(x0): the fit at x0 is l . y.
  Eigen::VectorXd operator_row(double x0) const {
    const auto n = static_cast<Eigen::Index>(points_.size());
    std::vector<double> dist(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) dist[i] = std::abs(points_[i].x - x0);
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    double h = sorted[neighbours_ - 1];

    // Points at distance exactly h get zero weight. When ties at the
    // boundary leave too little support even for a local constant, widen h
    // to the next distinct distance.
    while (true) {
      if (h > 0.0) {
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double u = dist[static_cast<std::size_t>(i)] / h;
          w(i) = u < 1.0 ? std::pow(1.0 - u * u * u, 3) : 0.0;
        }
        for (int deg = degree_; deg >= 0; --deg) {
          const int p = deg + 1;
          Eigen::MatrixXd X(n, p);
          for (Eigen::Index i = 0; i < n; ++i) {
            const double u = (points_[static_cast<std::size_t>(i)].x - x0) / h;
            double term = 1.0;
            for (int j = 0; j < p; ++j, term *= u) X(i, j) = term;
          }
          const Eigen::MatrixXd Xw = w.cwiseSqrt().asDiagonal() * X;
          Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
          qr.setThreshold(1e-10);
          if (qr.rank() < p) continue; // too few distinct weighted points; lower the local degree
          const Eigen::MatrixXd normal = Xw.transpose() * Xw;
          const Eigen::VectorXd z = normal.ldlt().solve(Eigen::VectorXd::Unit(p, 0));
          return w.cwiseProduct(X * z);
        }
      }
      auto next = std::upper_bound(sorted.begin(), sorted.end(), h);
      if (next == sorted.end()) break;
      h = *next;
    }
    throw DegenerateError("loess: no points with positive weight");
  }

  struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
  };

  Estimate evaluate(double x0) const {
    const auto row = operator_row(x0);
    return {row.dot(y_), sigma_ * row.norm()};
  }

  double predict(double x0) const { return evaluate(x0).value; }

  double residual_sigma() const { return sigma_; }

private:
  // sigma^2 = RSS / (n - 2 tr L + tr L^T L)
  void estimate_sigma() {
    const auto n = static_cast<Eigen::Index>(points_.size());
    Eigen::MatrixXd L(n, n);
    for (Eigen::Index i = 0; i < n; ++i) L.row(i) = operator_row(points_[static_cast<std::size_t>(i)].x).transpose();
    const double rss = (y_ - L * y_).squaredNorm();
    double dof = static_cast<double>(n) - 2.0 * L.trace() + (L.transpose() * L).trace();
    if (!(dof > 0.0)) dof = static_cast<double>(n) - L.trace();
    sigma_ = dof > 0.0 ? std::sqrt(rss / dof) : 0.0;
  }

  std::vector<Point2> points_;
  double span_;
  int degree_;
  std::size_t neighbours_ = 0;
  Eigen::VectorXd y_;
  double sigma_ = 0.0;
};

// Evaluates the fit on `grid_size` evenly spaced points over the observed x range.
inline LoessCurve loess_fit(std::vector<Point2> points, const LoessOptions& opts = {}) {
  if (opts.grid_size == 0) throw ArgumentError("loess grid size must be positive");
  Loess model(std::move(points), opts.span, opts.degree);
  const double lo = model.points().front().x;
  const double hi = model.points().back().x;
  LoessCurve curve;
  curve.span = opts.span;
  curve.degree = opts.degree;
  curve.residual_sigma = model.residual_sigma();
  for (std::size_t g = 0; g < opts.grid_size; ++g) {
    const double x = opts.grid_size == 1
                         ? lo
                         : (g + 1 == opts.grid_size ? hi
                                                    : lo + (hi - lo) * static_cast<double>(g) /
                                                               static_cast<double>(opts.grid_size - 1));
    const auto est = model.evaluate(x);
    curve.grid.push_back(x);
    curve.fitted.push_back(est.value);
    curve.std_error.push_back(est.std_error);
  }
  return curve;
}

} // namespace ecstat
