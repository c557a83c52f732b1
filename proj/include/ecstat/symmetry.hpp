#pragma once

// Affine symmetries of gram-matrix style losses on a two-layer point-sample
// (1x1 convolution) linear network Y = X M^T + 1 n^T. Row convention:
// an element maps layer-1 samples X to X* = X linear^T + 1 b^T.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "errors.hpp"

namespace ecstat::symmetry {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PointSampleNetwork {
  MatrixXd M; // c2 x c1
  VectorXd n; // c2

  Eigen::Index c1() const { return M.cols(); }
  Eigen::Index c2() const { return M.rows(); }
};

enum class ElementKind { WithinLayer, CrossLayer };

struct SymmetryElement {
  ElementKind kind = ElementKind::CrossLayer;
  VectorXd b;      // zero for cross-layer elements
  MatrixXd linear; // A U (within-layer) or U (cross-layer)
};

inline MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline PointSampleNetwork random_network(Eigen::Index c1, Eigen::Index c2, std::uint64_t seed) {
  if (c1 < 1 || c2 < 1) throw ArgumentError("network layer sizes must be positive");
  std::mt19937_64 rng(seed);
  PointSampleNetwork net;
  net.M = gaussian_matrix(c2, c1, rng);
  net.n = gaussian_matrix(c2, 1, rng).col(0);
  return net;
}

// Q from the QR factorization of a seeded Gaussian matrix, with columns
// sign-fixed so that R has a positive diagonal.
inline MatrixXd random_orthonormal(Eigen::Index dim, std::uint64_t seed) {
  if (dim < 1) throw ArgumentError("random_orthonormal: dimension must be >= 1");
  std::mt19937_64 rng(seed);
  const MatrixXd g = gaussian_matrix(dim, dim, rng);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(dim, dim);
  const MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j)
    if (R(j, j) < 0.0) Q.col(j) *= -1.0;
  return Q;
}

struct Whitening {
  MatrixXd samples;  // N x c1, zero mean, (1/N) X^T X = I
  VectorXd mean;     // original column means
  MatrixXd forward;  // symmetric S^{-1/2}: white = (X - 1 mean^T) forward
  MatrixXd inverse;  // S^{1/2}: X = white inverse + 1 mean^T
};

namespace detail {
inline MatrixXd gram_of(const MatrixXd& X) { return X.transpose() * X / static_cast<double>(X.rows()); }
} // namespace detail

inline Whitening whiten(const MatrixXd& X) {
  const Eigen::Index N = X.rows(), c = X.cols();
  if (N <= c) throw ArgumentError("whiten: need more samples than channels");
  Whitening w;
  w.mean = X.colwise().mean().transpose();
  const MatrixXd centered = X.rowwise() - w.mean.transpose();
  MatrixXd cov = centered.transpose() * centered / static_cast<double>(N);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("whiten: eigensolver failed");
  VectorXd ev = eig.eigenvalues();
  if (ev.minCoeff() <= 1e-12 * std::max(1.0, ev.maxCoeff())) {
    cov.diagonal().array() += 1e-10 * cov.trace() / static_cast<double>(c);
    eig.compute(cov);
    ev = eig.eigenvalues();
    if (ev.minCoeff() <= 0.0) throw NumericError("whiten: covariance is rank deficient");
  }
  const MatrixXd& V = eig.eigenvectors();
  w.forward = V * ev.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  w.inverse = V * ev.cwiseSqrt().asDiagonal() * V.transpose();
  w.samples = centered * w.forward;
  // One refinement pass: the first pass inherits the conditioning of cov,
  // the second works on a near-identity covariance.
  w.samples.rowwise() -= w.samples.colwise().mean();
  Eigen::SelfAdjointEigenSolver<MatrixXd> refine(detail::gram_of(w.samples));
  const MatrixXd& R = refine.eigenvectors();
  const VectorXd rv = refine.eigenvalues();
  const MatrixXd f2 = R * rv.cwiseSqrt().cwiseInverse().asDiagonal() * R.transpose();
  w.samples = w.samples * f2;
  w.samples.rowwise() -= w.samples.colwise().mean();
  w.forward = w.forward * f2;
  w.inverse = R * rv.cwiseSqrt().asDiagonal() * R.transpose() * w.inverse;
  return w;
}

// Unit vector in the null space of M, chosen by a seeded random combination
// of a null-space basis and sign-fixed (largest-magnitude component positive).
inline VectorXd null_space_direction(const MatrixXd& M, std::uint64_t seed) {
  Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeFullV);
  const VectorXd& sv = svd.singularValues();
  const double tol = std::max(M.rows(), M.cols()) * (sv.size() ? sv(0) : 0.0) *
                     std::numeric_limits<double>::epsilon();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  const Eigen::Index nullity = M.cols() - rank;
  if (nullity == 0) throw DegenerateError("linear map has a trivial null space");
  const MatrixXd basis = svd.matrixV().rightCols(nullity);
  std::mt19937_64 rng(seed);
  VectorXd u;
  do {
    u = basis * gaussian_matrix(nullity, 1, rng).col(0);
  } while (!(u.norm() > 0.0));
  u.normalize();
  Eigen::Index imax = 0;
  u.cwiseAbs().maxCoeff(&imax);
  if (u(imax) < 0.0) u = -u;
  return u;
}

// Element (b, A U) with A A^T = I - b b^T (Cholesky). Requires ||b|| < 1.
inline SymmetryElement within_symmetry_from(const VectorXd& b, const MatrixXd& U) {
  const Eigen::Index c = b.size();
  if (U.rows() != c || U.cols() != c) throw ShapeError("within_symmetry_from: U must be c1 x c1");
  if (!(b.norm() < 1.0)) throw ArgumentError("within-layer symmetry needs ||b|| < 1");
  const MatrixXd residual = MatrixXd::Identity(c, c) - b * b.transpose();
  Eigen::LLT<MatrixXd> llt(residual);
  if (llt.info() != Eigen::Success) throw NumericError("I - b b^T is not positive definite");
  const MatrixXd A = llt.matrixL();
  return {ElementKind::WithinLayer, b, A * U};
}

inline SymmetryElement construct_within_symmetry(const PointSampleNetwork& net, double b_scale,
                                                 std::uint64_t seed) {
  if (!(std::abs(b_scale) < 1.0)) throw ArgumentError("b_scale must satisfy |b_scale| < 1");
  const VectorXd b = b_scale * null_space_direction(net.M, seed);
  return within_symmetry_from(b, random_orthonormal(net.c1(), seed ^ 0x9e3779b97f4a7c15ULL));
}

inline SymmetryElement construct_cross_symmetry(Eigen::Index c1, std::uint64_t seed) {
  return {ElementKind::CrossLayer, VectorXd::Zero(c1), random_orthonormal(c1, seed)};
}

inline MatrixXd apply_element(const MatrixXd& X, const SymmetryElement& e) {
  if (X.cols() != e.linear.cols() || e.b.size() != X.cols())
    throw ShapeError("apply_element: sample dimension does not match element");
  MatrixXd out = X * e.linear.transpose();
  out.rowwise() += e.b.transpose();
  return out;
}

// Composition e2 after e1: f -> L2 (L1 f + b1) + b2.
inline SymmetryElement compose(const SymmetryElement& e2, const SymmetryElement& e1) {
  const bool cross = e1.kind == ElementKind::CrossLayer && e2.kind == ElementKind::CrossLayer;
  return {cross ? ElementKind::CrossLayer : ElementKind::WithinLayer, e2.linear * e1.b + e2.b,
          e2.linear * e1.linear};
}

inline MatrixXd network_forward(const PointSampleNetwork& net, const MatrixXd& X) {
  MatrixXd Y = X * net.M.transpose();
  Y.rowwise() += net.n.transpose();
  return Y;
}

// (1/N) A^T B
inline MatrixXd gram(const MatrixXd& A, const MatrixXd& B) {
  return A.transpose() * B / static_cast<double>(A.rows());
}

struct VerifyReport {
  double gram1_delta = 0.0;     // max |G(X*) - G(X)|
  double gram2_delta = 0.0;     // max |G(Y*) - G(Y)|
  double cross_delta = 0.0;     // max |G(X*,Y*) - G(X,Y)|
  double expected_cross = 0.0;  // max |b n^T|
  double cross_residual = 0.0;  // max |(G(X*,Y*) - G(X,Y)) - b n^T|
  double gram1_scale = 1.0;     // max(1, max |G(X)|), for relative tolerances
  double gram2_scale = 1.0;
};

inline void require_whitened(const MatrixXd& X, double tol = 1e-8) {
  const MatrixXd g = gram(X, X);
  const double dev = (g - MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
  const double mean = X.colwise().mean().cwiseAbs().maxCoeff();
  if (dev > tol || mean > tol)
    throw ArgumentError("samples are not whitened (gram deviation " + std::to_string(dev) +
                        ", mean " + std::to_string(mean) + ")");
}

inline VerifyReport verify_symmetry(const PointSampleNetwork& net, const SymmetryElement& e,
                                    const MatrixXd& X) {
  if (X.cols() != net.c1()) throw ShapeError("verify_symmetry: samples do not match network input");
  require_whitened(X);
  const MatrixXd Y = network_forward(net, X);
  const MatrixXd Xs = apply_element(X, e);
  const MatrixXd Ys = network_forward(net, Xs);

  const MatrixXd g1 = gram(X, X), g2 = gram(Y, Y), gx = gram(X, Y);
  const MatrixXd dx = gram(Xs, Ys) - gx;
  const MatrixXd bn = e.b * net.n.transpose();

  VerifyReport r;
  r.gram1_delta = (gram(Xs, Xs) - g1).cwiseAbs().maxCoeff();
  r.gram2_delta = (gram(Ys, Ys) - g2).cwiseAbs().maxCoeff();
  r.cross_delta = dx.cwiseAbs().maxCoeff();
  r.expected_cross = bn.cwiseAbs().maxCoeff();
  r.cross_residual = (dx - bn).cwiseAbs().maxCoeff();
  r.gram1_scale = std::max(1.0, g1.cwiseAbs().maxCoeff());
  r.gram2_scale = std::max(1.0, g2.cwiseAbs().maxCoeff());
  return r;
}

inline VerifyReport verify_within_symmetry(const PointSampleNetwork& net, const SymmetryElement& e,
                                           const MatrixXd& X) {
  return verify_symmetry(net, e, X);
}

struct RescaleReport {
  double feature_variance_ratio = 1.0; // variance along b after / before
  double gram1_delta = 0.0;
  double gram2_delta = 0.0;
};

inline double variance_along(const MatrixXd& X, const VectorXd& dir) {
  VectorXd p = X * dir;
  p.array() -= p.mean();
  return p.squaredNorm() / static_cast<double>(p.size());
}

inline RescaleReport rescale_demo(const PointSampleNetwork& net, const SymmetryElement& e,
                                  const MatrixXd& X) {
  const auto v = verify_symmetry(net, e, X);
  RescaleReport r{1.0, v.gram1_delta, v.gram2_delta};
  const double bn = e.b.norm();
  if (bn > 0.0) {
    const VectorXd dir = e.b / bn;
    r.feature_variance_ratio = variance_along(apply_element(X, e), dir) / variance_along(X, dir);
  }
  return r;
}

// Whitened Gaussian samples (N x c1) with a random correlating mix applied
// before whitening.
inline MatrixXd whitened_samples(Eigen::Index N, Eigen::Index c1, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MatrixXd raw = gaussian_matrix(N, c1, rng) * gaussian_matrix(c1, c1, rng);
  raw.rowwise() += gaussian_matrix(1, c1, rng).row(0);
  return whiten(raw).samples;
}

struct TrialReport {
  std::uint64_t seed = 0;
  Eigen::Index c1 = 0, c2 = 0, samples = 0;
  double b_norm = 0.0;
  VerifyReport within;
  VerifyReport cross;
};

// One seeded trial: random network, whitened samples, one within-layer and
// one cross-layer element, both verified.
inline TrialReport run_trial(Eigen::Index c1, Eigen::Index c2, Eigen::Index N, double b_scale,
                             std::uint64_t seed) {
  if (!(c2 < c1)) throw ArgumentError("symmetry trial needs c2 < c1");
  const auto net = random_network(c1, c2, seed);
  const MatrixXd X = whitened_samples(N, c1, seed + 1);
  const auto we = construct_within_symmetry(net, b_scale, seed + 2);
  const auto ce = construct_cross_symmetry(c1, seed + 3);
  return {seed, c1, c2, N, we.b.norm(), verify_symmetry(net, we, X), verify_symmetry(net, ce, X)};
}

} // namespace ecstat::symmetry
