#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "dgclr/data.hpp"
#include "dgclr/error.hpp"

namespace dgclr {

// Linear whitening: centre, rotate onto the top principal directions and
// rescale each by 1/sqrt(eigenvalue). The empirical covariance (1/n
// normalisation) of the output is the identity.
struct Whitening {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd transform;  // raw_dim x target_dim

  std::vector<double> apply(const std::vector<double>& raw, std::size_t count) const {
    const auto in_dim = static_cast<Eigen::Index>(mean.size());
    if (raw.size() != count * static_cast<std::size_t>(in_dim)) throw ShapeError("whitening: input shape mismatch");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        raw.data(), static_cast<Eigen::Index>(count), in_dim);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> y =
        (x.rowwise() - mean) * transform;
    return std::vector<double>(y.data(), y.data() + y.size());
  }
};

inline Whitening fitWhitening(const std::vector<double>& raw, std::size_t count, std::size_t raw_dim,
                              std::size_t target_dim) {
  if (count < 2) throw DomainError("whitening needs at least 2 vectors");
  if (target_dim == 0 || target_dim > raw_dim)
    throw DomainError("whitening target dimension must be in [1, " + std::to_string(raw_dim) + "]");
  if (raw.size() != count * raw_dim) throw ShapeError("whitening: input shape mismatch");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      raw.data(), static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(raw_dim));
  Whitening w;
  w.mean = x.colwise().mean();
  const Eigen::MatrixXd centred = x.rowwise() - w.mean;
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(count);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("whitening: eigendecomposition failed");
  // Eigenvalues come back ascending.
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double top = vals.maxCoeff();
  const double tol = std::max(top, 1.0) * 1e-10 * static_cast<double>(raw_dim);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < vals.size(); ++i)
    if (vals[i] > tol) ++rank;
  if (rank < target_dim)
    throw NumericError("whitening: covariance has rank " + std::to_string(rank) + ", cannot produce " +
                       std::to_string(target_dim) + " whitened dimensions (achievable rank is " +
                       std::to_string(rank) + ")");
  const auto d = static_cast<Eigen::Index>(raw_dim);
  const auto t = static_cast<Eigen::Index>(target_dim);
  w.transform.resize(d, t);
  for (Eigen::Index j = 0; j < t; ++j) {
    const Eigen::Index src = d - 1 - j;
    w.transform.col(j) = eig.eigenvectors().col(src) / std::sqrt(vals[src]);
  }
  return w;
}

inline std::vector<double> whitenVectors(const std::vector<double>& raw, std::size_t count, std::size_t raw_dim,
                                         std::size_t target_dim) {
  return fitWhitening(raw, count, raw_dim, target_dim).apply(raw, count);
}

// Replaces a dataset's review vectors with their whitened projection.
inline void whitenDataset(InteractionDataset& ds, std::size_t target_dim) {
  ds.reviews = whitenVectors(ds.reviews, ds.size(), ds.dim, target_dim);
  ds.dim = target_dim;
}

}  // namespace dgclr
