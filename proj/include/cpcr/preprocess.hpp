#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "cpcr/dataset.hpp"
#include "cpcr/error.hpp"

namespace cpcr {

// Per-feature z-score statistics, plus the target's when fitted on a
// complete dataset. Standard deviations use the N-1 denominator.
struct Normalizer {
  Eigen::VectorXd means;
  Eigen::VectorXd stds;
  std::optional<double> target_mean;
  std::optional<double> target_std;

  std::size_t feature_count() const { return static_cast<std::size_t>(means.size()); }
  bool has_target_stats() const { return target_mean && target_std; }

  Eigen::VectorXd normalize(const std::vector<double>& x) const {
    check_width(x.size());
    Eigen::VectorXd z(means.size());
    for (Eigen::Index k = 0; k < means.size(); ++k)
      z(k) = (x[static_cast<std::size_t>(k)] - means(k)) / stds(k);
    return z;
  }

  std::vector<double> denormalize(const Eigen::VectorXd& z) const {
    check_width(static_cast<std::size_t>(z.size()));
    std::vector<double> x(static_cast<std::size_t>(z.size()));
    for (Eigen::Index k = 0; k < z.size(); ++k)
      x[static_cast<std::size_t>(k)] = z(k) * stds(k) + means(k);
    return x;
  }

  double normalize_target(double y) const {
    require_target_stats();
    return (y - *target_mean) / *target_std;
  }

  double denormalize_target(double z) const {
    require_target_stats();
    return z * *target_std + *target_mean;
  }

  void check_width(std::size_t m) const {
    if (m != feature_count())
      throw DimensionError("normalizer expects " + std::to_string(feature_count()) +
                           " features, got " + std::to_string(m));
  }

  void require_target_stats() const {
    if (!has_target_stats())
      throw InvariantError("target present but normalizer has no target stats");
  }
};

namespace detail {

struct MomentResult {
  double mean;
  double std;
};

// Two-pass mean / sample standard deviation.
template <class Get>
MomentResult moments(std::size_t n, Get get) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += get(i);
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = get(i) - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / static_cast<double>(n - 1))};
}

inline bool degenerate_spread(const MomentResult& m) {
  return !(m.std > 1e-12 * std::max(1.0, std::abs(m.mean)));
}

}  // namespace detail

inline Normalizer fit_normalizer(const TimeSeriesDataset& ds) {
  const std::size_t n = ds.size();
  if (n == 0) throw FitError("cannot fit a normalizer on an empty dataset");
  if (n == 1)
    throw FitError("cannot fit a normalizer on a single sample (feature '" +
                   (ds.feature_count() ? ds.feature_names()[0] : std::string("?")) +
                   "' has undefined variance)");
  const auto& s = ds.samples();
  const std::size_t m = ds.feature_count();
  Normalizer norm;
  norm.means.resize(static_cast<Eigen::Index>(m));
  norm.stds.resize(static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < m; ++k) {
    auto mom = detail::moments(n, [&](std::size_t i) { return s[i].features[k]; });
    if (detail::degenerate_spread(mom))
      throw FitError("feature '" + ds.feature_names()[k] + "' has zero variance");
    norm.means(static_cast<Eigen::Index>(k)) = mom.mean;
    norm.stds(static_cast<Eigen::Index>(k)) = mom.std;
  }
  if (ds.has_targets()) {
    auto mom = detail::moments(n, [&](std::size_t i) { return *s[i].target; });
    if (detail::degenerate_spread(mom)) throw FitError("target has zero variance");
    norm.target_mean = mom.mean;
    norm.target_std = mom.std;
  }
  return norm;
}

inline TimeSeriesDataset apply_normalizer(const Normalizer& norm,
                                          const TimeSeriesDataset& ds) {
  norm.check_width(ds.feature_count());
  if (ds.has_targets()) norm.require_target_stats();
  std::vector<Sample> out;
  out.reserve(ds.size());
  for (const Sample& s : ds.samples()) {
    Sample t = s;
    for (std::size_t k = 0; k < t.features.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      t.features[k] = (s.features[k] - norm.means(i)) / norm.stds(i);
    }
    if (s.target) t.target = norm.normalize_target(*s.target);
    out.push_back(std::move(t));
  }
  return TimeSeriesDataset(ds.feature_names(), std::move(out));
}

// Principal directions kept to reach a variance-coverage threshold.
struct PcaModel {
  Eigen::MatrixXd loading;      // M x K, orthonormal columns
  Eigen::VectorXd eigenvalues;  // K kept eigenvalues, non-increasing
  double total_variance = 0.0;  // sum of all eigenvalues
  double coverage = 0.0;        // kept / total
  double threshold = 0.0;       // requested coverage

  std::size_t feature_count() const { return static_cast<std::size_t>(loading.rows()); }
  std::size_t components() const { return static_cast<std::size_t>(loading.cols()); }
  double discarded_variance() const {
    return std::max(0.0, total_variance - eigenvalues.sum());
  }

  Eigen::VectorXd transform(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != feature_count())
      throw DimensionError("PCA expects " + std::to_string(feature_count()) +
                           " features, got " + std::to_string(x.size()));
    return loading.transpose() * x;
  }

  // Row-wise scores of an N x M matrix.
  Eigen::MatrixXd transform_rows(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != feature_count())
      throw DimensionError("PCA expects " + std::to_string(feature_count()) +
                           " features, got " + std::to_string(x.cols()));
    return x * loading;
  }

  Eigen::VectorXd reconstruct(const Eigen::VectorXd& t) const {
    if (static_cast<std::size_t>(t.size()) != components())
      throw DimensionError("PCA expects " + std::to_string(components()) +
                           " scores, got " + std::to_string(t.size()));
    return loading * t;
  }
};

// Flip each column so its largest-magnitude entry is positive; the first
// such row wins ties.
inline void canonicalize_signs(Eigen::MatrixXd& p) {
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < p.rows(); ++r)
      if (std::abs(p(r, c)) > std::abs(p(arg, c))) arg = r;
    if (p(arg, c) < 0) p.col(c) = -p.col(c);
  }
}

inline PcaModel fit_pca(const Eigen::MatrixXd& x, double coverage_threshold) {
  if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0))
    throw ConfigError("coverage threshold must lie in (0, 1]");
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  if (n < 2) throw FitError("PCA needs at least 2 samples");
  if (m < 1) throw FitError("PCA needs at least 1 feature");

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);
  if (!cov.allFinite()) throw FitError("covariance matrix is not finite");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw FitError("eigendecomposition failed");

  // Eigen returns ascending order; reverse to descending and clamp round-off.
  Eigen::VectorXd values = eig.eigenvalues().reverse();
  Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  for (Eigen::Index i = 0; i < m; ++i) values(i) = std::max(0.0, values(i));
  const double total = values.sum();
  if (!(total > 0.0)) throw FitError("covariance matrix is zero");

  const double tiny = 1e-12 * values(0);
  Eigen::Index rank = 0;
  while (rank < m && values(rank) > tiny) ++rank;

  Eigen::Index k = 0;
  double kept = 0.0;
  while (k < rank) {
    kept += values(k);
    ++k;
    if (kept / total >= coverage_threshold - 1e-12) break;
  }

  PcaModel pca;
  pca.loading = vectors.leftCols(k);
  canonicalize_signs(pca.loading);
  pca.eigenvalues = values.head(k);
  pca.total_variance = total;
  pca.coverage = kept / total;
  pca.threshold = coverage_threshold;
  return pca;
}

inline PcaModel fit_pca(const TimeSeriesDataset& ds, double coverage_threshold) {
  return fit_pca(ds.feature_matrix(), coverage_threshold);
}

inline Eigen::VectorXd transform(const PcaModel& pca, const Eigen::VectorXd& x) {
  return pca.transform(x);
}

}  // namespace cpcr
