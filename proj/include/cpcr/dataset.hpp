#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cpcr/error.hpp"

namespace cpcr {

struct Sample {
  double timestamp = 0.0;  // seconds since epoch
  std::string mode;
  std::vector<double> features;
  std::optional<double> target;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Immutable, time-ordered collection of samples sharing one feature layout.
// Either every sample carries a target (complete) or none does (incomplete).
class TimeSeriesDataset {
 public:
  TimeSeriesDataset() = default;

  TimeSeriesDataset(std::vector<std::string> feature_names,
                    std::vector<Sample> samples)
      : feature_names_(std::move(feature_names)), samples_(std::move(samples)) {
    const std::size_t m = feature_names_.size();
    for (std::size_t n = 0; n < samples_.size(); ++n) {
      const Sample& s = samples_[n];
      if (!std::isfinite(s.timestamp))
        throw InvariantError("sample " + std::to_string(n) +
                             ": timestamp is not finite");
      if (s.features.size() != m)
        throw DimensionError("sample " + std::to_string(n) + ": expected " +
                             std::to_string(m) + " features, got " +
                             std::to_string(s.features.size()));
      for (std::size_t k = 0; k < m; ++k)
        if (!std::isfinite(s.features[k]))
          throw InvariantError("sample " + std::to_string(n) + ": feature '" +
                               feature_names_[k] + "' is not finite");
      if (s.target && !std::isfinite(*s.target))
        throw InvariantError("sample " + std::to_string(n) +
                             ": target is not finite");
      if (s.target.has_value() != samples_.front().target.has_value())
        throw InvariantError("sample " + std::to_string(n) +
                             ": mixed target presence");
      modes_.insert(s.mode);
    }
    std::stable_sort(samples_.begin(), samples_.end(),
                     [](const Sample& a, const Sample& b) {
                       return a.timestamp < b.timestamp;
                     });
  }

  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  const std::vector<std::string>& feature_names() const {
    return feature_names_;
  }
  std::size_t feature_count() const { return feature_names_.size(); }
  const std::set<std::string>& modes() const { return modes_; }

  // Complete means non-empty with targets; an empty dataset is neither.
  bool has_targets() const {
    return !samples_.empty() && samples_.front().target.has_value();
  }

  // Dense id of a mode label: its rank in the sorted mode set.
  std::size_t mode_id(const std::string& mode) const {
    auto it = modes_.find(mode);
    if (it == modes_.end()) throw UnknownModeError("unknown mode '" + mode + "'");
    return static_cast<std::size_t>(std::distance(modes_.begin(), it));
  }

  Eigen::MatrixXd feature_matrix() const {
    Eigen::MatrixXd x(samples_.size(), feature_names_.size());
    for (std::size_t n = 0; n < samples_.size(); ++n)
      for (std::size_t k = 0; k < feature_names_.size(); ++k)
        x(n, k) = samples_[n].features[k];
    return x;
  }

  Eigen::VectorXd target_vector() const {
    if (!has_targets()) throw InvariantError("dataset has no targets");
    Eigen::VectorXd y(samples_.size());
    for (std::size_t n = 0; n < samples_.size(); ++n) y(n) = *samples_[n].target;
    return y;
  }

  friend bool operator==(const TimeSeriesDataset& a,
                         const TimeSeriesDataset& b) {
    return a.feature_names_ == b.feature_names_ && a.samples_ == b.samples_;
  }

 private:
  std::vector<std::string> feature_names_;
  std::vector<Sample> samples_;
  std::set<std::string> modes_;
};

using ModeDatasets = std::map<std::string, TimeSeriesDataset>;

struct TransitionPair {
  std::size_t from_index = 0;
  std::size_t to_index = 0;
  std::string from_mode;
  std::string to_mode;
  double gap_seconds = 0.0;

  friend bool operator==(const TransitionPair&, const TransitionPair&) = default;
};

inline ModeDatasets split_by_mode(const TimeSeriesDataset& ds) {
  std::map<std::string, std::vector<Sample>> parts;
  for (const Sample& s : ds.samples()) parts[s.mode].push_back(s);
  ModeDatasets out;
  for (auto& [mode, samples] : parts)
    out.emplace(mode, TimeSeriesDataset(ds.feature_names(), std::move(samples)));
  return out;
}

// Adjacent samples (n, n+1) whose modes differ, kept when the gap is within
// max_gap_seconds. Both switch directions are reported.
inline std::vector<TransitionPair> extract_transitions(
    const TimeSeriesDataset& ds,
    double max_gap_seconds = std::numeric_limits<double>::infinity()) {
  if (!(max_gap_seconds > 0))
    throw std::invalid_argument("max_gap_seconds must be positive");
  std::vector<TransitionPair> pairs;
  const auto& s = ds.samples();
  for (std::size_t n = 0; n + 1 < s.size(); ++n) {
    if (s[n].mode == s[n + 1].mode) continue;
    const double gap = s[n + 1].timestamp - s[n].timestamp;
    if (gap > max_gap_seconds) continue;
    pairs.push_back({n, n + 1, s[n].mode, s[n + 1].mode, gap});
  }
  return pairs;
}

inline std::size_t count_mode_switches(const TimeSeriesDataset& ds) {
  std::size_t count = 0;
  const auto& s = ds.samples();
  for (std::size_t n = 0; n + 1 < s.size(); ++n)
    if (s[n].mode != s[n + 1].mode) ++count;
  return count;
}

}  // namespace cpcr
