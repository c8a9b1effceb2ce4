#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpcr/dataset.hpp"
#include "cpcr/model.hpp"
#include "cpcr/qp.hpp"
#include "cpcr/synth.hpp"

namespace cpcr::testing {

// Benchmark: generator defaults at seed 42; CPCR is constrained on "c1" and
// judged on the held-out "c2".
inline ModelConfig benchmark_model_config() {
  ModelConfig cfg;
  cfg.c = 0.08;
  return cfg;
}

inline const SynthData& benchmark_data() {
  static const SynthData data = generate(SynthConfig{});
  return data;
}

inline Eigen::MatrixXd random_matrix(NormalStream& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

inline Eigen::VectorXd random_vector(NormalStream& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// Small random block QP: total dimension <= max_dim, up to max_rows
// constraints. Offsets make a random anchor point strictly feasible, so the
// problem is feasible while constraints still tend to bind.
inline qp::Problem random_problem(NormalStream& rng, int max_dim = 4, int max_rows = 3) {
  qp::Problem pr;
  const int dim = 1 + static_cast<int>(rng.uniform() * max_dim);
  int left = dim;
  while (left > 0) {
    const int k = 1 + static_cast<int>(rng.uniform() * left);
    const Eigen::Index n = k + 2 + static_cast<Eigen::Index>(rng.uniform() * 6);
    pr.blocks.push_back({random_matrix(rng, n, k), random_vector(rng, n)});
    left -= k;
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(rng.uniform() * (max_rows + 1));
  pr.a = random_matrix(rng, rows, dim);
  const Eigen::VectorXd anchor = 0.5 * random_vector(rng, dim);
  pr.b = -(pr.a * anchor) + random_vector(rng, rows).cwiseAbs() * 0.1;
  return pr;
}

inline std::vector<Sample> samples_from(const std::vector<double>& t, const std::vector<std::string>& modes,
                                        int width = 1) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < t.size(); ++i)
    out.push_back({t[i], modes[i], std::vector<double>(static_cast<std::size_t>(width), double(i)), std::nullopt});
  return out;
}

inline TimeSeriesDataset make_dataset(const std::vector<double>& t, const std::vector<std::string>& modes) {
  return TimeSeriesDataset({"f1"}, samples_from(t, modes));
}

// Normalized-units predictor for a sample, recomputed from the raw model
// state without going through predict().
inline double score_by_hand(const ModeModel& mm, const std::vector<double>& raw) {
  const Eigen::Index m = mm.pca.loading.rows();
  Eigen::VectorXd z(m);
  for (Eigen::Index f = 0; f < m; ++f)
    z(f) = (raw[static_cast<std::size_t>(f)] - mm.normalizer.means(f)) / mm.normalizer.stds(f);
  double y = 0.0;
  for (Eigen::Index k = 0; k < mm.pca.loading.cols(); ++k) {
    double t = 0.0;
    for (Eigen::Index f = 0; f < m; ++f) t += z(f) * mm.pca.loading(f, k);
    y += t * mm.coefficients(k);
  }
  return y;
}

// The QP a CPCR fit solves, rebuilt for certification.
inline qp::Problem cpcr_problem(const ModeDatasets& complete, const TimeSeriesDataset& incomplete,
                                const ModelConfig& cfg) {
  auto as = detail::assemble_per_mode(complete, cfg);
  auto sys = build_constraints(as.modes, incomplete, cfg.c, cfg.max_gap_seconds);
  return {as.blocks, sys.a, sys.b, as.ridge};
}

}  // namespace cpcr::testing
