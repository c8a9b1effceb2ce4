#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cpcr/dataset.hpp"
#include "cpcr/error.hpp"
#include "cpcr/preprocess.hpp"
#include "cpcr/qp.hpp"

namespace cpcr {

enum class ModelKind { mpcr, spcr, cpcr };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::mpcr: return "mpcr";
    case ModelKind::spcr: return "spcr";
    case ModelKind::cpcr: return "cpcr";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  std::string l;
  for (char ch : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (l == "mpcr") return ModelKind::mpcr;
  if (l == "spcr") return ModelKind::spcr;
  if (l == "cpcr") return ModelKind::cpcr;
  throw ConfigError("unknown model kind '" + s + "' (expected mpcr, spcr or cpcr)");
}

// "auto": add 1e-10 trace/K only when a normal matrix is numerically
// singular. "fixed": always use ModelConfig::ridge as given.
enum class RidgePolicy { automatic, fixed };

inline std::string to_string(RidgePolicy p) {
  return p == RidgePolicy::automatic ? "auto" : "fixed";
}

inline RidgePolicy parse_ridge_policy(const std::string& s) {
  if (s == "auto") return RidgePolicy::automatic;
  if (s == "fixed") return RidgePolicy::fixed;
  throw ConfigError("unknown ridge policy '" + s + "' (expected auto or fixed)");
}

struct ModelConfig {
  double coverage_threshold = 0.8;
  double c = 0.0;
  double max_gap_seconds = 86400.0;
  double qp_tol = 1e-8;
  int max_iter = 0;  // 0: solver default
  RidgePolicy ridge_policy = RidgePolicy::automatic;
  double ridge = 0.0;  // used when ridge_policy == fixed

  void validate() const {
    if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0))
      throw ConfigError("coverage_threshold must lie in (0, 1]");
    if (!(c >= 0.0)) throw ConfigError("c must be non-negative");
    if (!(max_gap_seconds > 0.0)) throw ConfigError("max_gap_seconds must be positive");
    if (!(qp_tol > 0.0)) throw ConfigError("qp_tol must be positive");
    if (max_iter < 0) throw ConfigError("max_iter must be non-negative");
    if (!(ridge >= 0.0) || !std::isfinite(ridge))
      throw ConfigError("ridge must be a finite non-negative number");
  }
};

// Preprocessing and regression state of one operation mode.
struct ModeModel {
  Normalizer normalizer;
  PcaModel pca;
  Eigen::VectorXd coefficients;  // K_m

  Eigen::VectorXd scores(const std::vector<double>& x) const {
    return pca.transform(normalizer.normalize(x));
  }
};

struct ConstraintBuildReport {
  std::size_t pairs_found = 0;
  std::size_t pairs_used = 0;
  std::size_t pairs_dropped_gap = 0;
  std::size_t constraint_rows = 0;  // 2 x pairs_used, before deduplication
};

struct ConstraintMeta {
  std::string dataset_id;
  double c = 0.0;
  double max_gap_seconds = 0.0;
  ConstraintBuildReport report;
  std::size_t active_constraints = 0;
  int iterations = 0;
};

inline const std::string kPooledMode = "*";

struct PcrModel {
  ModelKind kind = ModelKind::mpcr;
  std::vector<std::string> feature_names;
  std::map<std::string, ModeModel> per_mode;
  std::optional<ConstraintMeta> constraint_meta;
  ModelConfig config;
  double ridge = 0.0;  // ridge actually used
  std::map<std::string, std::string> provenance;

  // Model that scores samples of `mode`; SPCR ignores the label.
  const ModeModel& mode_model(const std::string& mode) const {
    if (kind == ModelKind::spcr) return per_mode.at(kPooledMode);
    auto it = per_mode.find(mode);
    if (it == per_mode.end())
      throw UnknownModeError("mode '" + mode + "' is not known to the " +
                             to_string(kind) + " model");
    return it->second;
  }

  // Coefficients of every mode stacked in map order (the QP layout).
  Eigen::VectorXd stacked_coefficients() const {
    Eigen::Index n = 0;
    for (const auto& [mode, mm] : per_mode) n += mm.coefficients.size();
    Eigen::VectorXd w(n);
    Eigen::Index off = 0;
    for (const auto& [mode, mm] : per_mode) {
      w.segment(off, mm.coefficients.size()) = mm.coefficients;
      off += mm.coefficients.size();
    }
    return w;
  }
};

namespace detail {

inline void check_complete(const ModeDatasets& complete) {
  if (complete.empty()) throw InvariantError("no complete datasets given");
  const auto& names = complete.begin()->second.feature_names();
  for (const auto& [mode, ds] : complete) {
    if (!ds.has_targets())
      throw InvariantError("complete dataset for mode '" + mode + "' has no targets");
    if (ds.feature_names() != names)
      throw DimensionError("complete dataset for mode '" + mode +
                           "' has a different feature layout");
    for (const auto& s : ds.samples())
      if (s.mode != mode)
        throw InvariantError("complete dataset for mode '" + mode +
                             "' contains a sample labelled '" + s.mode + "'");
  }
}

inline ModeModel fit_preprocessing(const TimeSeriesDataset& ds, double coverage) {
  ModeModel mm;
  mm.normalizer = fit_normalizer(ds);
  mm.pca = fit_pca(apply_normalizer(mm.normalizer, ds), coverage);
  return mm;
}

// Score matrix and normalized targets of a complete dataset.
inline qp::Block design_block(const ModeModel& mm, const TimeSeriesDataset& ds) {
  const TimeSeriesDataset z = apply_normalizer(mm.normalizer, ds);
  return {mm.pca.transform_rows(z.feature_matrix()), z.target_vector()};
}

inline double choose_ridge(const std::vector<qp::Block>& blocks, const ModelConfig& cfg) {
  return cfg.ridge_policy == RidgePolicy::fixed ? cfg.ridge : qp::auto_ridge(blocks);
}

struct Assembled {
  std::map<std::string, ModeModel> modes;
  std::vector<qp::Block> blocks;  // map order
  double ridge = 0.0;
};

inline Assembled assemble_per_mode(const ModeDatasets& complete, const ModelConfig& cfg) {
  Assembled out;
  for (const auto& [mode, ds] : complete) {
    ModeModel mm = fit_preprocessing(ds, cfg.coverage_threshold);
    out.blocks.push_back(design_block(mm, ds));
    out.modes.emplace(mode, std::move(mm));
  }
  out.ridge = choose_ridge(out.blocks, cfg);
  return out;
}

inline void scatter(std::map<std::string, ModeModel>& modes, const Eigen::VectorXd& w) {
  Eigen::Index off = 0;
  for (auto& [mode, mm] : modes) {
    const auto k = static_cast<Eigen::Index>(mm.pca.components());
    mm.coefficients = w.segment(off, k);
    off += k;
  }
}

}  // namespace detail

inline PcrModel train_mpcr(const ModeDatasets& complete, const ModelConfig& cfg = {}) {
  cfg.validate();
  detail::check_complete(complete);
  auto as = detail::assemble_per_mode(complete, cfg);
  detail::scatter(as.modes, qp::solve_unconstrained(as.blocks, as.ridge));
  PcrModel model;
  model.kind = ModelKind::mpcr;
  model.feature_names = complete.begin()->second.feature_names();
  model.per_mode = std::move(as.modes);
  model.config = cfg;
  model.ridge = as.ridge;
  return model;
}

inline PcrModel train_spcr(const ModeDatasets& complete, const ModelConfig& cfg = {}) {
  cfg.validate();
  detail::check_complete(complete);
  std::vector<Sample> pooled;
  for (const auto& [mode, ds] : complete)
    pooled.insert(pooled.end(), ds.samples().begin(), ds.samples().end());
  const TimeSeriesDataset all(complete.begin()->second.feature_names(), std::move(pooled));

  ModeModel mm = detail::fit_preprocessing(all, cfg.coverage_threshold);
  std::vector<qp::Block> blocks{detail::design_block(mm, all)};
  const double ridge = detail::choose_ridge(blocks, cfg);
  mm.coefficients = qp::solve_unconstrained(blocks, ridge);

  PcrModel model;
  model.kind = ModelKind::spcr;
  model.feature_names = all.feature_names();
  model.per_mode.emplace(kPooledMode, std::move(mm));
  model.config = cfg;
  model.ridge = ridge;
  return model;
}

struct ConstraintSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  ConstraintBuildReport report;
  std::vector<TransitionPair> pairs;  // pairs that produced rows
};

// Two rows per transition pair (i, j):
//   t_i w_from - t_j w_to + c >= 0   and its negation + c >= 0,
// with block columns laid out in the map order of `modes`.
inline ConstraintSystem build_constraints(const std::map<std::string, ModeModel>& modes,
                                          const TimeSeriesDataset& incomplete, double c,
                                          double max_gap_seconds) {
  if (!(c >= 0.0)) throw ConfigError("c must be non-negative");
  if (incomplete.has_targets())
    throw InvariantError("constraint dataset must not carry targets");

  std::map<std::string, std::pair<Eigen::Index, Eigen::Index>> layout;
  Eigen::Index dim = 0;
  for (const auto& [mode, mm] : modes) {
    const auto k = static_cast<Eigen::Index>(mm.pca.components());
    layout[mode] = {dim, k};
    dim += k;
    if (mm.normalizer.feature_count() != incomplete.feature_count() && !incomplete.empty())
      throw DimensionError("constraint dataset has " +
                           std::to_string(incomplete.feature_count()) +
                           " features, model expects " +
                           std::to_string(mm.normalizer.feature_count()));
  }

  ConstraintSystem sys;
  sys.report.pairs_found = count_mode_switches(incomplete);
  sys.pairs = extract_transitions(incomplete, max_gap_seconds);
  sys.report.pairs_used = sys.pairs.size();
  sys.report.pairs_dropped_gap = sys.report.pairs_found - sys.report.pairs_used;
  sys.report.constraint_rows = 2 * sys.pairs.size();

  const auto rows = static_cast<Eigen::Index>(sys.report.constraint_rows);
  sys.a = Eigen::MatrixXd::Zero(rows, dim);
  sys.b = Eigen::VectorXd::Constant(rows, c);
  for (std::size_t n = 0; n < sys.pairs.size(); ++n) {
    const auto& tp = sys.pairs[n];
    for (const auto* mode : {&tp.from_mode, &tp.to_mode})
      if (!modes.count(*mode))
        throw UnknownModeError("constraint dataset switches into mode '" + *mode +
                               "', which has no training data");
    const auto [off_i, k_i] = layout.at(tp.from_mode);
    const auto [off_j, k_j] = layout.at(tp.to_mode);
    const Eigen::VectorXd ti = modes.at(tp.from_mode).scores(incomplete[tp.from_index].features);
    const Eigen::VectorXd tj = modes.at(tp.to_mode).scores(incomplete[tp.to_index].features);
    const auto r = static_cast<Eigen::Index>(2 * n);
    sys.a.block(r, off_i, 1, k_i) = ti.transpose();
    sys.a.block(r, off_j, 1, k_j) = -tj.transpose();
    sys.a.row(r + 1) = -sys.a.row(r);
  }
  return sys;
}

inline PcrModel train_cpcr(const ModeDatasets& complete, const TimeSeriesDataset& incomplete,
                           const std::string& incomplete_id, const ModelConfig& cfg = {}) {
  cfg.validate();
  detail::check_complete(complete);
  auto as = detail::assemble_per_mode(complete, cfg);
  ConstraintSystem sys = build_constraints(as.modes, incomplete, cfg.c, cfg.max_gap_seconds);

  qp::Problem problem{as.blocks, sys.a, sys.b, as.ridge};
  const qp::Solution sol = qp::solve(problem, {cfg.qp_tol, cfg.max_iter});
  if (sol.status == qp::Status::infeasible)
    throw SolverError("constraint dataset '" + incomplete_id +
                      "' yields an infeasible constraint system");
  if (sol.status == qp::Status::iteration_limit)
    throw SolverError("constraint dataset '" + incomplete_id + "': solver hit the iteration limit (" +
                      std::to_string(sol.iterations) + ")");
  detail::scatter(as.modes, sol.coefficients);

  PcrModel model;
  model.kind = ModelKind::cpcr;
  model.feature_names = complete.begin()->second.feature_names();
  model.per_mode = std::move(as.modes);
  model.config = cfg;
  model.ridge = as.ridge;
  model.constraint_meta = ConstraintMeta{incomplete_id, cfg.c, cfg.max_gap_seconds, sys.report,
                                         sol.active_set.size(), sol.iterations};
  return model;
}

struct Prediction {
  double timestamp = 0.0;
  std::string mode;
  double y_norm = 0.0;
  std::optional<double> y_raw;
};

inline double predict_normalized(const PcrModel& model, const Sample& s) {
  const ModeModel& mm = model.mode_model(s.mode);
  return mm.scores(s.features).dot(mm.coefficients);
}

inline std::vector<Prediction> predict(const PcrModel& model, const TimeSeriesDataset& ds) {
  if (!ds.empty() && ds.feature_count() != model.feature_names.size())
    throw DimensionError("dataset has " + std::to_string(ds.feature_count()) +
                         " features, model expects " + std::to_string(model.feature_names.size()));
  std::vector<Prediction> out;
  out.reserve(ds.size());
  for (const Sample& s : ds.samples()) {
    const ModeModel& mm = model.mode_model(s.mode);
    Prediction p{s.timestamp, s.mode, mm.scores(s.features).dot(mm.coefficients), std::nullopt};
    if (mm.normalizer.has_target_stats()) p.y_raw = mm.normalizer.denormalize_target(p.y_norm);
    out.push_back(std::move(p));
  }
  return out;
}

// Training residual sum of squares in normalized target units.
inline double residual_sum_of_squares(const PcrModel& model, const ModeDatasets& complete) {
  double rss = 0.0;
  for (const auto& [mode, ds] : complete)
    for (const Sample& s : ds.samples()) {
      const ModeModel& mm = model.mode_model(s.mode);
      const double e = mm.scores(s.features).dot(mm.coefficients) -
                       mm.normalizer.normalize_target(*s.target);
      rss += e * e;
    }
  return rss;
}

}  // namespace cpcr
