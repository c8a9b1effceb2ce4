#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cpcr/csv.hpp"
#include "cpcr/dataset.hpp"
#include "cpcr/error.hpp"
#include "cpcr/model.hpp"
#include "cpcr/model_io.hpp"

namespace cpcr {

namespace detail {

inline void check_lengths(const std::vector<double>& y, const std::vector<double>& yhat) {
  if (y.size() != yhat.size())
    throw DimensionError("observed and predicted lengths differ (" + std::to_string(y.size()) +
                         " vs " + std::to_string(yhat.size()) + ")");
  if (y.empty()) throw DimensionError("metrics need at least one observation");
}

}  // namespace detail

inline double r_squared(const std::vector<double>& y, const std::vector<double>& yhat) {
  detail::check_lengths(y, yhat);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw InvariantError("r_squared: observed values have zero variance");
  return 1.0 - ss_res / ss_tot;
}

inline double rmse(const std::vector<double>& y, const std::vector<double>& yhat) {
  detail::check_lengths(y, yhat);
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(ss / static_cast<double>(y.size()));
}

struct DeltaY {
  double mean = 0.0;
  std::size_t pairs = 0;
};

// Mean |y_hat(from) - y_hat(to)| over gap-filtered transition pairs, in
// normalized target units.
inline DeltaY delta_y(const PcrModel& model, const TimeSeriesDataset& ds,
                      double max_gap_seconds) {
  const auto pairs = extract_transitions(ds, max_gap_seconds);
  if (pairs.empty()) throw InvariantError("delta_y: dataset has no transition pairs");
  double sum = 0.0;
  for (const auto& tp : pairs)
    sum += std::abs(predict_normalized(model, ds[tp.from_index]) -
                    predict_normalized(model, ds[tp.to_index]));
  return {sum / static_cast<double>(pairs.size()), pairs.size()};
}

struct EvaluationReport {
  std::string model_name;
  ModelKind model_kind = ModelKind::mpcr;
  std::optional<std::string> constraint_dataset;
  std::map<std::string, double> per_mode_r2;
  std::map<std::string, double> per_mode_rmse;      // normalized units
  std::map<std::string, double> per_mode_rmse_raw;  // target units
  std::map<std::string, double> delta_y;
  std::map<std::string, std::size_t> pair_count;
  std::optional<std::string> evaluated_at;  // only when supplied by the caller
};

struct EvalConfig {
  double max_gap_seconds = 86400.0;
  std::optional<std::string> evaluated_at;
};

struct NamedModel {
  std::string name;
  PcrModel model;
};

// Test I on the complete (training) data, Test II on every incomplete
// dataset except the one a model was constrained on.
inline EvaluationReport evaluate_model(const NamedModel& nm, const ModeDatasets& complete,
                                       const ModeDatasets& incompletes, const EvalConfig& cfg) {
  const PcrModel& model = nm.model;
  EvaluationReport rep;
  rep.model_name = nm.name;
  rep.model_kind = model.kind;
  rep.evaluated_at = cfg.evaluated_at;
  if (model.constraint_meta) rep.constraint_dataset = model.constraint_meta->dataset_id;

  for (const auto& [mode, ds] : complete) {
    if (!ds.has_targets())
      throw InvariantError("Test I dataset for mode '" + mode + "' has no targets");
    const auto preds = predict(model, ds);
    std::vector<double> y, yhat, y_raw, yhat_raw;
    for (std::size_t n = 0; n < ds.size(); ++n) {
      const ModeModel& mm = model.mode_model(ds[n].mode);
      y.push_back(mm.normalizer.normalize_target(*ds[n].target));
      yhat.push_back(preds[n].y_norm);
      y_raw.push_back(*ds[n].target);
      yhat_raw.push_back(*preds[n].y_raw);
    }
    rep.per_mode_r2[mode] = r_squared(y, yhat);
    rep.per_mode_rmse[mode] = rmse(y, yhat);
    rep.per_mode_rmse_raw[mode] = rmse(y_raw, yhat_raw);
  }
  for (const auto& [id, ds] : incompletes) {
    if (rep.constraint_dataset && *rep.constraint_dataset == id) continue;
    const DeltaY d = delta_y(model, ds, cfg.max_gap_seconds);
    rep.delta_y[id] = d.mean;
    rep.pair_count[id] = d.pairs;
  }
  return rep;
}

inline std::vector<EvaluationReport> run_test_suite(const std::vector<NamedModel>& models,
                                                    const ModeDatasets& complete,
                                                    const ModeDatasets& incompletes,
                                                    const EvalConfig& cfg = {}) {
  std::vector<EvaluationReport> out;
  for (const auto& nm : models) out.push_back(evaluate_model(nm, complete, incompletes, cfg));
  return out;
}

inline std::vector<EvaluationReport> run_test_suite(const std::vector<PcrModel>& models,
                                                    const ModeDatasets& complete,
                                                    const ModeDatasets& incompletes,
                                                    const EvalConfig& cfg = {}) {
  std::vector<NamedModel> named;
  for (const auto& m : models) named.push_back({to_string(m.kind), m});
  return run_test_suite(named, complete, incompletes, cfg);
}

inline json report_to_json(const EvaluationReport& r) {
  json j{{"model", r.model_name},
         {"kind", to_string(r.model_kind)},
         {"constraint_dataset", r.constraint_dataset ? json(*r.constraint_dataset) : json(nullptr)},
         {"training_fit", {{"r2", r.per_mode_r2},
                           {"rmse", r.per_mode_rmse},
                           {"rmse_raw", r.per_mode_rmse_raw}}},
         {"transition_jump", {{"delta_y", r.delta_y}, {"pairs", r.pair_count}}}};
  if (r.evaluated_at) j["evaluated_at"] = *r.evaluated_at;
  return j;
}

// Table layout: one row per model; r2 and RMSE per mode, delta_y per
// incomplete dataset. A model's own constraint dataset is left blank.
inline void write_report_table(std::ostream& out, const std::vector<EvaluationReport>& reports) {
  std::set<std::string> modes, ids;
  for (const auto& r : reports) {
    for (const auto& [m, v] : r.per_mode_r2) modes.insert(m);
    for (const auto& [id, v] : r.delta_y) ids.insert(id);
    if (r.constraint_dataset) ids.insert(*r.constraint_dataset);
  }
  out << "model,kind";
  for (const auto& m : modes) out << ',' << csv_escape("r2_training_fit_" + m);
  for (const auto& m : modes) out << ',' << csv_escape("rmse_training_fit_" + m);
  for (const auto& id : ids) out << ',' << csv_escape("delta_y_" + id);
  out << '\n';
  auto cell = [&](const std::map<std::string, double>& mp, const std::string& key) {
    auto it = mp.find(key);
    out << ',';
    if (it != mp.end()) out << format_double(it->second);
  };
  for (const auto& r : reports) {
    out << csv_escape(r.model_name) << ',' << to_string(r.model_kind);
    for (const auto& m : modes) cell(r.per_mode_r2, m);
    for (const auto& m : modes) cell(r.per_mode_rmse, m);
    for (const auto& id : ids) cell(r.delta_y, id);
    out << '\n';
  }
}

// Flat form: one row per (model, metric, key).
inline void write_report_metrics(std::ostream& out, const std::vector<EvaluationReport>& reports) {
  out << "model,kind,metric,key,value\n";
  auto rows = [&](const EvaluationReport& r, const char* metric, const auto& mp) {
    for (const auto& [key, v] : mp)
      out << csv_escape(r.model_name) << ',' << to_string(r.model_kind) << ',' << metric << ','
          << csv_escape(key) << ',' << format_double(static_cast<double>(v)) << '\n';
  };
  for (const auto& r : reports) {
    rows(r, "r2_training_fit", r.per_mode_r2);
    rows(r, "rmse_training_fit", r.per_mode_rmse);
    rows(r, "rmse_raw_training_fit", r.per_mode_rmse_raw);
    rows(r, "delta_y", r.delta_y);
    rows(r, "pair_count", r.pair_count);
  }
}

inline void write_predictions(std::ostream& out, const std::vector<Prediction>& preds) {
  out << "timestamp,mode,y_hat_norm,y_hat_raw\n";
  for (const auto& p : preds) {
    out << format_double(p.timestamp) << ',' << csv_escape(p.mode) << ','
        << format_double(p.y_norm) << ',';
    if (p.y_raw) out << format_double(*p.y_raw);
    out << '\n';
  }
}

// Step sizes of a predicted series: used to spot jumps at mode switches.
struct JumpStats {
  double median_step = 0.0;      // over all adjacent steps
  double max_step = 0.0;         // over all adjacent steps
  double max_switch_jump = 0.0;  // over steps where the mode changes
  std::size_t switches = 0;
};

inline JumpStats jump_stats(const std::vector<Prediction>& preds) {
  JumpStats js;
  std::vector<double> steps;
  for (std::size_t n = 0; n + 1 < preds.size(); ++n) {
    const double d = std::abs(preds[n + 1].y_norm - preds[n].y_norm);
    steps.push_back(d);
    js.max_step = std::max(js.max_step, d);
    if (preds[n].mode != preds[n + 1].mode) {
      js.max_switch_jump = std::max(js.max_switch_jump, d);
      ++js.switches;
    }
  }
  if (!steps.empty()) {
    const std::size_t mid = steps.size() / 2;
    std::nth_element(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(mid), steps.end());
    double med = steps[mid];
    if (steps.size() % 2 == 0) {
      const double lo = *std::max_element(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(mid));
      med = 0.5 * (med + lo);
    }
    js.median_step = med;
  }
  return js;
}

}  // namespace cpcr
