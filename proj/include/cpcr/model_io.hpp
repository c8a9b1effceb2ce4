#pragma once

// Self-describing JSON model documents. Doubles are written in their shortest
// round-trip form, so save -> load reproduces every coefficient bit for bit.

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpcr/error.hpp"
#include "cpcr/model.hpp"

namespace cpcr {

using json = nlohmann::ordered_json;

inline constexpr const char* kModelFormat = "cpcr-model";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

// JSON has no infinity; it is stored as null.
inline json number_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

inline double number_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline json to_array(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("model file: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("model file: bad field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline json config_to_json(const ModelConfig& c) {
  return json{{"coverage_threshold", c.coverage_threshold},
              {"c", detail::number_or_null(c.c)},
              {"max_gap_seconds", detail::number_or_null(c.max_gap_seconds)},
              {"qp_tol", c.qp_tol},
              {"max_iter", c.max_iter},
              {"ridge_policy", to_string(c.ridge_policy)},
              {"ridge", c.ridge}};
}

inline ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.coverage_threshold = detail::required<double>(j, "coverage_threshold");
  c.c = detail::number_or_inf(j.at("c"));
  c.max_gap_seconds = detail::number_or_inf(j.at("max_gap_seconds"));
  c.qp_tol = detail::required<double>(j, "qp_tol");
  c.max_iter = detail::required<int>(j, "max_iter");
  c.ridge_policy = parse_ridge_policy(detail::required<std::string>(j, "ridge_policy"));
  c.ridge = detail::required<double>(j, "ridge");
  return c;
}

inline json report_to_json(const ConstraintBuildReport& r) {
  return json{{"pairs_found", r.pairs_found},
              {"pairs_used", r.pairs_used},
              {"pairs_dropped_gap", r.pairs_dropped_gap},
              {"constraint_rows", r.constraint_rows}};
}

inline ConstraintBuildReport report_from_json(const json& j) {
  return {detail::required<std::size_t>(j, "pairs_found"),
          detail::required<std::size_t>(j, "pairs_used"),
          detail::required<std::size_t>(j, "pairs_dropped_gap"),
          detail::required<std::size_t>(j, "constraint_rows")};
}

inline json model_to_json(const PcrModel& m) {
  json modes = json::object();
  for (const auto& [mode, mm] : m.per_mode) {
    json norm{{"means", detail::to_array(mm.normalizer.means)},
              {"stds", detail::to_array(mm.normalizer.stds)},
              {"target_mean", mm.normalizer.target_mean ? json(*mm.normalizer.target_mean) : json(nullptr)},
              {"target_std", mm.normalizer.target_std ? json(*mm.normalizer.target_std) : json(nullptr)}};
    json loading = json::array();  // row-major
    for (Eigen::Index r = 0; r < mm.pca.loading.rows(); ++r)
      for (Eigen::Index c = 0; c < mm.pca.loading.cols(); ++c) loading.push_back(mm.pca.loading(r, c));
    json pca{{"shape", {mm.pca.loading.rows(), mm.pca.loading.cols()}},
             {"loading", loading},
             {"eigenvalues", detail::to_array(mm.pca.eigenvalues)},
             {"total_variance", mm.pca.total_variance},
             {"coverage", mm.pca.coverage},
             {"threshold", mm.pca.threshold}};
    modes[mode] = json{{"normalizer", norm}, {"pca", pca},
                       {"coefficients", detail::to_array(mm.coefficients)}};
  }
  json meta = nullptr;
  if (m.constraint_meta) {
    const auto& cm = *m.constraint_meta;
    meta = json{{"dataset_id", cm.dataset_id},
                {"c", detail::number_or_null(cm.c)},
                {"max_gap_seconds", detail::number_or_null(cm.max_gap_seconds)},
                {"pairs", cm.report.pairs_used},
                {"report", report_to_json(cm.report)},
                {"active_constraints", cm.active_constraints},
                {"iterations", cm.iterations}};
  }
  return json{{"format", kModelFormat},
              {"version", kModelFormatVersion},
              {"kind", to_string(m.kind)},
              {"feature_names", m.feature_names},
              {"ridge", m.ridge},
              {"modes", modes},
              {"constraint_meta", meta},
              {"config", config_to_json(m.config)},
              {"provenance", m.provenance}};
}

inline PcrModel model_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != kModelFormat)
    throw SchemaError("not a model file (format tag missing)");
  if (j.value("version", 0) != kModelFormatVersion)
    throw SchemaError("unsupported model format version");
  PcrModel m;
  try {
    m.kind = parse_model_kind(detail::required<std::string>(j, "kind"));
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("model file: ") + e.what());
  }
  m.feature_names = detail::required<std::vector<std::string>>(j, "feature_names");
  m.ridge = detail::required<double>(j, "ridge");
  m.config = config_from_json(j.at("config"));
  if (j.contains("provenance"))
    m.provenance = j.at("provenance").get<std::map<std::string, std::string>>();

  const std::size_t width = m.feature_names.size();
  for (const auto& [mode, mj] : j.at("modes").items()) {
    ModeModel mm;
    const json& nj = mj.at("normalizer");
    mm.normalizer.means = detail::vector_from(nj.at("means"));
    mm.normalizer.stds = detail::vector_from(nj.at("stds"));
    if (!nj.at("target_mean").is_null()) mm.normalizer.target_mean = nj.at("target_mean").get<double>();
    if (!nj.at("target_std").is_null()) mm.normalizer.target_std = nj.at("target_std").get<double>();

    const json& pj = mj.at("pca");
    const auto rows = pj.at("shape").at(0).get<Eigen::Index>();
    const auto cols = pj.at("shape").at(1).get<Eigen::Index>();
    const json& lj = pj.at("loading");
    if (static_cast<Eigen::Index>(lj.size()) != rows * cols)
      throw SchemaError("model file: loading of mode '" + mode + "' does not match its shape");
    mm.pca.loading.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        mm.pca.loading(r, c) = lj[static_cast<std::size_t>(r * cols + c)].get<double>();
    mm.pca.eigenvalues = detail::vector_from(pj.at("eigenvalues"));
    mm.pca.total_variance = pj.at("total_variance").get<double>();
    mm.pca.coverage = pj.at("coverage").get<double>();
    mm.pca.threshold = pj.at("threshold").get<double>();
    mm.coefficients = detail::vector_from(mj.at("coefficients"));

    if (static_cast<std::size_t>(mm.normalizer.means.size()) != width ||
        static_cast<std::size_t>(mm.normalizer.stds.size()) != width ||
        static_cast<std::size_t>(rows) != width || mm.coefficients.size() != cols ||
        mm.pca.eigenvalues.size() != cols)
      throw SchemaError("model file: inconsistent dimensions for mode '" + mode + "'");
    m.per_mode.emplace(mode, std::move(mm));
  }
  if (m.kind == ModelKind::spcr && (m.per_mode.size() != 1 || !m.per_mode.count(kPooledMode)))
    throw SchemaError("model file: an spcr model holds exactly the pooled mode");

  const json& meta = j.at("constraint_meta");
  if (!meta.is_null()) {
    ConstraintMeta cm;
    cm.dataset_id = detail::required<std::string>(meta, "dataset_id");
    cm.c = detail::number_or_inf(meta.at("c"));
    cm.max_gap_seconds = detail::number_or_inf(meta.at("max_gap_seconds"));
    cm.report = report_from_json(meta.at("report"));
    cm.active_constraints = detail::required<std::size_t>(meta, "active_constraints");
    cm.iterations = detail::required<int>(meta, "iterations");
    m.constraint_meta = cm;
  }
  return m;
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

inline void save_model(const std::string& path, const PcrModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  out << dump_json(model_to_json(m));
}

inline PcrModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open model file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("model file '" + path + "': " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw SchemaError("model file '" + path + "': " + e.what());
  }
}

}  // namespace cpcr
