// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "cpcr/eval.hpp"
#include "support.hpp"

using namespace cpcr;
using cpcr::testing::benchmark_data;
using cpcr::testing::benchmark_model_config;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << v;
  return ss.str();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

// Every solve made here is certified against the KKT conditions.
struct SolveLog {
  std::size_t converged = 0;
  std::size_t violations = 0;
  double worst = 0.0;

  qp::Solution solve(const qp::Problem& pr) {
    auto sol = qp::solve(pr);
    if (sol.status == qp::Status::converged) {
      ++converged;
      const auto r = qp::kkt_residuals(pr, sol);
      worst = std::max({worst, r.primal, r.dual, r.complementarity, r.stationarity});
      if (!r.satisfied(1e-8)) ++violations;
    }
    return sol;
  }
};

SolveLog g_solves;

double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
}

double max_pair_jump(const PcrModel& model, const TimeSeriesDataset& ds, double max_gap) {
  double worst = 0.0;
  for (const auto& p : extract_transitions(ds, max_gap))
    worst = std::max(worst, std::abs(predict_normalized(model, ds[p.from_index]) -
                                     predict_normalized(model, ds[p.to_index])));
  return worst;
}

double truth_rmse(const PcrModel& model, const TimeSeriesDataset& ds, const std::vector<double>& truth) {
  std::vector<double> yhat;
  for (const auto& p : predict(model, ds)) yhat.push_back(*p.y_raw);
  return rmse(truth, yhat);
}

// 1. Solver agrees with the enumeration oracle on small random problems.
Outcome criterion_oracle() {
  Outcome o;
  NormalStream rng(20160408);
  const auto t0 = Clock::now();
  double dw = 0.0, dobj = 0.0;
  int disagreements = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto pr = cpcr::testing::random_problem(rng, 4, 3);
    const auto sol = g_solves.solve(pr);
    const auto ref = qp::oracle_solve(pr);
    const double w = max_abs_diff(sol.coefficients, ref.coefficients);
    const double f = std::abs(sol.objective_value - ref.objective_value);
    dw = std::max(dw, w);
    dobj = std::max(dobj, f);
    if (sol.status != qp::Status::converged || ref.status != qp::Status::converged || w > 1e-6 || f > 1e-8)
      ++disagreements;
  }
  const double elapsed = seconds_since(t0);
  o.check(disagreements == 0, std::to_string(disagreements) + " disagreements");
  o.check(elapsed < 5.0, "runtime");
  o.note("100 problems, max |dW| " + fmt(dw, 3) + ", max |df| " + fmt(dobj, 3) + ", " + fmt(elapsed, 3) + " s");
  return o;
}

// 3. Zero pairs and a huge slack both reproduce MPCR.
Outcome criterion_reduces_to_mpcr() {
  Outcome o;
  const auto& data = benchmark_data();
  auto cfg = benchmark_model_config();
  const auto mpcr = train_mpcr(data.complete, cfg);

  std::vector<Sample> flat;
  for (int i = 0; i < 5; ++i)
    flat.push_back({1800.0 * i, "m1", data.incomplete.at("c1")[0].features, std::nullopt});
  const TimeSeriesDataset no_pairs(data.incomplete.at("c1").feature_names(), flat);
  const auto a = train_cpcr(data.complete, no_pairs, "flat", cfg);
  g_solves.solve(cpcr::testing::cpcr_problem(data.complete, no_pairs, cfg));
  const double d0 = max_abs_diff(a.stacked_coefficients(), mpcr.stacked_coefficients());

  cfg.c = 1e12;
  const auto b = train_cpcr(data.complete, data.incomplete.at("c1"), "c1", cfg);
  g_solves.solve(cpcr::testing::cpcr_problem(data.complete, data.incomplete.at("c1"), cfg));
  const double d1 = max_abs_diff(b.stacked_coefficients(), mpcr.stacked_coefficients());

  o.check(d0 <= 1e-8, "zero pairs");
  o.check(d1 <= 1e-8, "c = 1e12");
  o.note("zero pairs |dW| " + fmt(d0, 3) + ", c=1e12 |dW| " + fmt(d1, 3));
  return o;
}

// 4. With c = 0 predictions agree across every trained pair.
Outcome criterion_zero_slack() {
  Outcome o;
  const auto& data = benchmark_data();
  auto cfg = benchmark_model_config();
  cfg.c = 0.0;
  const auto& c1 = data.incomplete.at("c1");
  const auto bench = train_cpcr(data.complete, c1, "c1", cfg);
  g_solves.solve(cpcr::testing::cpcr_problem(data.complete, c1, cfg));
  const double jb = max_pair_jump(bench, c1, cfg.max_gap_seconds);

  // Fewer pairs than coefficients, so c = 0 leaves a non-trivial fit.
  NormalStream rng(4);
  const std::vector<std::string> names{"f1", "f2", "f3"};
  ModeDatasets complete;
  for (const char* mode : {"a", "b"}) {
    const Eigen::VectorXd w = cpcr::testing::random_vector(rng, 3);
    std::vector<Sample> s;
    for (int i = 0; i < 30; ++i) {
      const Eigen::VectorXd x = 5.0 + 2.0 * cpcr::testing::random_vector(rng, 3).array();
      s.push_back({60.0 * i, mode, {x(0), x(1), x(2)}, x.dot(w) + 0.1 * rng.normal()});
    }
    complete.emplace(mode, TimeSeriesDataset(names, s));
  }
  std::vector<Sample> inc;
  for (int i = 0; i < 6; ++i)
    inc.push_back({1800.0 * i, i / 2 % 2 ? "b" : "a",
                   {5 + rng.normal(), 5 + rng.normal(), 5 + rng.normal()}, std::nullopt});
  const TimeSeriesDataset small(names, inc);
  ModelConfig sc;
  sc.coverage_threshold = 1.0;
  const auto built = train_cpcr(complete, small, "small", sc);
  g_solves.solve(cpcr::testing::cpcr_problem(complete, small, sc));
  const double js = max_pair_jump(built, small, sc.max_gap_seconds);
  const double wn = built.stacked_coefficients().norm();

  o.check(jb <= 1e-6, "benchmark pairs");
  o.check(js <= 1e-6, "constructed pairs");
  o.check(wn > 1e-3, "constructed fit is trivial");
  o.note("benchmark max jump " + fmt(jb, 3) + ", constructed max jump " + fmt(js, 3) + " (|W| " + fmt(wn, 3) +
         ", " + std::to_string(built.constraint_meta->report.pairs_used) + " pairs)");
  return o;
}

// 5. The benchmark pattern: CPCR gives up training fit for continuity.
Outcome criterion_benchmark() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto data = generate(SynthConfig{});
  const auto cfg = benchmark_model_config();
  const std::vector<NamedModel> models{
      {"mpcr", train_mpcr(data.complete, cfg)},
      {"spcr", train_spcr(data.complete, cfg)},
      {"cpcr", train_cpcr(data.complete, data.incomplete.at("c1"), "c1", cfg)}};
  const auto reports = run_test_suite(models, data.complete, data.incomplete);
  const double elapsed = seconds_since(t0);
  g_solves.solve(cpcr::testing::cpcr_problem(data.complete, data.incomplete.at("c1"), cfg));

  const double rss_m = residual_sum_of_squares(models[0].model, data.complete);
  const double rss_c = residual_sum_of_squares(models[2].model, data.complete);
  const double dm = reports[0].delta_y.at("c2"), ds = reports[1].delta_y.at("c2"),
               dc = reports[2].delta_y.at("c2");
  o.check(rss_m <= rss_c, "RSS(MPCR) <= RSS(CPCR)");
  o.check(dc < dm, "dy(CPCR) < dy(MPCR)");
  o.check(dc < ds, "dy(CPCR) < dy(SPCR)");
  o.check(elapsed < 10.0, "runtime");
  o.note("dy c2 MPCR " + fmt(dm) + " SPCR " + fmt(ds) + " CPCR " + fmt(dc) + ", RSS " + fmt(rss_m) + " <= " +
         fmt(rss_c) + ", active " + std::to_string(models[2].model.constraint_meta->active_constraints) + ", " +
         fmt(elapsed, 3) + " s");
  return o;
}

// 6. Noiseless recovery, and held-out truth tracking.
Outcome criterion_recovery() {
  Outcome o;
  SynthConfig clean;
  clean.noise_std = 0.0;
  const auto d = generate(clean);
  ModelConfig full;
  full.coverage_threshold = 1.0;
  const auto rep = evaluate_model({"mpcr", train_mpcr(d.complete, full)}, d.complete, {}, {});
  double worst = 0.0;
  for (const auto& [mode, r] : rep.per_mode_rmse_raw) worst = std::max(worst, r);

  const auto& data = benchmark_data();
  const auto cfg = benchmark_model_config();
  const auto& c2 = data.incomplete.at("c2");
  const auto& truth = data.truth.at("c2");
  const double rm = truth_rmse(train_mpcr(data.complete, cfg), c2, truth);
  const double rs = truth_rmse(train_spcr(data.complete, cfg), c2, truth);
  const double rc = truth_rmse(train_cpcr(data.complete, data.incomplete.at("c1"), "c1", cfg), c2, truth);

  o.check(worst <= 1e-6, "noiseless raw RMSE");
  o.check(rc <= rs, "truth RMSE(CPCR) <= RMSE(SPCR)");
  o.note("noiseless raw RMSE " + fmt(worst, 3) + "; truth RMSE c2 MPCR " + fmt(rm, 3) + " SPCR " + fmt(rs, 3) +
         " CPCR " + fmt(rc, 3));
  return o;
}

// 7. PCA invariants on the benchmark modes and on isotropic data.
Outcome criterion_pca() {
  Outcome o;
  auto inspect = [&](const Eigen::MatrixXd& x, const PcaModel& pca, const std::string& tag) {
    const auto k = static_cast<Eigen::Index>(pca.components());
    const double orth =
        (pca.loading.transpose() * pca.loading - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
    const Eigen::MatrixXd t = pca.transform_rows(x);
    const Eigen::MatrixXd tc = t.rowwise() - t.colwise().mean();
    const Eigen::VectorXd var = tc.colwise().squaredNorm() / static_cast<double>(x.rows() - 1);
    double rel = 0.0;
    for (Eigen::Index i = 0; i < k; ++i)
      rel = std::max(rel, std::abs(var(i) - pca.eigenvalues(i)) / pca.eigenvalues(i));
    o.check(orth <= 1e-10, tag + " orthonormality");
    o.check(rel <= 1e-8, tag + " score variance");
    return std::max(orth, rel);
  };
  double worst = 0.0;
  for (const auto& [mode, ds] : benchmark_data().complete) {
    const Eigen::MatrixXd z = apply_normalizer(fit_normalizer(ds), ds).feature_matrix();
    worst = std::max(worst, inspect(z, fit_pca(z, 0.8), mode));
  }
  NormalStream rng(4);
  const Eigen::MatrixXd iso = cpcr::testing::random_matrix(rng, 100000, 5);
  const auto pca = fit_pca(iso, 0.8);
  worst = std::max(worst, inspect(iso, pca, "isotropic"));
  o.check(pca.components() == 4, "isotropic K = 4 of 5");
  o.note("worst residual " + fmt(worst, 3) + ", isotropic K = " + std::to_string(pca.components()));
  return o;
}

// 8. Metric identities, checked against hand computations.
Outcome criterion_metrics() {
  Outcome o;
  const auto& data = benchmark_data();
  const auto model = train_mpcr(data.complete, benchmark_model_config());
  double worst = 0.0;
  for (const auto& [mode, ds] : data.complete) {
    const auto& mm = model.mode_model(mode);
    std::vector<double> y, yhat;
    const auto preds = predict(model, ds);
    for (std::size_t n = 0; n < ds.size(); ++n) {
      y.push_back(mm.normalizer.normalize_target(*ds[n].target));
      yhat.push_back(preds[n].y_norm);
    }
    double mean = 0.0, ss_res = 0.0, ss_tot = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    for (std::size_t n = 0; n < y.size(); ++n) {
      ss_res += (y[n] - yhat[n]) * (y[n] - yhat[n]);
      ss_tot += (y[n] - mean) * (y[n] - mean);
    }
    const double mse = ss_res / static_cast<double>(y.size());
    const double r = rmse(y, yhat);
    worst = std::max({worst, std::abs(r_squared(y, yhat) - (1.0 - ss_res / ss_tot)),
                      std::abs(r * r - mse), std::abs(r - std::sqrt(mse))});
  }
  for (const auto& [id, ds] : data.incomplete) {
    const auto pairs = extract_transitions(ds, 86400.0);
    double sum = 0.0;
    for (const auto& p : pairs)
      sum += std::abs(predict_normalized(model, ds[p.to_index]) - predict_normalized(model, ds[p.from_index]));
    worst = std::max(worst, std::abs(delta_y(model, ds, 86400.0).mean - sum / static_cast<double>(pairs.size())));
  }
  o.check(worst <= 1e-12, "identity residual");
  o.note("worst residual " + fmt(worst, 3));
  return o;
}

// The CLI pipeline used by criteria 9 and 10.
struct Pipeline {
  fs::path dir;
  int rc = 0;
  std::string report_json, report_csv;
};

int run_pipeline(const fs::path& dir, const std::string& config) {
  using cli::Options;
  std::ostringstream log, err;
  auto p = [&](const std::string& name) { return (dir / name).string(); };
  auto call = [&](Options opt) {
    const int rc = cli::run(opt, log, err);
    if (rc) std::cerr << err.str();
    return rc;
  };
  if (int rc = call({"generate", config, "", {}, {}, {}, dir.string(), {}})) return rc;
  const std::vector<std::string> complete{"m1=" + p("complete_m1.csv"), "m2=" + p("complete_m2.csv")};
  for (const char* kind : {"mpcr", "spcr"})
    if (int rc = call({"train", config, kind, complete, {}, {}, dir.string(), {}})) return rc;
  if (int rc = call({"train", config, "cpcr", complete, {"c1=" + p("incomplete_c1.csv")}, {}, dir.string(), {}}))
    return rc;
  return call({"evaluate", config, "", complete,
               {"c1=" + p("incomplete_c1.csv"), "c2=" + p("incomplete_c2.csv")},
               {"mpcr=" + p("model_mpcr.json"), "spcr=" + p("model_spcr.json"), "cpcr=" + p("model_cpcr.json")},
               dir.string(), {}});
}

Pipeline g_pipeline;

// 9. Reruns of the full CLI pipeline are byte-identical.
Outcome criterion_reproducible(const std::string& config) {
  Outcome o;
  g_pipeline.dir = fs::temp_directory_path() / ("cpcr_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(g_pipeline.dir);
  const auto& dir = g_pipeline.dir;
  int rc1 = run_pipeline(dir, config);
  const std::string j1 = rc1 ? "" : cli::read_file((dir / "report.json").string());
  const std::string t1 = rc1 ? "" : cli::read_file((dir / "report.csv").string());
  int rc2 = run_pipeline(dir, config);
  g_pipeline.rc = rc1 ? rc1 : rc2;
  o.check(rc1 == 0 && rc2 == 0, "pipeline exit codes " + std::to_string(rc1) + "/" + std::to_string(rc2));
  if (g_pipeline.rc) return o;
  g_pipeline.report_json = cli::read_file((dir / "report.json").string());
  g_pipeline.report_csv = cli::read_file((dir / "report.csv").string());
  o.check(j1 == g_pipeline.report_json, "report.json differs");
  o.check(t1 == g_pipeline.report_csv, "report.csv differs");
  o.note("report.json sha256 " + cli::sha256_hex(g_pipeline.report_json).substr(0, 16));
  return o;
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::istringstream in(cli::read_file(path.string()));
  std::vector<Prediction> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string t, mode, y;
    std::getline(row, t, ',');
    std::getline(row, mode, ',');
    std::getline(row, y, ',');
    out.push_back({std::stod(t), mode, std::stod(y), std::nullopt});
  }
  return out;
}

// 10. The held-out prediction series: MPCR jumps at switches, CPCR does not.
Outcome criterion_jumps() {
  Outcome o;
  if (g_pipeline.rc || g_pipeline.dir.empty()) {
    o.check(false, "pipeline output unavailable");
    return o;
  }
  const auto m = jump_stats(read_predictions(g_pipeline.dir / "predictions_mpcr_c2.csv"));
  const auto c = jump_stats(read_predictions(g_pipeline.dir / "predictions_cpcr_c2.csv"));
  const double rm = m.max_step / m.median_step;
  const double rc = c.max_switch_jump / c.median_step;
  o.check(rm > 5.0, "MPCR max step / median > 5");
  o.check(rc < 2.0, "CPCR max switch jump / median < 2");
  o.note("MPCR " + fmt(rm, 4) + ", CPCR " + fmt(rc, 4) + " over " + std::to_string(c.switches) + " switches");
  return o;
}

// 2. Runs last: every solve above is certified.
Outcome criterion_kkt() {
  Outcome o;
  o.check(g_solves.converged > 0, "no converged solves");
  o.check(g_solves.violations == 0, std::to_string(g_solves.violations) + " KKT violations");
  o.note(std::to_string(g_solves.converged) + " converged solves, worst residual " + fmt(g_solves.worst, 3));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config = argc > 1 ? argv[1] : CPCR_BENCHMARK_CONFIG;
  std::vector<std::pair<int, std::function<Outcome()>>> order{
      {1, criterion_oracle},
      {3, criterion_reduces_to_mpcr},
      {4, criterion_zero_slack},
      {5, criterion_benchmark},
      {6, criterion_recovery},
      {7, criterion_pca},
      {8, criterion_metrics},
      {9, [&] { return criterion_reproducible(config); }},
      {10, criterion_jumps},
      {2, criterion_kkt}};
  std::map<int, Outcome> results;
  for (auto& [id, fn] : order) {
    try {
      results[id] = fn();
    } catch (const std::exception& e) {
      results[id] = {false, std::string("exception: ") + e.what()};
    }
  }
  if (!g_pipeline.dir.empty()) fs::remove_all(g_pipeline.dir);

  int failed = 0;
  for (const auto& [id, r] : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << r.detail << "\n";
    failed += !r.pass;
  }
  std::cout << (failed ? "FAILED " + std::to_string(failed) + " of " : "ALL PASSED: ")
            << results.size() << " criteria\n";
  return failed ? 1 : 0;
}
