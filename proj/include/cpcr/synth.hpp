#pragma once

// Synthetic multi-mode process data with a known, slowly falling "leak"
// level. Features of mode m are
//
//   x = G_m [leak, ambient]' + o_m + noise                 (complete data)
//   x = G_m [leak, ambient]' + o_m + ambient d_m + noise   (incomplete data)
//
// G_m has orthogonal columns scaled by leak_gain and ambient_gain, o_m is a
// per-mode offset and d_m a per-mode drift that only shows up in the field
// (incomplete) data, so models fitted on complete data are biased there in a
// mode-dependent way. The ambient driver is a shared sinusoid.
//
// Random numbers: std::mt19937_64 (fully specified by the standard) with
// uniforms u = (r >> 11) * 2^-53 and normals from the Box-Muller transform,
// z0 = sqrt(-2 ln(1 - u1)) cos(2 pi u2), z1 = ... sin(2 pi u2), used in
// that order. Draw order: gain columns, offsets, drifts (each mode in turn),
// complete datasets, then incomplete datasets (phase first, then noise in
// sample-major, feature-minor order).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cpcr/dataset.hpp"
#include "cpcr/error.hpp"

namespace cpcr {

struct LeakKnot {
  double time = 0.0;   // fraction of the episode, in [0, 1]
  double level = 1.0;  // remaining refrigerant, in [0, 1]
};

struct SynthConfig {
  std::uint64_t seed = 42;
  int n_features = 8;
  int n_modes = 2;
  int samples_per_segment = 3;
  int n_segments = 20;
  double noise_std = 0.05;
  std::vector<LeakKnot> leak_trajectory{{0.0, 1.0}, {1.0, 0.2}};
  std::vector<Eigen::MatrixXd> mode_gain_matrices;  // empty: drawn from the seed
  double leak_gain = 30.0;
  double ambient_gain = 8.0;
  double field_drift = 2.0;
  double sample_interval_seconds = 1800.0;
  double gap_seconds = 1800.0;  // last sample of a segment to first of the next
  double ambient_period_seconds = 2 * 86400.0;
  int complete_samples = 96;  // per mode
  double complete_ambient_amplitude = 1.0;
  double complete_ambient_cycles = 2.0;
  int n_incomplete = 2;
  double start_epoch = 1.4600448e9;  // 2016-04-08T00:00:00Z

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("synth config: " + msg); };
    if (n_features < 2) fail("n_features must be at least 2");
    if (n_modes < 1) fail("n_modes must be at least 1");
    if (samples_per_segment < 1) fail("samples_per_segment must be at least 1");
    if (n_segments < 1) fail("n_segments must be at least 1");
    if (!(noise_std >= 0.0)) fail("noise_std must be non-negative");
    if (leak_trajectory.empty()) fail("leak_trajectory needs at least one knot");
    for (std::size_t i = 0; i < leak_trajectory.size(); ++i) {
      const auto& k = leak_trajectory[i];
      if (!(k.time >= 0.0 && k.time <= 1.0)) fail("knot times must lie in [0, 1]");
      if (!(k.level >= 0.0 && k.level <= 1.0)) fail("knot levels must lie in [0, 1]");
      if (i > 0 && !(k.time > leak_trajectory[i - 1].time))
        fail("knot times must be strictly increasing");
      if (i > 0 && k.level > leak_trajectory[i - 1].level)
        fail("leak level must be non-increasing");
    }
    if (!mode_gain_matrices.empty()) {
      if (static_cast<int>(mode_gain_matrices.size()) != n_modes)
        fail("mode_gain_matrices needs one matrix per mode");
      for (const auto& g : mode_gain_matrices)
        if (g.rows() != n_features || g.cols() != 2)
          fail("each gain matrix must be n_features x 2");
    }
    if (!(sample_interval_seconds > 0.0)) fail("sample_interval_seconds must be positive");
    if (!(gap_seconds > 0.0)) fail("gap_seconds must be positive");
    if (!(ambient_period_seconds > 0.0)) fail("ambient_period_seconds must be positive");
    if (complete_samples < 2) fail("complete_samples must be at least 2");
    if (n_incomplete < 0) fail("n_incomplete must be non-negative");
    if (!std::isfinite(start_epoch)) fail("start_epoch must be finite");
  }

  // Piecewise-linear leak level, flat outside the knot range.
  double leak_at(double u) const {
    if (u <= leak_trajectory.front().time) return leak_trajectory.front().level;
    for (std::size_t i = 1; i < leak_trajectory.size(); ++i) {
      const auto& a = leak_trajectory[i - 1];
      const auto& b = leak_trajectory[i];
      if (u <= b.time) return a.level + (b.level - a.level) * (u - a.time) / (b.time - a.time);
    }
    return leak_trajectory.back().level;
  }

  // Steepest leak decline, per unit of episode fraction.
  double max_slope() const {
    double s = 0.0;
    for (std::size_t i = 1; i < leak_trajectory.size(); ++i) {
      const auto& a = leak_trajectory[i - 1];
      const auto& b = leak_trajectory[i];
      s = std::max(s, (a.level - b.level) / (b.time - a.time));
    }
    return s;
  }

  std::string mode_label(int m) const { return "m" + std::to_string(m + 1); }
  std::string incomplete_id(int k) const { return "c" + std::to_string(k + 1); }
};

struct SynthData {
  ModeDatasets complete;                             // one single-mode set per mode
  ModeDatasets incomplete;                           // mode-alternating, no targets
  std::map<std::string, std::vector<double>> truth;  // leak level per incomplete sample
  std::vector<Eigen::MatrixXd> gains;                // G_m actually used
};

class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (cached_) {
      cached_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    cached_ = true;
    return r * std::cos(th);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool cached_ = false;
};

inline SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  NormalStream rng(cfg.seed);
  const int m_feat = cfg.n_features;
  const auto M = static_cast<Eigen::Index>(m_feat);

  SynthData out;
  if (!cfg.mode_gain_matrices.empty()) {
    out.gains = cfg.mode_gain_matrices;
  } else {
    // Gram-Schmidt on two Gaussian columns, then scale.
    for (int m = 0; m < cfg.n_modes; ++m) {
      Eigen::MatrixXd g(M, 2);
      for (Eigen::Index c = 0; c < 2; ++c)
        for (Eigen::Index r = 0; r < M; ++r) g(r, c) = rng.normal();
      g.col(0).normalize();
      g.col(1) -= g.col(0).dot(g.col(1)) * g.col(0);
      g.col(1).normalize();
      g.col(0) *= cfg.leak_gain;
      g.col(1) *= cfg.ambient_gain;
      out.gains.push_back(g);
    }
  }
  std::vector<Eigen::VectorXd> offsets, drifts;
  for (int m = 0; m < cfg.n_modes; ++m) {
    Eigen::VectorXd o(M);
    for (Eigen::Index r = 0; r < M; ++r) o(r) = rng.normal();
    offsets.push_back(o);
  }
  for (int m = 0; m < cfg.n_modes; ++m) {
    Eigen::VectorXd d(M);
    for (Eigen::Index r = 0; r < M; ++r) d(r) = cfg.field_drift * rng.normal();
    drifts.push_back(d);
  }

  std::vector<std::string> names;
  for (int k = 0; k < m_feat; ++k) names.push_back("x" + std::to_string(k + 1));

  auto features = [&](int m, double leak, double ambient, bool field) {
    Eigen::VectorXd x = out.gains[static_cast<std::size_t>(m)] * Eigen::Vector2d(leak, ambient) +
                        offsets[static_cast<std::size_t>(m)];
    if (field) x += ambient * drifts[static_cast<std::size_t>(m)];
    std::vector<double> v(static_cast<std::size_t>(m_feat));
    for (Eigen::Index r = 0; r < M; ++r)
      v[static_cast<std::size_t>(r)] = x(r) + cfg.noise_std * rng.normal();
    return v;
  };

  const double two_pi = 2.0 * std::numbers::pi;
  for (int m = 0; m < cfg.n_modes; ++m) {
    std::vector<Sample> samples;
    for (int n = 0; n < cfg.complete_samples; ++n) {
      const double u = static_cast<double>(n) / (cfg.complete_samples - 1);
      const double leak = cfg.leak_at(u);
      const double amb = cfg.complete_ambient_amplitude *
                         std::sin(two_pi * cfg.complete_ambient_cycles * u + 0.5);
      samples.push_back({cfg.start_epoch + n * cfg.sample_interval_seconds, cfg.mode_label(m),
                         features(m, leak, amb, false), leak});
    }
    out.complete.emplace(cfg.mode_label(m), TimeSeriesDataset(names, std::move(samples)));
  }

  const int per_seg = cfg.samples_per_segment;
  const double seg_span = (per_seg - 1) * cfg.sample_interval_seconds + cfg.gap_seconds;
  const double episode = (cfg.n_segments - 1) * seg_span + (per_seg - 1) * cfg.sample_interval_seconds;
  for (int k = 0; k < cfg.n_incomplete; ++k) {
    const double phase = two_pi * rng.uniform();
    const double t0 = cfg.start_epoch + (k + 1) * 30 * 86400.0;
    std::vector<Sample> samples;
    std::vector<double> truth;
    for (int s = 0; s < cfg.n_segments; ++s) {
      const int m = (s + k) % cfg.n_modes;
      for (int i = 0; i < per_seg; ++i) {
        const double dt = s * seg_span + i * cfg.sample_interval_seconds;
        const double u = episode > 0 ? dt / episode : 0.0;
        const double leak = cfg.leak_at(u);
        const double amb = std::sin(two_pi * dt / cfg.ambient_period_seconds + phase);
        samples.push_back({t0 + dt, cfg.mode_label(m), features(m, leak, amb, true), std::nullopt});
        truth.push_back(leak);
      }
    }
    out.incomplete.emplace(cfg.incomplete_id(k), TimeSeriesDataset(names, std::move(samples)));
    out.truth.emplace(cfg.incomplete_id(k), std::move(truth));
  }
  return out;
}

inline nlohmann::ordered_json synth_config_to_json(const SynthConfig& c) {
  nlohmann::ordered_json knots = nlohmann::ordered_json::array();
  for (const auto& k : c.leak_trajectory) knots.push_back({k.time, k.level});
  nlohmann::ordered_json gains = nlohmann::ordered_json::array();
  for (const auto& g : c.mode_gain_matrices) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < g.rows(); ++r) rows.push_back({g(r, 0), g(r, 1)});
    gains.push_back(rows);
  }
  return {{"seed", c.seed},
          {"n_features", c.n_features},
          {"n_modes", c.n_modes},
          {"samples_per_segment", c.samples_per_segment},
          {"n_segments", c.n_segments},
          {"noise_std", c.noise_std},
          {"leak_trajectory", knots},
          {"mode_gain_matrices", gains},
          {"leak_gain", c.leak_gain},
          {"ambient_gain", c.ambient_gain},
          {"field_drift", c.field_drift},
          {"sample_interval_seconds", c.sample_interval_seconds},
          {"gap_seconds", c.gap_seconds},
          {"ambient_period_seconds", c.ambient_period_seconds},
          {"complete_samples", c.complete_samples},
          {"complete_ambient_amplitude", c.complete_ambient_amplitude},
          {"complete_ambient_cycles", c.complete_ambient_cycles},
          {"n_incomplete", c.n_incomplete},
          {"start_epoch", c.start_epoch}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline SynthConfig synth_config_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  SynthConfig c;
  const auto defaults = synth_config_to_json(c);
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ConfigError("synth config: unknown key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("seed", c.seed);
    get("n_features", c.n_features);
    get("n_modes", c.n_modes);
    get("samples_per_segment", c.samples_per_segment);
    get("n_segments", c.n_segments);
    get("noise_std", c.noise_std);
    get("leak_gain", c.leak_gain);
    get("ambient_gain", c.ambient_gain);
    get("field_drift", c.field_drift);
    get("sample_interval_seconds", c.sample_interval_seconds);
    get("gap_seconds", c.gap_seconds);
    get("ambient_period_seconds", c.ambient_period_seconds);
    get("complete_samples", c.complete_samples);
    get("complete_ambient_amplitude", c.complete_ambient_amplitude);
    get("complete_ambient_cycles", c.complete_ambient_cycles);
    get("n_incomplete", c.n_incomplete);
    get("start_epoch", c.start_epoch);
    if (j.contains("leak_trajectory")) {
      c.leak_trajectory.clear();
      for (const auto& k : j.at("leak_trajectory"))
        c.leak_trajectory.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
    }
    if (j.contains("mode_gain_matrices")) {
      for (const auto& gj : j.at("mode_gain_matrices")) {
        Eigen::MatrixXd g(static_cast<Eigen::Index>(gj.size()), 2);
        for (std::size_t r = 0; r < gj.size(); ++r) {
          g(static_cast<Eigen::Index>(r), 0) = gj[r].at(0).get<double>();
          g(static_cast<Eigen::Index>(r), 1) = gj[r].at(1).get<double>();
        }
        c.mode_gain_matrices.push_back(g);
      }
    }
  } catch (const nlohmann::ordered_json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace cpcr
