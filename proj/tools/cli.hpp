#pragma once

// Commands of the cpcr tool. main() only parses flags into Options; each
// command returns an exit code and reports failures on the error stream.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include "cpcr/csv.hpp"
#include "cpcr/dataset.hpp"
#include "cpcr/error.hpp"
#include "cpcr/eval.hpp"
#include "cpcr/model.hpp"
#include "cpcr/model_io.hpp"
#include "cpcr/synth.hpp"

namespace cpcr::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitMismatch = 4;

struct Options {
  std::string command;
  std::string config_path;
  std::string kind;
  std::vector<std::string> complete;    // [mode=]path
  std::vector<std::string> incomplete;  // [id=]path
  std::vector<std::string> models;      // [name=]path
  std::string out;
  std::vector<std::string> sets;        // key=value overrides
};

// Effective settings of one run: a flat JSON document. Keys not listed here
// must be synthetic-generator keys.
struct RunConfig {
  ModelConfig model;
  std::uint64_t seed = 42;
  CsvSchema schema;
  std::string output_directory = "out";
  std::optional<std::string> evaluated_at;
  json synth = json::object();  // generator keys given by the user, except seed

  json to_json() const {
    json j{{"coverage_threshold", model.coverage_threshold},
           {"c", model.c},
           {"max_gap_seconds", detail::number_or_null(model.max_gap_seconds)},
           {"qp_tol", model.qp_tol},
           {"max_iter", model.max_iter},
           {"ridge_policy", to_string(model.ridge_policy)},
           {"ridge", model.ridge},
           {"seed", seed},
           {"timestamp_column", schema.timestamp_column},
           {"mode_column", schema.mode_column},
           {"target_column", schema.target_column},
           {"feature_columns", schema.feature_columns},
           {"output_directory", output_directory},
           {"evaluated_at", evaluated_at ? json(*evaluated_at) : json(nullptr)}};
    for (const auto& [k, v] : synth.items()) j[k] = v;
    return j;
  }

  static RunConfig from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
    RunConfig rc;
    const json synth_keys = synth_config_to_json(SynthConfig{});
    try {
      for (const auto& [key, v] : j.items()) {
        if (key == "coverage_threshold") rc.model.coverage_threshold = v.get<double>();
        else if (key == "c") rc.model.c = v.get<double>();
        else if (key == "max_gap_seconds") rc.model.max_gap_seconds = detail::number_or_inf(v);
        else if (key == "qp_tol") rc.model.qp_tol = v.get<double>();
        else if (key == "max_iter") rc.model.max_iter = v.get<int>();
        else if (key == "ridge_policy") rc.model.ridge_policy = parse_ridge_policy(v.get<std::string>());
        else if (key == "ridge") rc.model.ridge = v.get<double>();
        else if (key == "seed") rc.seed = v.get<std::uint64_t>();
        else if (key == "timestamp_column") rc.schema.timestamp_column = v.get<std::string>();
        else if (key == "mode_column") rc.schema.mode_column = v.get<std::string>();
        else if (key == "target_column") rc.schema.target_column = v.get<std::string>();
        else if (key == "feature_columns") rc.schema.feature_columns = v.get<std::vector<std::string>>();
        else if (key == "output_directory") rc.output_directory = v.get<std::string>();
        else if (key == "evaluated_at") {
          if (!v.is_null()) rc.evaluated_at = v.get<std::string>();
        } else if (synth_keys.contains(key)) rc.synth[key] = v;
        else throw ConfigError("config: unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    rc.model.validate();
    rc.synth_config();  // rejects bad generator settings up front
    return rc;
  }

  SynthConfig synth_config() const {
    json j = synth;
    j["seed"] = seed;
    return synth_config_from_json(j);
  }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << content)) throw ConfigError("cannot write '" + path.string() + "'");
}

inline std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

// Flags and --set values override the config file; --set values are parsed
// as JSON and fall back to plain strings.
inline RunConfig load_run_config(const Options& opt) {
  json doc = json::object();
  if (!opt.config_path.empty()) {
    try {
      doc = json::parse(read_file(opt.config_path));
    } catch (const json::parse_error& e) {
      throw ConfigError("config '" + opt.config_path + "': " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a flat JSON object");
  }
  for (const auto& kv : opt.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string value = kv.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    doc[kv.substr(0, eq)] = v.is_discarded() ? json(value) : v;
  }
  if (!opt.out.empty()) doc["output_directory"] = opt.out;
  return RunConfig::from_json(doc);
}

struct Tagged {
  std::string tag;
  std::string path;
};

inline Tagged parse_tagged(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) return {"", s};
  if (eq == 0 || eq + 1 == s.size()) throw ConfigError("expected tag=path, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

// Input files are recorded by base name and content hash, so provenance
// does not depend on where a run happens.
struct Provenance {
  json inputs = json::array();

  void add(const std::string& role, const std::string& path, const std::string& bytes) {
    inputs.push_back({{"role", role},
                      {"name", fs::path(path).filename().string()},
                      {"sha256", sha256_hex(bytes)}});
  }
};

inline TimeSeriesDataset parse_dataset(const std::string& bytes, const std::string& path,
                                       const CsvSchema& schema) {
  std::istringstream in(bytes);
  try {
    return read_csv(in, schema);
  } catch (const Error& e) {
    throw ParseError(fs::path(path).filename().string() + ": " + e.what());
  }
}

inline ModeDatasets load_complete(const Options& opt, const RunConfig& rc, Provenance& prov) {
  ModeDatasets out;
  for (const auto& arg : opt.complete) {
    Tagged t = parse_tagged(arg);
    const std::string bytes = read_file(t.path);
    TimeSeriesDataset ds = parse_dataset(bytes, t.path, rc.schema);
    if (t.tag.empty()) {
      const auto modes = ds.modes();
      if (modes.size() != 1)
        throw ConfigError("'" + t.path + "' holds " + std::to_string(modes.size()) +
                          " modes; tag it as mode=path");
      t.tag = *modes.begin();
    }
    prov.add("complete:" + t.tag, t.path, bytes);
    if (!out.emplace(t.tag, std::move(ds)).second)
      throw ConfigError("mode '" + t.tag + "' given twice");
  }
  return out;
}

inline ModeDatasets load_incomplete(const Options& opt, const RunConfig& rc, Provenance& prov) {
  ModeDatasets out;
  for (const auto& arg : opt.incomplete) {
    Tagged t = parse_tagged(arg);
    if (t.tag.empty()) t.tag = fs::path(t.path).stem().string();
    const std::string bytes = read_file(t.path);
    prov.add("incomplete:" + t.tag, t.path, bytes);
    if (!out.emplace(t.tag, parse_dataset(bytes, t.path, rc.schema)).second)
      throw ConfigError("incomplete dataset '" + t.tag + "' given twice");
  }
  return out;
}

inline PcrModel load_model_file(const std::string& path, const std::string& role, Provenance& prov) {
  const std::string bytes = read_file(path);
  prov.add(role, path, bytes);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError("model file '" + path + "': " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw SchemaError("model file '" + path + "': " + e.what());
  }
}

// CSV artifacts stay plain; their provenance goes to a JSON sidecar.
inline void write_csv_artifact(const fs::path& path, const std::string& content,
                               const RunConfig& rc, const Provenance& prov) {
  write_file(path, content);
  json side{{"artifact", path.filename().string()},
            {"sha256", sha256_hex(content)},
            {"run_config", rc.to_json()},
            {"inputs", prov.inputs}};
  write_file(fs::path(path.string() + ".provenance.json"), dump_json(side));
}

inline int cmd_generate(const Options& opt, std::ostream& log) {
  const RunConfig rc = load_run_config(opt);
  const SynthConfig sc = rc.synth_config();
  const SynthData data = generate(sc);
  const fs::path dir = rc.output_directory;

  json files = json::array();
  auto emit = [&](const std::string& name, const std::string& content, std::size_t rows) {
    write_file(dir / name, content);
    files.push_back({{"name", name}, {"sha256", sha256_hex(content)}, {"rows", rows}});
  };
  auto csv_text = [](const TimeSeriesDataset& ds) {
    std::ostringstream ss;
    write_csv(ss, ds);
    return ss.str();
  };
  for (const auto& [mode, ds] : data.complete) emit("complete_" + mode + ".csv", csv_text(ds), ds.size());
  for (const auto& [id, ds] : data.incomplete) {
    emit("incomplete_" + id + ".csv", csv_text(ds), ds.size());
    std::ostringstream ss;
    ss << "timestamp,mode,leak\n";
    const auto& truth = data.truth.at(id);
    for (std::size_t n = 0; n < ds.size(); ++n)
      ss << format_double(ds[n].timestamp) << ',' << csv_escape(ds[n].mode) << ','
         << format_double(truth[n]) << '\n';
    emit("truth_" + id + ".csv", ss.str(), ds.size());
  }
  json manifest{{"run_config", rc.to_json()},
                {"synth_config", synth_config_to_json(sc)},
                {"files", files}};
  write_file(dir / "manifest.json", dump_json(manifest));
  log << "generated " << files.size() << " files in " << dir.string() << '\n';
  return kExitOk;
}

inline int cmd_train(const Options& opt, std::ostream& log) {
  const RunConfig rc = load_run_config(opt);
  if (opt.kind.empty()) throw ConfigError("train needs --kind mpcr|spcr|cpcr");
  const ModelKind kind = parse_model_kind(opt.kind);
  if (opt.complete.empty()) throw ConfigError("train needs at least one --complete dataset");
  if (opt.models.size() > 1) throw ConfigError("train writes a single --model");

  Provenance prov;
  const ModeDatasets complete = load_complete(opt, rc, prov);
  const ModeDatasets incomplete = load_incomplete(opt, rc, prov);

  PcrModel model;
  switch (kind) {
    case ModelKind::mpcr: model = train_mpcr(complete, rc.model); break;
    case ModelKind::spcr: model = train_spcr(complete, rc.model); break;
    case ModelKind::cpcr:
      if (incomplete.size() != 1)
        throw ConfigError("cpcr needs exactly one --incomplete dataset, got " +
                          std::to_string(incomplete.size()));
      model = train_cpcr(complete, incomplete.begin()->second, incomplete.begin()->first, rc.model);
      break;
  }
  for (const auto& in : prov.inputs)
    model.provenance[in.at("role").get<std::string>()] = in.at("sha256").get<std::string>();

  json doc = model_to_json(model);
  doc["run_config"] = rc.to_json();
  doc["inputs"] = prov.inputs;
  const fs::path dir = rc.output_directory;
  const fs::path model_path = opt.models.empty() ? dir / ("model_" + to_string(kind) + ".json")
                                                 : fs::path(opt.models.front());
  write_file(model_path, dump_json(doc));
  log << "wrote " << model_path.string() << '\n';

  if (model.constraint_meta) {
    const auto& cm = *model.constraint_meta;
    json rep{{"dataset_id", cm.dataset_id},
             {"report", report_to_json(cm.report)},
             {"active_constraints", cm.active_constraints},
             {"iterations", cm.iterations},
             {"run_config", rc.to_json()},
             {"inputs", prov.inputs}};
    const fs::path rep_path = model_path.parent_path() / (model_path.stem().string() + "_constraints.json");
    write_file(rep_path, dump_json(rep));
    log << "constraint pairs: found " << cm.report.pairs_found << ", used " << cm.report.pairs_used
        << ", dropped by gap " << cm.report.pairs_dropped_gap << "; active " << cm.active_constraints
        << '\n';
  }
  return kExitOk;
}

inline int cmd_predict(const Options& opt, std::ostream& log) {
  const RunConfig rc = load_run_config(opt);
  if (opt.models.size() != 1) throw ConfigError("predict needs exactly one --model");
  if (opt.complete.size() + opt.incomplete.size() != 1)
    throw ConfigError("predict needs exactly one --complete or --incomplete dataset");

  Provenance prov;
  const Tagged mt = parse_tagged(opt.models.front());
  const PcrModel model = load_model_file(mt.path, "model", prov);
  const ModeDatasets data = opt.complete.empty() ? load_incomplete(opt, rc, prov)
                                                 : load_complete(opt, rc, prov);
  const auto& [tag, ds] = *data.begin();
  if (!ds.empty() && ds.feature_names() != model.feature_names)
    throw DimensionError("dataset columns do not match the model's features");

  std::ostringstream ss;
  write_predictions(ss, predict(model, ds));
  const std::string name = mt.tag.empty() ? fs::path(mt.path).stem().string() : mt.tag;
  const fs::path out = fs::path(rc.output_directory).extension() == ".csv"
                           ? fs::path(rc.output_directory)
                           : fs::path(rc.output_directory) / ("predictions_" + name + "_" + tag + ".csv");
  write_csv_artifact(out, ss.str(), rc, prov);
  log << "wrote " << out.string() << " (" << ds.size() << " rows)\n";
  return kExitOk;
}

inline int cmd_evaluate(const Options& opt, std::ostream& log) {
  const RunConfig rc = load_run_config(opt);
  if (opt.models.empty()) throw ConfigError("evaluate needs at least one --model");
  if (opt.complete.empty()) throw ConfigError("evaluate needs the --complete datasets");

  Provenance prov;
  std::vector<NamedModel> models;
  for (const auto& arg : opt.models) {
    const Tagged t = parse_tagged(arg);
    const std::string name = t.tag.empty() ? fs::path(t.path).stem().string() : t.tag;
    for (const auto& nm : models)
      if (nm.name == name) throw ConfigError("model name '" + name + "' given twice");
    models.push_back({name, load_model_file(t.path, "model:" + name, prov)});
  }
  const ModeDatasets complete = load_complete(opt, rc, prov);
  const ModeDatasets incomplete = load_incomplete(opt, rc, prov);

  const auto reports =
      run_test_suite(models, complete, incomplete, {rc.model.max_gap_seconds, rc.evaluated_at});
  const fs::path dir = rc.output_directory;

  json rows = json::array();
  for (const auto& r : reports) rows.push_back(report_to_json(r));
  write_file(dir / "report.json",
             dump_json(json{{"run_config", rc.to_json()}, {"inputs", prov.inputs}, {"models", rows}}));

  std::ostringstream table, metrics;
  write_report_table(table, reports);
  write_report_metrics(metrics, reports);
  write_csv_artifact(dir / "report.csv", table.str(), rc, prov);
  write_csv_artifact(dir / "metrics.csv", metrics.str(), rc, prov);

  for (const auto& nm : models)
    for (const auto& [id, ds] : incomplete) {
      std::ostringstream ss;
      write_predictions(ss, predict(nm.model, ds));
      write_csv_artifact(dir / ("predictions_" + nm.name + "_" + id + ".csv"), ss.str(), rc, prov);
    }
  log << table.str();
  return kExitOk;
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UnknownModeError*>(&e) || dynamic_cast<const DimensionError*>(&e))
    return kExitMismatch;
  if (dynamic_cast<const SolverError*>(&e) || dynamic_cast<const SingularError*>(&e) ||
      dynamic_cast<const ConditioningError*>(&e))
    return kExitSolver;
  if (dynamic_cast<const Error*>(&e) || dynamic_cast<const json::exception*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e))
    return kExitInput;
  return kExitInternal;
}

inline int run(const Options& opt, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  try {
    if (opt.command == "generate") return cmd_generate(opt, log);
    if (opt.command == "train") return cmd_train(opt, log);
    if (opt.command == "predict") return cmd_predict(opt, log);
    if (opt.command == "evaluate") return cmd_evaluate(opt, log);
    err << "error: unknown command '" << opt.command << "'\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace cpcr::cli
