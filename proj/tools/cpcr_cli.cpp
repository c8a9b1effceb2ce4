#include <CLI11.hpp>

#include "cli.hpp"

int main(int argc, char** argv) {
  using cpcr::cli::Options;
  CLI::App app{"Constrained principal component regression soft sensors"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Flat JSON run config");
    sub->add_option("--out", opt.out, "Output directory (predict: directory or .csv file)");
    sub->add_option("--set", opt.sets, "Override a config key: key=value (repeatable)");
  };
  auto data = [&](CLI::App* sub) {
    sub->add_option("--complete", opt.complete, "Labelled dataset, [mode=]path (repeatable)");
    sub->add_option("--incomplete", opt.incomplete, "Unlabelled dataset, [id=]path (repeatable)");
  };

  CLI::App* gen = app.add_subcommand("generate", "Write the synthetic benchmark datasets");
  common(gen);

  CLI::App* train = app.add_subcommand("train", "Fit an mpcr, spcr or cpcr model");
  common(train);
  data(train);
  train->add_option("--kind", opt.kind, "mpcr | spcr | cpcr")->required();
  train->add_option("--model", opt.models, "Model output path (default <out>/model_<kind>.json)");

  CLI::App* pred = app.add_subcommand("predict", "Write plot-ready predictions for one dataset");
  common(pred);
  data(pred);
  pred->add_option("--model", opt.models, "Model file, [name=]path")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "Compare models on training fit and transition jumps");
  common(eval);
  data(eval);
  eval->add_option("--model", opt.models, "Model file, [name=]path (repeatable)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cpcr::cli::kExitInput;
  }
  opt.command = app.get_subcommands().front()->get_name();
  return cpcr::cli::run(opt);
}
