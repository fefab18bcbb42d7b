// stentgcn: partially-deployed stent segment shape instantiation from one 2D projection.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "stentgcn/commands.hpp"

namespace {

using namespace stentgcn;

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--seed", args.seed, "seed for every random draw (generated and printed if omitted)");
  cmd->add_option("--config", args.config, "configuration file");
  cmd->add_option("--out", args.out, "output path")->required();
  cmd->add_flag("--quiet", args.quiet, "suppress progress output");
}

void add_train_overrides(CLI::App* cmd, TrainOverrides& o) {
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr", o.learning_rate, "learning rate");
  cmd->add_option("--batch", o.batch_size, "mini-batch size");
  cmd->add_flag("--no-augment", o.no_augment, "train on the raw samples only");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partially-deployed stent segment shape instantiation"};
  app.require_subcommand(1);

  CommonArgs common;
  TrainOverrides overrides;
  std::filesystem::path dataset;
  std::filesystem::path model;
  InstantiateArgs inst;
  bool no_shapes = false;

  auto* simulate = app.add_subcommand("simulate", "simulate a synthetic dataset from a family configuration");
  add_common(simulate, common);

  auto* train = app.add_subcommand("train", "train the GCN on a dataset");
  add_common(train, common);
  train->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  add_train_overrides(train, overrides);

  auto* predict = app.add_subcommand("predict", "predict partially-deployed marker references");
  add_common(predict, common);
  predict->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  predict->add_option("--model", model, "checkpoint")->required()->check(CLI::ExistingFile);

  auto* instantiate = app.add_subcommand("instantiate", "instantiate markers and segment meshes (OBJ)");
  add_common(instantiate, common);
  instantiate->add_option("--dataset", inst.dataset, "dataset file")->required()->check(CLI::ExistingFile);
  instantiate->add_option("--model", inst.model, "checkpoint")->required()->check(CLI::ExistingFile);
  instantiate->add_option("--projection", inst.projection, "3x4 projection matrix file")->check(CLI::ExistingFile);
  instantiate->add_option("--index", inst.index, "record index");
  instantiate->add_flag("--ideal", inst.ideal, "use 2D markers projected from ground truth");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
  add_common(evaluate, common);
  evaluate->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--model", model, "checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_flag("--no-shapes", no_shapes, "skip mesh and angular metrics");

  auto* crossval = app.add_subcommand("crossval", "leave-one-family-out cross-validation");
  add_common(crossval, common);
  crossval->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  add_train_overrides(crossval, overrides);
  crossval->add_flag("--no-shapes", no_shapes, "skip mesh and angular metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::Usage);
  }

  std::ostringstream sink;
  std::ostream& log = common.quiet ? static_cast<std::ostream&>(sink) : std::cout;
  try {
    if (simulate->parsed()) {
      cmd_simulate(common, log);
    } else if (train->parsed()) {
      cmd_train(common, dataset, overrides, log);
    } else if (predict->parsed()) {
      cmd_predict(common, dataset, model, log);
    } else if (instantiate->parsed()) {
      cmd_instantiate(common, inst, log);
    } else if (evaluate->parsed()) {
      cmd_evaluate(common, dataset, model, !no_shapes, log);
    } else if (crossval->parsed()) {
      cmd_crossval(common, dataset, overrides, !no_shapes, log);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e.kind()));
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: Io: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Io);
  }
  return 0;
}
