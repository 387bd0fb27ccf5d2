// Command-line front end: train, eval, ablate, gradcheck, gradcam.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <iostream>

#include <CLI11.hpp>

#include "eam/commands.hpp"
#include "eam/tensor.hpp"

namespace {

void add_dataset_flags(CLI::App* cmd, eam::cli::DatasetSpec& spec) {
  cmd->add_option("--synthetic", spec.synthetic,
                  "Generate a synthetic dataset: K,N,EXT (classes, per-class count, extent)");
  cmd->add_option("--data", spec.data_dir, "Dataset directory (one PPM subdirectory per class)");
}

void add_config_file(CLI::App* cmd) {
  cmd->set_config("--config", "", "key=value config file ('#' comments); flags take precedence");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-enhanced multi-level scene classifier"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);

  eam::cli::TrainOptions train;
  CLI::App* t = app.add_subcommand("train", "Train a model and write checkpoint + CSVs");
  add_dataset_flags(t, train.data);
  add_config_file(t);
  t->add_option("--ratio", train.ratio, "train:test ratio, e.g. 80:20");
  t->add_option("--strategy", train.strategy, "gap | aspp+gap | eam+gap | eam+aspp+gap");
  t->add_option("--variant", train.variant, "icbam | cbam");
  t->add_flag("--no-conv-features", train.no_conv_features,
              "Drop the convolutional-feature concatenation");
  t->add_option("--cprime", train.c_prime, "Reduced channel count C'");
  t->add_option("--mlp-reduction", train.mlp_reduction, "Channel-MLP reduction ratio");
  t->add_option("--aspp-width", train.aspp_width, "ASPP branch width (0 = 2C')");
  t->add_option("--aspp-out", train.aspp_out, "ASPP output channels (0 = 2C')");
  t->add_option("--lr", train.lr, "Learning rate");
  t->add_option("--wd", train.weight_decay, "Weight decay");
  t->add_option("--batch", train.batch, "Batch size");
  t->add_option("--epochs", train.epochs, "Epochs");
  t->add_option("--seed", train.seed, "RNG seed");
  t->add_flag("--no-augment", train.no_augment, "Disable flip/crop augmentation");
  t->add_option("--out", train.out_dir, "Output directory")->required();

  eam::cli::AblateOptions ablate;
  CLI::App* a = app.add_subcommand("ablate", "Strategy/variant/conv-features grid, five splits each");
  add_dataset_flags(a, ablate.data);
  add_config_file(a);
  a->add_option("--ratio", ablate.ratio, "train:test ratio per split");
  a->add_option("--strategies", ablate.strategies, "Comma-separated strategy filter");
  a->add_option("--cprime", ablate.c_prime, "Reduced channel count C'");
  a->add_option("--lr", ablate.lr, "Learning rate");
  a->add_option("--wd", ablate.weight_decay, "Weight decay");
  a->add_option("--batch", ablate.batch, "Batch size");
  a->add_option("--epochs", ablate.epochs, "Epochs per split");
  a->add_option("--seed", ablate.seed, "Base RNG seed");
  a->add_flag("--no-augment", ablate.no_augment, "Disable augmentation");
  a->add_option("--jobs", ablate.jobs, "Parallel splits");
  a->add_option("--out", ablate.out_dir, "Output directory")->required();

  eam::cli::GradcheckOptions gradcheck;
  CLI::App* g = app.add_subcommand("gradcheck", "64-bit finite-difference gradient certification");
  g->add_option("--h", gradcheck.h, "Central-difference step");
  g->add_option("--tol", gradcheck.tol_rel, "Relative tolerance");
  g->add_option("--tol-abs", gradcheck.tol_abs, "Absolute tolerance");
  g->add_option("--op", gradcheck.op, "Check a single op by name");

  eam::cli::GradcamOptions gradcam;
  CLI::App* c = app.add_subcommand("gradcam", "Write Grad-CAM heatmap.pgm and overlay.ppm");
  c->add_option("--model", gradcam.model_path, "EAMC checkpoint")->required();
  c->add_option("--image", gradcam.image_path, "Input PPM image")->required();
  c->add_option("--class", gradcam.class_index, "Class index")->required();
  c->add_option("--level", gradcam.level, "Target level 2..5")
      ->check(CLI::Range(2, 5));
  c->add_option("--out", gradcam.out_dir, "Output directory");
  c->add_option("--variant", gradcam.expect_variant, "Require this attention variant");

  eam::cli::EvalOptions eval;
  CLI::App* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--model", eval.model_path, "EAMC checkpoint")->required();
  add_dataset_flags(e, eval.data);
  e->add_option("--seed", eval.seed, "Seed for --synthetic data");
  e->add_option("--variant", eval.expect_variant, "Require this attention variant");
  e->add_option("--out", eval.out_csv, "Write metrics CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  try {
    if (t->parsed()) return eam::cli::cmd_train(train, std::cout);
    if (a->parsed()) return eam::cli::cmd_ablate(ablate, std::cout);
    if (g->parsed()) return eam::cli::cmd_gradcheck(gradcheck, std::cout);
    if (c->parsed()) return eam::cli::cmd_gradcam(gradcam, std::cout);
    if (e->parsed()) return eam::cli::cmd_eval(eval, std::cout);
  } catch (const eam::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
