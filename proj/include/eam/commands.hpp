#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace eam::cli {

/// Exactly one of `synthetic` ("K,N,EXT") or `data_dir` must be set.
struct DatasetSpec {
  std::string synthetic;
  std::string data_dir;
};

struct TrainOptions {
  DatasetSpec data;
  std::string ratio = "80:20";
  std::string strategy = "eam+aspp+gap";
  std::string variant = "icbam";
  bool no_conv_features = false;
  int c_prime = 16;
  int mlp_reduction = 16;
  int aspp_width = 0;
  int aspp_out = 0;
  double lr = 3e-3;
  double weight_decay = 1e-4;
  int batch = 16;
  int epochs = 50;
  std::uint64_t seed = 0;
  bool no_augment = false;
  std::string out_dir;
};

struct AblateOptions {
  DatasetSpec data;
  std::string ratio = "50:50";
  std::string strategies;  // comma-separated filter; empty = all four
  std::string variant = "icbam";
  int c_prime = 16;
  double lr = 3e-3;
  double weight_decay = 1e-4;
  int batch = 16;
  int epochs = 50;
  std::uint64_t seed = 0;
  bool no_augment = false;
  int jobs = 1;
  std::string out_dir;
};

struct GradcheckOptions {
  double h = 1e-4;
  double tol_rel = 1e-4;
  double tol_abs = 1e-6;
  std::string op;  // empty = whole suite
};

struct GradcamOptions {
  std::string model_path;
  std::string image_path;
  int class_index = 0;
  int level = 5;
  std::string out_dir = ".";
  std::string expect_variant;
};

struct EvalOptions {
  std::string model_path;
  DatasetSpec data;
  std::uint64_t seed = 0;
  std::string expect_variant;
  std::string out_csv;
};

int cmd_train(const TrainOptions& opts, std::ostream& out);
int cmd_ablate(const AblateOptions& opts, std::ostream& out);
int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out);
int cmd_gradcam(const GradcamOptions& opts, std::ostream& out);
int cmd_eval(const EvalOptions& opts, std::ostream& out);

}  // namespace eam::cli
