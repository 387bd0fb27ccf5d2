#include "eam/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "eam/checkpoint.hpp"
#include "eam/dataset_io.hpp"
#include "eam/gradcheck_suite.hpp"
#include "eam/training.hpp"

namespace eam::cli {
namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double parse_ratio(const std::string& ratio) {
  const auto colon = ratio.find(':');
  if (colon == std::string::npos) throw ValueError("ratio must look like A:B, got '" + ratio + "'");
  const double a = std::stod(ratio.substr(0, colon));
  const double b = std::stod(ratio.substr(colon + 1));
  if (a <= 0 || b <= 0) throw ValueError("ratio parts must be positive, got '" + ratio + "'");
  return a / (a + b);
}

std::vector<SceneSample<real>> make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.synthetic.empty() == spec.data_dir.empty())
    throw ValueError("exactly one of --synthetic or --data is required");
  if (!spec.data_dir.empty()) return load_dataset<real>(spec.data_dir);
  int k = 0, n = 0, extent = 0;
  if (std::sscanf(spec.synthetic.c_str(), "%d,%d,%d", &k, &n, &extent) != 3)
    throw ValueError("--synthetic expects K,N,EXT, got '" + spec.synthetic + "'");
  return synth_dataset<real>(k, n, extent, seed);
}

ModelConfig model_config_for(const std::vector<SceneSample<real>>& data,
                             const std::string& strategy, const std::string& variant,
                             bool no_conv_features, int c_prime, int mlp_reduction,
                             int aspp_width, int aspp_out) {
  ModelConfig mc;
  mc.strategy = parse_strategy(strategy);
  mc.variant = parse_variant(variant);
  mc.include_conv_features = !no_conv_features;
  mc.c_prime = c_prime;
  mc.mlp_reduction = mlp_reduction;
  mc.aspp_branch_width = aspp_width;
  mc.aspp_out = aspp_out;
  mc.classes = count_classes(dataset_labels(data));
  mc.input_extent = static_cast<int>(data.front().image.shape().h);
  return mc;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path + ": cannot open for writing");
  f << text;
}

void print_clamp_log(const std::vector<DilationClamp>& log, std::ostream& out) {
  for (const auto& c : log)
    out << "note: " << c.where << " dilation " << c.requested << " clamped to " << c.used
        << " on a " << c.h << "x" << c.w << " map\n";
}

}  // namespace

int cmd_train(const TrainOptions& opts, std::ostream& out) {
  if (opts.out_dir.empty()) throw ValueError("--out is required");
  const auto dataset = make_dataset(opts.data, opts.seed);
  const double fraction = parse_ratio(opts.ratio);
  const ModelConfig mc =
      model_config_for(dataset, opts.strategy, opts.variant, opts.no_conv_features, opts.c_prime,
                       opts.mlp_reduction, opts.aspp_width, opts.aspp_out);
  TrainConfig tc;
  tc.lr = opts.lr;
  tc.weight_decay = opts.weight_decay;
  tc.batch_size = opts.batch;
  tc.epochs = opts.epochs;
  tc.seed = opts.seed;
  tc.augment = !opts.no_augment;

  TrainRun<real> run = train(dataset, mc, tc, fraction);

  fs::create_directories(opts.out_dir);
  save_checkpoint(*run.model, (fs::path(opts.out_dir) / "model.eamc").string());

  std::ostringstream metrics;
  metrics << "split,ratio,strategy,variant,accuracy\n";
  metrics << "0," << opts.ratio << "," << opts.strategy << "," << opts.variant << ","
          << fmt(run.result.test_metrics.overall_accuracy) << "\n";
  metrics << "mean±std," << opts.ratio << "," << opts.strategy << "," << opts.variant << ","
          << fmt(run.result.test_metrics.overall_accuracy) << "±" << fmt(0.0) << "\n";
  write_text((fs::path(opts.out_dir) / "metrics.csv").string(), metrics.str());

  std::ostringstream curves;
  curves << "epoch,train_loss,val_loss,train_acc,val_acc\n";
  for (const auto& st : run.result.curves)
    curves << st.epoch << "," << fmt(st.train_loss) << "," << fmt(st.val_loss) << ","
           << fmt(st.train_acc) << "," << fmt(st.val_acc) << "\n";
  write_text((fs::path(opts.out_dir) / "curves.csv").string(), curves.str());

  print_clamp_log(run.model->dilation_log(), out);
  out << metrics.str();
  out << "train_accuracy," << fmt(run.result.final_train_accuracy) << "\n";
  return 0;
}

int cmd_ablate(const AblateOptions& opts, std::ostream& out) {
  if (opts.out_dir.empty()) throw ValueError("--out is required");
  const auto dataset = make_dataset(opts.data, opts.seed);
  const double fraction = parse_ratio(opts.ratio);
  const int classes = count_classes(dataset_labels(dataset));

  std::vector<std::string> strategies;
  if (opts.strategies.empty()) {
    strategies = {"gap", "aspp+gap", "eam+gap", "eam+aspp+gap"};
  } else {
    std::istringstream is(opts.strategies);
    std::string tok;
    while (std::getline(is, tok, ',')) strategies.push_back(tok);
  }
  for (const auto& s : strategies) parse_strategy(s);  // validate early

  std::ostringstream csv;
  csv << "strategy,variant,conv_features,acc1,acc2,acc3,acc4,acc5,mean,std\n";
  double gap_mean = -1.0, full_mean = -1.0;
  for (const std::string& strategy : strategies) {
    for (const std::string variant : {"icbam", "cbam"}) {
      for (const bool with_conv : {true, false}) {
        const ModelConfig mc = model_config_for(dataset, strategy, variant, !with_conv,
                                                opts.c_prime, 16, 0, 0);
        TrainConfig tc;
        tc.lr = opts.lr;
        tc.weight_decay = opts.weight_decay;
        tc.batch_size = opts.batch;
        tc.epochs = opts.epochs;
        tc.augment = !opts.no_augment;
        Metrics m = five_split_protocol<real>(
            dataset, fraction, classes,
            [&](const std::vector<SceneSample<real>>& train_set,
                const std::vector<SceneSample<real>>& test_set,
                std::uint64_t split_seed) {
              EamClassifier<real> model(mc, split_seed);
              TrainConfig stc = tc;
              stc.seed = split_seed;
              TrainResult<real> r = train_model(model, train_set, test_set, stc);
              return SplitOutcome<real>{r.test_metrics.overall_accuracy,
                                        r.test_metrics.confusion};
            },
            opts.seed, opts.jobs);
        csv << strategy << "," << variant << "," << (with_conv ? "with" : "without");
        for (double a : m.per_split) csv << "," << fmt(a);
        csv << "," << fmt(m.mean) << "," << fmt(m.stddev) << "\n";
        if (strategy == "gap" && variant == "icbam" && with_conv) gap_mean = m.mean;
        if (strategy == "eam+aspp+gap" && variant == "icbam" && with_conv) full_mean = m.mean;
      }
    }
  }
  fs::create_directories(opts.out_dir);
  write_text((fs::path(opts.out_dir) / "ablation.csv").string(), csv.str());
  out << csv.str();
  if (gap_mean >= 0.0 && full_mean >= 0.0)
    out << "trend: eam+aspp+gap mean " << fmt(full_mean) << " vs gap mean " << fmt(gap_mean)
        << (full_mean >= gap_mean ? " (>=)" : " (<)") << "\n";
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out) {
  const auto reports = gradcheck_suite::run(opts.h, opts.tol_rel, opts.tol_abs, opts.op);
  bool all_pass = true;
  out << "op,max_rel_err,max_abs_err,coords,result\n";
  for (const auto& r : reports) {
    out << r.op_name << "," << r.max_rel_err << "," << r.max_abs_err << "," << r.coords_checked
        << "," << (r.pass ? "PASS" : "FAIL") << "\n";
    all_pass = all_pass && r.pass;
  }
  out << (all_pass ? "gradcheck: all ops PASS" : "gradcheck: FAILURES present") << "\n";
  return all_pass ? 0 : 1;
}

int cmd_gradcam(const GradcamOptions& opts, std::ostream& out) {
  auto model = load_checkpoint<real>(opts.model_path, opts.expect_variant);
  const Tensor4<real> image = tensor_from_image<real>(read_ppm(opts.image_path));
  const int extent = model->config().input_extent;
  if (image.shape().h != extent || image.shape().w != extent)
    throw ShapeError("height", "image extent " + image.shape().str() +
                                   " does not match model extent " + std::to_string(extent));

  MatX<real> heat = grad_cam(*model, image, opts.class_index, opts.level);

  fs::create_directories(opts.out_dir);
  ImageU8 pgm;
  pgm.h = heat.rows();
  pgm.w = heat.cols();
  pgm.channels = 1;
  pgm.data.resize(static_cast<size_t>(pgm.h) * pgm.w);
  for (Index y = 0; y < pgm.h; ++y)
    for (Index x = 0; x < pgm.w; ++x)
      pgm.data[static_cast<size_t>(y * pgm.w + x)] =
          static_cast<std::uint8_t>(std::lround(static_cast<double>(heat(y, x)) * 255.0));
  write_pgm((fs::path(opts.out_dir) / "heatmap.pgm").string(), pgm);

  ImageU8 overlay = image_from_tensor(image);
  for (Index y = 0; y < pgm.h; ++y)
    for (Index x = 0; x < pgm.w; ++x) {
      const size_t base = static_cast<size_t>(y * pgm.w + x) * 3;
      overlay.data[base] = static_cast<std::uint8_t>(
          std::lround(0.5 * overlay.data[base] + 0.5 * pgm.data[static_cast<size_t>(y * pgm.w + x)]));
      overlay.data[base + 1] = static_cast<std::uint8_t>(std::lround(0.5 * overlay.data[base + 1]));
      overlay.data[base + 2] = static_cast<std::uint8_t>(std::lround(0.5 * overlay.data[base + 2]));
    }
  write_ppm((fs::path(opts.out_dir) / "overlay.ppm").string(), overlay);

  out << "wrote " << (fs::path(opts.out_dir) / "heatmap.pgm").string() << " and "
      << (fs::path(opts.out_dir) / "overlay.ppm").string() << "\n";
  return 0;
}

int cmd_eval(const EvalOptions& opts, std::ostream& out) {
  auto model = load_checkpoint<real>(opts.model_path, opts.expect_variant);
  const auto dataset = make_dataset(opts.data, opts.seed);
  const Metrics m = evaluate_model(*model, dataset);
  std::ostringstream text;
  text << "accuracy," << fmt(m.overall_accuracy) << "\n";
  for (Index r = 0; r < m.confusion.rows(); ++r) {
    text << "confusion";
    for (Index c = 0; c < m.confusion.cols(); ++c) text << "," << m.confusion(r, c);
    text << "\n";
  }
  if (!opts.out_csv.empty()) write_text(opts.out_csv, text.str());
  out << text.str();
  return 0;
}

}  // namespace eam::cli
