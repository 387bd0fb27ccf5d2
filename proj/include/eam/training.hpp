#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "eam/multiscale.hpp"

namespace eam {

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// One labelled image; values in [0,1]. Synthetic blob/ring classes carry a
/// ground-truth mask used by the Grad-CAM overlap checks.
template <class S>
struct SceneSample {
  Tensor4<S> image;  // (1, 3, h, w)
  int label = 0;
  std::optional<MaskMatrix> mask;
};

struct TrainConfig {
  double lr = 3e-3;
  double weight_decay = 1e-4;
  int batch_size = 16;
  int epochs = 50;
  std::uint64_t seed = 0;
  bool augment = true;
  double val_fraction = 0.1;
};

/// Evaluation results; per_split/mean/stddev are filled by the five-split
/// protocol (population standard deviation).
struct Metrics {
  Eigen::MatrixXi confusion;  // rows = truth
  double overall_accuracy = 0.0;
  std::vector<double> per_split;
  double mean = 0.0;
  double stddev = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names = {"stripes_h", "stripes_v",  "checker",
                                                 "blob_center", "blob_corner", "gradient",
                                                 "ring",      "texture"};
  return names;
}

namespace detail {

template <class S>
void apply_class_tint(Tensor4<S>& img, int cls) {
  static constexpr double gains[8][3] = {
      {1.0, 0.8, 0.6}, {0.6, 1.0, 0.8}, {0.8, 0.6, 1.0}, {1.0, 0.9, 0.5},
      {0.5, 1.0, 0.9}, {0.9, 0.5, 1.0}, {1.0, 0.6, 1.0}, {0.7, 0.7, 0.7}};
  const Shape4& s = img.shape();
  for (int ch = 0; ch < 3; ++ch) {
    Eigen::Map<ArrX<S>> pl(img.plane(0, ch), s.h * s.w);
    pl = S(0.5) + static_cast<S>(gains[cls][ch]) * (pl - S(0.5));
  }
}

}  // namespace detail

/// Procedurally generated scenes with distinct multi-scale structure.
/// Deterministic for a fixed seed; classes are drawn in order from
/// synth_class_names(). Blob and ring classes carry masks.
template <class S>
std::vector<SceneSample<S>> synth_dataset(int k_classes, int n_per_class, Index extent,
                                          std::uint64_t seed) {
  if (k_classes < 2 || k_classes > 8)
    throw ValueError("synth_dataset: class count " + std::to_string(k_classes) +
                     " outside [2,8]");
  if (extent % 32 != 0)
    throw ShapeError("height", "extent " + std::to_string(extent) + " not divisible by 32");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const Index e = extent;
  const double el = static_cast<double>(e);

  std::vector<SceneSample<S>> out;
  out.reserve(static_cast<size_t>(k_classes) * n_per_class);
  for (int cls = 0; cls < k_classes; ++cls) {
    for (int si = 0; si < n_per_class; ++si) {
      SceneSample<S> sample;
      sample.label = cls;
      Tensor4<S> img({1, 3, e, e});
      auto set_all = [&](auto&& f) {
        for (Index y = 0; y < e; ++y)
          for (Index x = 0; x < e; ++x) {
            const S v = static_cast<S>(f(y, x));
            for (int ch = 0; ch < 3; ++ch) img(0, ch, y, x) = v;
          }
      };
      switch (cls) {
        case 0: {  // horizontal stripes
          const double period = el / 8.0;
          const int phase = std::uniform_int_distribution<int>(0, 3)(rng);
          set_all([&](Index y, Index) {
            return 0.5 + 0.45 * std::sin(2.0 * M_PI * (y + phase) / period);
          });
          break;
        }
        case 1: {  // vertical stripes
          const double period = el / 8.0;
          const int phase = std::uniform_int_distribution<int>(0, 3)(rng);
          set_all([&](Index, Index x) {
            return 0.5 + 0.45 * std::sin(2.0 * M_PI * (x + phase) / period);
          });
          break;
        }
        case 2: {  // checkerboard
          const Index cell = e / 8;
          const Index sx = std::uniform_int_distribution<int>(0, 2)(rng);
          const Index sy = std::uniform_int_distribution<int>(0, 2)(rng);
          set_all([&](Index y, Index x) {
            return (((x + sx) / cell + (y + sy) / cell) % 2 == 0) ? 0.85 : 0.15;
          });
          break;
        }
        case 3: {  // centered blob, with mask
          const double cx = el / 2.0 + (unit(rng) - 0.5) * el / 8.0;
          const double cy = el / 2.0 + (unit(rng) - 0.5) * el / 8.0;
          const double radius = el / 4.0 + (unit(rng) - 0.5) * el / 16.0;
          const double sg = radius / 1.5;
          MaskMatrix mask = MaskMatrix::Zero(e, e);
          set_all([&](Index y, Index x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if (d2 <= radius * radius) mask(y, x) = 1;
            return 0.1 + 0.8 * std::exp(-d2 / (2.0 * sg * sg));
          });
          sample.mask = std::move(mask);
          break;
        }
        case 4: {  // corner blob, with mask
          const int corner = std::uniform_int_distribution<int>(0, 3)(rng);
          const double off = el / 5.0;
          const double cx = (corner & 1) ? el - 1.0 - off : off;
          const double cy = (corner & 2) ? el - 1.0 - off : off;
          const double radius = el / 5.0;
          const double sg = radius / 1.5;
          MaskMatrix mask = MaskMatrix::Zero(e, e);
          set_all([&](Index y, Index x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if (d2 <= radius * radius) mask(y, x) = 1;
            return 0.1 + 0.8 * std::exp(-d2 / (2.0 * sg * sg));
          });
          sample.mask = std::move(mask);
          break;
        }
        case 5: {  // diagonal gradient
          const bool up = unit(rng) < 0.5;
          set_all([&](Index y, Index x) {
            const double t = static_cast<double>(x + y) / (2.0 * (el - 1.0));
            return up ? 0.1 + 0.8 * t : 0.9 - 0.8 * t;
          });
          break;
        }
        case 6: {  // ring, with mask
          const double cx = (el - 1.0) / 2.0;
          const double r0 = el / 4.0 + (unit(rng) - 0.5) * el / 16.0;
          const double sg = el / 20.0;
          const double band = el / 16.0;
          MaskMatrix mask = MaskMatrix::Zero(e, e);
          set_all([&](Index y, Index x) {
            const double d = std::sqrt((x - cx) * (x - cx) + (y - cx) * (y - cx));
            if (std::abs(d - r0) <= band) mask(y, x) = 1;
            return 0.1 + 0.8 * std::exp(-(d - r0) * (d - r0) / (2.0 * sg * sg));
          });
          sample.mask = std::move(mask);
          break;
        }
        default: {  // blocky noise texture
          const Index cell = e / 8;
          MatX<double> cells(8, 8);
          for (Index cy = 0; cy < 8; ++cy)
            for (Index cx = 0; cx < 8; ++cx) cells(cy, cx) = 0.2 + 0.6 * unit(rng);
          set_all([&](Index y, Index x) { return cells(y / cell, x / cell); });
          break;
        }
      }
      detail::apply_class_tint(img, cls);
      for (Index i = 0; i < img.size(); ++i) {
        const double v = static_cast<double>(img.data()[i]) + noise(rng);
        img.data()[i] = static_cast<S>(std::clamp(v, 0.0, 1.0));
      }
      sample.image = std::move(img);
      out.push_back(std::move(sample));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

template <class S>
SceneSample<S> hflip(const SceneSample<S>& in) {
  SceneSample<S> out;
  out.label = in.label;
  const Shape4& s = in.image.shape();
  out.image = Tensor4<S>(s);
  for (int ch = 0; ch < 3; ++ch)
    for (Index y = 0; y < s.h; ++y)
      for (Index x = 0; x < s.w; ++x) out.image(0, ch, y, x) = in.image(0, ch, y, s.w - 1 - x);
  if (in.mask) {
    MaskMatrix m(in.mask->rows(), in.mask->cols());
    for (Index y = 0; y < m.rows(); ++y)
      for (Index x = 0; x < m.cols(); ++x) m(y, x) = (*in.mask)(y, m.cols() - 1 - x);
    out.mask = std::move(m);
  }
  return out;
}

/// Crops a (crop x crop) window at (oy, ox) and resizes back to the original
/// extent with nearest-neighbor sampling. The mask follows the image.
template <class S>
SceneSample<S> crop_resize(const SceneSample<S>& in, Index oy, Index ox, Index crop) {
  const Shape4& s = in.image.shape();
  if (crop < 1 || oy < 0 || ox < 0 || oy + crop > s.h || ox + crop > s.w)
    throw ValueError("crop_resize: window outside image");
  SceneSample<S> out;
  out.label = in.label;
  out.image = Tensor4<S>(s);
  for (Index y = 0; y < s.h; ++y) {
    const Index sy = oy + y * crop / s.h;
    for (Index x = 0; x < s.w; ++x) {
      const Index sx = ox + x * crop / s.w;
      for (int ch = 0; ch < 3; ++ch) out.image(0, ch, y, x) = in.image(0, ch, sy, sx);
    }
  }
  if (in.mask) {
    MaskMatrix m(s.h, s.w);
    for (Index y = 0; y < s.h; ++y) {
      const Index sy = oy + y * crop / s.h;
      for (Index x = 0; x < s.w; ++x) m(y, x) = (*in.mask)(sy, ox + x * crop / s.w);
    }
    out.mask = std::move(m);
  }
  return out;
}

/// Training-time augmentation: horizontal flip with probability 1/2, then a
/// random crop to 87.5% of the extent resized back. Labels are untouched.
template <class S>
SceneSample<S> augment(const SceneSample<S>& in, std::mt19937_64& rng) {
  const Shape4& s = in.image.shape();
  const bool flip = std::bernoulli_distribution(0.5)(rng);
  SceneSample<S> mid = flip ? hflip(in) : in;
  const Index crop = (7 * s.h) / 8;
  const Index oy = std::uniform_int_distribution<Index>(0, s.h - crop)(rng);
  const Index ox = std::uniform_int_distribution<Index>(0, s.w - crop)(rng);
  return crop_resize(mid, oy, ox, crop);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Bias-corrected Adam with coupled L2 weight decay (grad += wd * param
/// before the moment update). Throws on non-finite gradients, naming the
/// parameter.
template <class S>
void adam_step(ParamStore<S>& store, double lr, double weight_decay, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
  const std::int64_t t = ++store.step;
  const S b1 = static_cast<S>(beta1);
  const S b2 = static_cast<S>(beta2);
  const S corr1 = static_cast<S>(1.0 - std::pow(beta1, static_cast<double>(t)));
  const S corr2 = static_cast<S>(1.0 - std::pow(beta2, static_cast<double>(t)));
  for (auto& e : store.entries()) {
    if (e.var->grad.empty()) e.var->grad = Tensor4<S>::zeros_like(e.var->value);
    if (!e.var->grad.all_finite())
      throw Error("adam_step: non-finite gradient for parameter '" + e.name + "'");
    ArrX<S> g = e.var->grad.array() + static_cast<S>(weight_decay) * e.var->value.array();
    e.m.array() = b1 * e.m.array() + (S(1) - b1) * g;
    e.v.array() = b2 * e.v.array() + (S(1) - b2) * g * g;
    e.var->value.array() -= static_cast<S>(lr) * (e.m.array() / corr1) /
                            ((e.v.array() / corr2).sqrt() + static_cast<S>(eps));
  }
}

// ---------------------------------------------------------------------------
// Splits and evaluation
// ---------------------------------------------------------------------------

struct SplitIndices {
  std::vector<size_t> train;
  std::vector<size_t> test;
};

inline int count_classes(const std::vector<int>& labels) {
  int k = 0;
  for (int lb : labels) k = std::max(k, lb + 1);
  return k;
}

template <class S>
std::vector<int> dataset_labels(const std::vector<SceneSample<S>>& data) {
  std::vector<int> labels(data.size());
  for (size_t i = 0; i < data.size(); ++i) labels[i] = data[i].label;
  return labels;
}

/// Seeded stratified split; every class keeps at least one sample on each
/// side, and per-class train counts are round(fraction * class size).
template <class S>
SplitIndices stratified_split(const std::vector<SceneSample<S>>& data, double train_fraction,
                              std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ValueError("train fraction must lie strictly inside (0,1)");
  const int k = count_classes(dataset_labels(data));
  std::vector<std::vector<size_t>> per_class(static_cast<size_t>(k));
  for (size_t i = 0; i < data.size(); ++i)
    per_class[static_cast<size_t>(data[i].label)].push_back(i);

  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (int cls = 0; cls < k; ++cls) {
    auto& idx = per_class[static_cast<size_t>(cls)];
    if (idx.size() < 2)
      throw ValueError("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                       " samples; cannot stratify");
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto want = static_cast<size_t>(std::lround(train_fraction * idx.size()));
    const size_t n_train = std::clamp<size_t>(want, 1, idx.size() - 1);
    for (size_t i = 0; i < idx.size(); ++i)
      (i < n_train ? out.train : out.test).push_back(idx[i]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

template <class S>
Tensor4<S> stack_images(const std::vector<SceneSample<S>>& samples) {
  if (samples.empty()) throw ValueError("stack_images: empty batch");
  const Shape4& s0 = samples.front().image.shape();
  Tensor4<S> batch({static_cast<Index>(samples.size()), s0.c, s0.h, s0.w});
  for (size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].image.shape() == s0))
      throw ShapeError("height", "inconsistent sample extents in batch");
    std::copy(samples[i].image.data(), samples[i].image.data() + samples[i].image.size(),
              batch.data() + static_cast<Index>(i) * s0.count());
  }
  return batch;
}

/// Confusion matrix and overall accuracy of a predictor over the samples.
template <class S>
Metrics evaluate_predictor(
    const std::function<std::vector<int>(const Tensor4<S>&)>& predict,
    const std::vector<SceneSample<S>>& data, int classes, int batch_size = 16) {
  Metrics m;
  m.confusion = Eigen::MatrixXi::Zero(classes, classes);
  size_t pos = 0;
  while (pos < data.size()) {
    const size_t end = std::min(pos + static_cast<size_t>(batch_size), data.size());
    std::vector<SceneSample<S>> batch(data.begin() + static_cast<std::ptrdiff_t>(pos),
                                      data.begin() + static_cast<std::ptrdiff_t>(end));
    const std::vector<int> pred = predict(stack_images(batch));
    for (size_t i = 0; i < batch.size(); ++i) m.confusion(batch[i].label, pred[i]) += 1;
    pos = end;
  }
  m.overall_accuracy =
      data.empty() ? 0.0 : static_cast<double>(m.confusion.trace()) / static_cast<double>(data.size());
  return m;
}

template <class S>
Metrics evaluate_model(EamClassifier<S>& model, const std::vector<SceneSample<S>>& data,
                       int batch_size = 16) {
  return evaluate_predictor<S>([&](const Tensor4<S>& x) { return model.predict(x); }, data,
                               model.config().classes, batch_size);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

template <class S>
struct TrainResult {
  Metrics test_metrics;
  double final_train_accuracy = 0.0;  // clean pass over the training split
  std::vector<EpochStats> curves;
};

/// Epoch loop with shuffled mini-batches and optional augmentation. A tenth
/// of the training split is held out for the per-epoch validation curve.
/// Aborts with the epoch index if the loss stops being finite.
template <class S>
TrainResult<S> train_model(EamClassifier<S>& model, const std::vector<SceneSample<S>>& train_set,
                           const std::vector<SceneSample<S>>& test_set, const TrainConfig& tc) {
  if (train_set.empty()) throw ValueError("train: empty training set");
  if (count_classes(dataset_labels(train_set)) < 2)
    throw ValueError("train: need at least 2 classes");
  if (tc.batch_size < 1) throw ValueError("train: batch_size must be >= 1");

  // Carve the validation subset out of the training split.
  std::vector<SceneSample<S>> fit_set, val_set;
  if (tc.val_fraction > 0.0 && train_set.size() >= 2) {
    std::vector<std::vector<size_t>> per_class(
        static_cast<size_t>(count_classes(dataset_labels(train_set))));
    for (size_t i = 0; i < train_set.size(); ++i)
      per_class[static_cast<size_t>(train_set[i].label)].push_back(i);
    std::mt19937_64 split_rng(tc.seed * 0x9E3779B97F4A7C15ULL + 1);
    std::vector<bool> is_val(train_set.size(), false);
    for (auto& idx : per_class) {
      std::shuffle(idx.begin(), idx.end(), split_rng);
      const auto n_val = static_cast<size_t>(std::lround(tc.val_fraction * idx.size()));
      for (size_t i = 0; i < n_val && idx.size() - i > 1; ++i) is_val[idx[i]] = true;
    }
    for (size_t i = 0; i < train_set.size(); ++i)
      (is_val[i] ? val_set : fit_set).push_back(train_set[i]);
  } else {
    fit_set = train_set;
  }

  const int classes = model.config().classes;
  std::mt19937_64 rng(tc.seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::vector<size_t> order(fit_set.size());
  std::iota(order.begin(), order.end(), size_t(0));

  auto eval_loss_acc = [&](const std::vector<SceneSample<S>>& set) {
    if (set.empty()) return std::pair<double, double>(0.0, 0.0);
    double loss_sum = 0.0;
    size_t correct = 0, pos = 0;
    while (pos < set.size()) {
      const size_t end = std::min(pos + static_cast<size_t>(tc.batch_size), set.size());
      std::vector<SceneSample<S>> batch(set.begin() + static_cast<std::ptrdiff_t>(pos),
                                        set.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> labels;
      for (const auto& b : batch) labels.push_back(b.label);
      ForwardTrace<S> tr = model.forward(stack_images(batch));
      Var<S> loss = cross_entropy(tr.logits, labels);
      loss_sum += static_cast<double>(loss->value.data()[0]) * static_cast<double>(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) {
        Eigen::Map<const ArrX<S>> row(tr.logits->value.plane(static_cast<Index>(i), 0), classes);
        Index best = 0;
        row.maxCoeff(&best);
        if (static_cast<int>(best) == batch[i].label) ++correct;
      }
      pos = end;
    }
    return std::pair<double, double>(loss_sum / static_cast<double>(set.size()),
                                     static_cast<double>(correct) / static_cast<double>(set.size()));
  };

  TrainResult<S> result;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(tc.batch_size)) {
      const size_t end = std::min(pos + static_cast<size_t>(tc.batch_size), order.size());
      std::vector<SceneSample<S>> batch;
      std::vector<int> labels;
      for (size_t i = pos; i < end; ++i) {
        const SceneSample<S>& src = fit_set[order[i]];
        batch.push_back(tc.augment ? augment(src, rng) : src);
        labels.push_back(src.label);
      }
      model.params().zero_grads();
      ForwardTrace<S> tr = model.forward(stack_images(batch));
      Var<S> loss = cross_entropy(tr.logits, labels);
      const double batch_loss = static_cast<double>(loss->value.data()[0]);
      if (!std::isfinite(batch_loss))
        throw Error("train: loss diverged at epoch " + std::to_string(epoch));
      loss_sum += batch_loss * static_cast<double>(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) {
        Eigen::Map<const ArrX<S>> row(tr.logits->value.plane(static_cast<Index>(i), 0), classes);
        Index best = 0;
        row.maxCoeff(&best);
        if (static_cast<int>(best) == labels[i]) ++correct;
      }
      backward(loss);
      adam_step(model.params(), tc.lr, tc.weight_decay);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(fit_set.size());
    st.train_acc = static_cast<double>(correct) / static_cast<double>(fit_set.size());
    if (val_set.empty()) {
      st.val_loss = st.train_loss;
      st.val_acc = st.train_acc;
    } else {
      const auto [vl, va] = eval_loss_acc(val_set);
      st.val_loss = vl;
      st.val_acc = va;
    }
    result.curves.push_back(st);
  }

  result.final_train_accuracy = eval_loss_acc(train_set).second;
  result.test_metrics = evaluate_model(model, test_set, tc.batch_size);
  return result;
}

/// The [dataset] -> split -> train -> evaluate pipeline behind `train`.
template <class S>
struct TrainRun {
  std::unique_ptr<EamClassifier<S>> model;
  TrainResult<S> result;
};

template <class S>
TrainRun<S> train(const std::vector<SceneSample<S>>& dataset, const ModelConfig& mc,
                  const TrainConfig& tc, double train_fraction) {
  if (dataset.empty()) throw ValueError("train: empty dataset");
  SplitIndices split = stratified_split(dataset, train_fraction, tc.seed);
  std::vector<SceneSample<S>> train_set, test_set;
  for (size_t i : split.train) train_set.push_back(dataset[i]);
  for (size_t i : split.test) test_set.push_back(dataset[i]);
  TrainRun<S> run;
  run.model = std::make_unique<EamClassifier<S>>(mc, tc.seed);
  run.result = train_model(*run.model, train_set, test_set, tc);
  return run;
}

// ---------------------------------------------------------------------------
// Five-split evaluation protocol
// ---------------------------------------------------------------------------

template <class S>
struct SplitOutcome {
  double accuracy = 0.0;
  Eigen::MatrixXi confusion;
};

/// Runs `run_split` on five seeded stratified splits and aggregates mean and
/// population standard deviation. Splits may run on separate threads
/// (`jobs`); aggregation order is fixed by split index either way.
template <class S>
Metrics five_split_protocol(
    const std::vector<SceneSample<S>>& dataset, double train_fraction, int classes,
    const std::function<SplitOutcome<S>(const std::vector<SceneSample<S>>&,
                                        const std::vector<SceneSample<S>>&, std::uint64_t)>&
        run_split,
    std::uint64_t base_seed, int jobs = 1) {
  constexpr int kSplits = 5;
  std::vector<SplitOutcome<S>> outcomes(kSplits);
  auto run_one = [&](int s) {
    const std::uint64_t split_seed = base_seed + static_cast<std::uint64_t>(s);
    SplitIndices split = stratified_split(dataset, train_fraction, split_seed);
    std::vector<SceneSample<S>> train_set, test_set;
    for (size_t i : split.train) train_set.push_back(dataset[i]);
    for (size_t i : split.test) test_set.push_back(dataset[i]);
    outcomes[static_cast<size_t>(s)] = run_split(train_set, test_set, split_seed);
  };

  if (jobs <= 1) {
    for (int s = 0; s < kSplits; ++s) run_one(s);
  } else {
    int next = 0;
    while (next < kSplits) {
      std::vector<std::thread> pool;
      for (int j = 0; j < jobs && next < kSplits; ++j, ++next) pool.emplace_back(run_one, next);
      for (auto& th : pool) th.join();
    }
  }

  Metrics m;
  m.confusion = Eigen::MatrixXi::Zero(classes, classes);
  for (const auto& o : outcomes) {
    m.per_split.push_back(o.accuracy);
    if (o.confusion.size() > 0) m.confusion += o.confusion;
  }
  m.mean = std::accumulate(m.per_split.begin(), m.per_split.end(), 0.0) / kSplits;
  double var = 0.0;
  for (double a : m.per_split) var += (a - m.mean) * (a - m.mean);
  m.stddev = std::sqrt(var / kSplits);
  m.overall_accuracy = m.mean;
  return m;
}

}  // namespace eam
