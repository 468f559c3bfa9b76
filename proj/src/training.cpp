#include "aresgaze/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

namespace ag {

namespace {

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void append_channels_first(std::vector<double>& dst, const ImageBuffer& img) {
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) dst.push_back(img.at(x, y, c) / 255.0);
}

struct Batch {
  TensorPtr face;
  TensorPtr eyes_a;
  TensorPtr eyes_b;  // null for SE
  TensorPtr gt;
};

Batch pack_batch(const TrainingSet& data, const std::vector<int>& idx, size_t lo, size_t hi,
                 const GazeNetConfig& cfg) {
  const int n = static_cast<int>(hi - lo);
  Batch b;
  b.face = Tensor::zeros(Shape{n, cfg.face.input_channels, cfg.face.input_h, cfg.face.input_w});
  b.eyes_a = Tensor::zeros(Shape{n, 1, cfg.eye.input_h, cfg.eye.input_w});
  if (cfg.eye_model != EyeInputModel::SE)
    b.eyes_b = Tensor::zeros(Shape{n, 1, cfg.eye.input_h, cfg.eye.input_w});
  b.gt = Tensor::zeros(Shape{n, 2});
  const size_t face_len = b.face->v.size() / n;
  const size_t eye_len = b.eyes_a->v.size() / n;
  for (int i = 0; i < n; ++i) {
    const TrainingSample& s = data[static_cast<size_t>(idx[lo + i])];
    if (s.face.size() != face_len || s.eyes_a.size() != eye_len ||
        (b.eyes_b && s.eyes_b.size() != eye_len) || (!b.eyes_b && !s.eyes_b.empty()))
      throw ShapeError("training sample '" + s.sample_id + "' does not match the network config");
    std::copy(s.face.begin(), s.face.end(), b.face->v.begin() + i * face_len);
    std::copy(s.eyes_a.begin(), s.eyes_a.end(), b.eyes_a->v.begin() + i * eye_len);
    if (b.eyes_b) std::copy(s.eyes_b.begin(), s.eyes_b.end(), b.eyes_b->v.begin() + i * eye_len);
    b.gt->v[2 * i] = s.gaze.pitch;
    b.gt->v[2 * i + 1] = s.gaze.yaw;
  }
  return b;
}

std::vector<int> subject_ids(const TrainingSet& data) {
  std::vector<int> ids;
  for (const auto& s : data) ids.push_back(s.subject);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_max > 0.0)) throw ConfigError("lr_max must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
    throw ConfigError("warmup_fraction must be in [0, 1]");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

TensorPtr smooth_l1_loss(Tape* tape, const TensorPtr& pred, const TensorPtr& gt) {
  if (pred->shape != gt->shape)
    throw ShapeError("loss shape mismatch: " + pred->shape.str() + " vs " + gt->shape.str());
  const int n = pred->numel();
  auto out = Tensor::scalar(0.0);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = pred->v[static_cast<size_t>(i)] - gt->v[static_cast<size_t>(i)];
    acc += std::abs(e) < 1.0 ? 0.5 * e * e : std::abs(e) - 0.5;
  }
  out->v[0] = acc / n;
  if (tape) {
    tape->touch(pred);
    tape->touch(gt);
    tape->touch(out);
    tape->record([=]() {
      const double go = out->g[0] / n;
      for (int i = 0; i < n; ++i) {
        const double e = pred->v[static_cast<size_t>(i)] - gt->v[static_cast<size_t>(i)];
        const double de = std::abs(e) < 1.0 ? e : (e > 0.0 ? 1.0 : -1.0);
        pred->g[static_cast<size_t>(i)] += go * de;
        gt->g[static_cast<size_t>(i)] -= go * de;
      }
    });
  }
  return out;
}

double lr_at(int step, int total_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw ValueError("total_steps must be >= 1");
  if (step < 0 || step >= total_steps) throw ValueError("step out of range");
  const int warmup = static_cast<int>(std::lround(cfg.warmup_fraction * total_steps));
  if (step < warmup) return cfg.lr_max * (step + 1) / warmup;
  if (total_steps <= warmup) return cfg.lr_max;
  const double t = static_cast<double>(step - warmup) / (total_steps - warmup);
  return cfg.lr_max * 0.5 * (1.0 + std::cos(M_PI * t));
}

SgdOptimizer::SgdOptimizer(std::vector<TensorPtr> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.push_back(Tensor::zeros(p->shape));
}

void SgdOptimizer::step(double lr) {
  for (const auto& p : params_) {
    if (p->g.size() != p->v.size())
      throw ValueError("optimizer step before backward: parameter has no gradient");
    for (double g : p->g)
      if (!std::isfinite(g)) throw ValueError("non-finite gradient encountered; step aborted");
  }
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    Tensor& vel = *velocity_[k];
    for (size_t i = 0; i < p.v.size(); ++i) {
      const double g = p.g[i] + weight_decay_ * p.v[i];
      vel.v[i] = momentum_ * vel.v[i] + g;
      p.v[i] -= lr * vel.v[i];
    }
  }
}

std::map<std::string, TensorPtr> SgdOptimizer::named_state(const GazeNet& net) const {
  std::map<std::string, TensorPtr> out;
  net.visit_params([&](const std::string& name, const TensorPtr& t) {
    for (size_t k = 0; k < params_.size(); ++k)
      if (params_[k] == t) {
        out["momentum." + name] = velocity_[k];
        return;
      }
    throw ValueError("model parameter '" + name + "' is not tracked by this optimizer");
  });
  return out;
}

TrainingSample make_training_sample(const GazeNetConfig& cfg, const ImageBuffer& face,
                                    const ImageBuffer& stacked_eyes, const SampleRecord& rec) {
  if (stacked_eyes.channels != 1 || stacked_eyes.height != stacked_eyes.width ||
      stacked_eyes.height % 2 != 0)
    throw ShapeError("stacked eye image must be a square grayscale image of even extent");
  TrainingSample s;
  s.sample_id = rec.sample_id;
  s.subject = rec.subject_id;
  s.gaze = rec.gaze;
  s.head = rec.head;
  s.light = rec.light;

  const ImageBuffer face_r = resize_bilinear(face, cfg.face.input_w, cfg.face.input_h);
  append_channels_first(s.face, face_r);

  if (cfg.eye_model == EyeInputModel::SE) {
    append_channels_first(s.eyes_a,
                          resize_bilinear(stacked_eyes, cfg.eye.input_w, cfg.eye.input_h));
    return s;
  }
  // Split the stack: left eye occupies the top half, right eye the bottom.
  const int half = stacked_eyes.height / 2;
  ImageBuffer top(stacked_eyes.width, half, 1), bottom(stacked_eyes.width, half, 1);
  for (int y = 0; y < half; ++y)
    for (int x = 0; x < stacked_eyes.width; ++x) {
      top.at(x, y, 0) = stacked_eyes.at(x, y, 0);
      bottom.at(x, y, 0) = stacked_eyes.at(x, y + half, 0);
    }
  append_channels_first(s.eyes_a, resize_bilinear(top, cfg.eye.input_w, cfg.eye.input_h));
  append_channels_first(s.eyes_b, resize_bilinear(bottom, cfg.eye.input_w, cfg.eye.input_h));
  return s;
}

TrainingSample make_synthetic_training_sample(const GazeNetConfig& cfg, const SyntheticConfig& scfg,
                                              int subject, int index, int normalized_size) {
  SyntheticSample raw = generate_sample(scfg, subject, index);
  const AffineNormalization norm = build_normalization(raw.record.landmarks, normalized_size);
  const ImageBuffer face = warp_affine(raw.frame, norm);
  const StackedEyes eyes = extract_stacked_eyes(face);
  return make_training_sample(cfg, face, eyes.image, raw.record);
}

TrainResult train(GazeNet& net, const TrainingSet& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ValueError("training set is empty");

  std::vector<TensorPtr> params;
  net.visit_params([&](const std::string&, const TensorPtr& t) { params.push_back(t); });
  SgdOptimizer opt(params, cfg.momentum, cfg.weight_decay);

  const int n = static_cast<int>(data.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = cfg.epochs * steps_per_epoch;

  std::mt19937_64 rng(mix(cfg.seed ^ 0x7261a1ULL));
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  TrainResult result;
  int gstep = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double epoch_acc = 0.0;
    for (size_t lo = 0; lo < idx.size(); lo += static_cast<size_t>(cfg.batch_size)) {
      const size_t hi = std::min(idx.size(), lo + static_cast<size_t>(cfg.batch_size));
      Batch b = pack_batch(data, idx, lo, hi, net.cfg);
      Tape tape;
      TensorPtr pred = net.forward(&tape, b.face, b.eyes_a, b.eyes_b, /*train=*/true);
      TensorPtr loss = smooth_l1_loss(&tape, pred, b.gt);
      if (!std::isfinite(loss->v[0]))
        throw ValueError("non-finite loss at step " + std::to_string(gstep) + "; training aborted");
      tape.backward(loss);
      opt.step(lr_at(gstep, total_steps, cfg));
      epoch_acc += loss->v[0] * static_cast<double>(hi - lo);
      ++gstep;
    }
    result.epoch_loss.push_back(epoch_acc / n);
  }
  result.steps = gstep;
  result.optimizer_state = opt.named_state(net);
  return result;
}

EvalResult evaluate(GazeNet& net, const TrainingSet& data, int batch_size) {
  if (data.empty()) throw ValueError("evaluation set is empty");
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);

  EvalResult result;
  for (size_t lo = 0; lo < data.size(); lo += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(data.size(), lo + static_cast<size_t>(batch_size));
    Batch b = pack_batch(data, idx, lo, hi, net.cfg);
    TensorPtr pred = net.forward(nullptr, b.face, b.eyes_a, b.eyes_b, /*train=*/false);
    for (size_t i = 0; i < hi - lo; ++i) {
      const TrainingSample& s = data[lo + i];
      EvalRecord r;
      r.sample_id = s.sample_id;
      r.subject = s.subject;
      r.pred = {pred->v[2 * i], pred->v[2 * i + 1]};
      r.gt = s.gaze;
      r.head = s.head;
      r.light = s.light;
      r.error_deg = angular_error_deg(r.pred, r.gt);
      result.records.push_back(std::move(r));
    }
  }
  double acc = 0.0;
  for (const auto& r : result.records) acc += r.error_deg;
  result.mean_error_deg = acc / static_cast<double>(result.records.size());
  return result;
}

LoocvResult loocv(const GazeNetConfig& net_cfg, const TrainingSet& data, const TrainConfig& cfg,
                  int parallel_folds) {
  net_cfg.validate();
  cfg.validate();
  if (parallel_folds < 1) throw ValueError("parallel_folds must be >= 1");
  const std::vector<int> subjects = subject_ids(data);
  if (subjects.size() < 2) throw ValueError("leave-one-person-out needs at least two subjects");

  LoocvResult result;
  result.folds.resize(subjects.size());

  auto run_fold = [&](size_t f) {
    const int held_out = subjects[f];
    TrainingSet train_set, test_set;
    for (const auto& s : data) (s.subject == held_out ? test_set : train_set).push_back(s);

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = mix(cfg.seed ^ mix(0xf01dULL + static_cast<uint64_t>(held_out)));
    std::mt19937_64 rng(fold_cfg.seed);
    GazeNet net(net_cfg, rng);
    train(net, train_set, fold_cfg);
    result.folds[f].subject = held_out;
    result.folds[f].eval = evaluate(net, test_set);
  };

  if (parallel_folds == 1) {
    for (size_t f = 0; f < subjects.size(); ++f) run_fold(f);
  } else {
    // Folds are fully independent; any interleaving yields identical output.
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const size_t workers =
        std::min(static_cast<size_t>(parallel_folds), subjects.size());
    std::exception_ptr first_error;
    std::mutex err_mutex;
    for (size_t w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (size_t f = next.fetch_add(1); f < subjects.size(); f = next.fetch_add(1)) {
          try {
            run_fold(f);
          } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  double acc = 0.0;
  for (const auto& f : result.folds) acc += f.eval.mean_error_deg;
  result.overall_mean_deg = acc / static_cast<double>(result.folds.size());
  return result;
}

}  // namespace ag
