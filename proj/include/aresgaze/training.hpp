#pragma once

#include <map>

#include "aresgaze/dataset.hpp"
#include "aresgaze/gazenet.hpp"

namespace ag {

struct TrainConfig {
  int epochs = 120;
  int batch_size = 48;
  double lr_max = 0.128;
  double warmup_fraction = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0003;
  uint64_t seed = 0;

  void validate() const;
};

/// Smooth L1 over all angle components, reduced by mean over batch and
/// components: 0.5 e^2 below unit residual, |e| - 0.5 above.
TensorPtr smooth_l1_loss(Tape* tape, const TensorPtr& pred, const TensorPtr& gt);

/// Linear warmup over round(warmup_fraction * total) steps up to lr_max,
/// then cosine annealing to zero over the remaining steps.
double lr_at(int step, int total_steps, const TrainConfig& cfg);

/// SGD with momentum and coupled weight decay:
///   g' = grad + wd * p;  v = mu * v + g';  p -= lr * v.
class SgdOptimizer {
public:
  SgdOptimizer(std::vector<TensorPtr> params, double momentum, double weight_decay);

  /// Aborts with ValueError on non-finite gradients (params untouched).
  void step(double lr);

  /// Velocities named after the model's parameters, for checkpointing.
  std::map<std::string, TensorPtr> named_state(const GazeNet& net) const;

  const std::vector<TensorPtr>& velocities() const { return velocity_; }

private:
  std::vector<TensorPtr> params_;
  std::vector<TensorPtr> velocity_;
  double momentum_;
  double weight_decay_;
};

/// One network-ready sample: normalized images flattened to [0,1] doubles.
struct TrainingSample {
  std::string sample_id;
  int subject = 0;
  std::vector<double> face;    // 3 * face_h * face_w
  std::vector<double> eyes_a;  // SE: full stacked square; DP/TB: left eye
  std::vector<double> eyes_b;  // DP/TB: right eye; empty for SE
  GazeVector gaze;
  HeadPose head;
  double light = 0.0;
};
using TrainingSet = std::vector<TrainingSample>;

/// Resizes a normalized face and 60x60 stacked-eye image to the network's
/// configured extents and packs them as a TrainingSample.
TrainingSample make_training_sample(const GazeNetConfig& cfg, const ImageBuffer& face,
                                    const ImageBuffer& stacked_eyes, const SampleRecord& rec);

/// Renders, normalizes and packs one synthetic sample end to end (raw frame
/// -> affine normalization at Z -> eye extraction -> network extents).
TrainingSample make_synthetic_training_sample(const GazeNetConfig& cfg, const SyntheticConfig& scfg,
                                              int subject, int index, int normalized_size);

struct TrainResult {
  std::vector<double> epoch_loss;  // one entry per epoch
  int steps = 0;
  std::map<std::string, TensorPtr> optimizer_state;  // final momentum buffers
};

/// Deterministic training loop (seeded shuffle, BN train mode).
TrainResult train(GazeNet& net, const TrainingSet& data, const TrainConfig& cfg);

struct EvalRecord {
  std::string sample_id;
  int subject = 0;
  GazeVector pred;
  GazeVector gt;
  HeadPose head;
  double light = 0.0;
  double error_deg = 0.0;  // always angular_error_deg(pred, gt)
};

struct EvalResult {
  std::vector<EvalRecord> records;
  double mean_error_deg = 0.0;
};

EvalResult evaluate(GazeNet& net, const TrainingSet& data, int batch_size = 32);

struct LoocvFold {
  int subject = 0;
  EvalResult eval;
};

struct LoocvResult {
  std::vector<LoocvFold> folds;       // one per subject, ascending subject id
  double overall_mean_deg = 0.0;      // unweighted mean of per-subject means
};

/// Leave-one-person-out: trains one model per subject on everyone else,
/// evaluates on the held-out subject. Fold seeds derive from (cfg.seed,
/// subject), so parallel execution is bit-identical to serial.
LoocvResult loocv(const GazeNetConfig& net_cfg, const TrainingSet& data, const TrainConfig& cfg,
                  int parallel_folds = 1);

}  // namespace ag
