#pragma once

#include "aresgaze/gazenet.hpp"
#include "aresgaze/training.hpp"

namespace ag {

/// Run settings parsed from a key=value text file. Every key is optional;
/// defaults reproduce the published training recipe. Unknown keys are
/// rejected.
///
/// Keys: epochs, batch_size, lr_max, warmup_fraction, momentum,
/// weight_decay, nh, k_ratio, v_ratio, eye_model {se|dp|tb},
/// attention_face {on|off}, attention_eyes {on|off},
/// stage_channels (comma list), seed, face_extent, eye_extent.
struct RunConfig {
  TrainConfig train;
  EyeInputModel eye_model = EyeInputModel::SE;
  bool attention_face = true;
  bool attention_eyes = true;
  std::vector<int> stage_channels{64, 128, 256};
  int nh = 8;
  double k_ratio = 0.25;
  double v_ratio = 0.25;
  int face_extent = 112;
  int eye_extent = 60;  // stacked square extent; DP/TB branches see half height

  /// Network configuration implied by these settings.
  GazeNetConfig net_config() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace ag
