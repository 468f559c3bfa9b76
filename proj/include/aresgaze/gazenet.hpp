#pragma once

#include "aresgaze/backbone.hpp"

namespace ag {

/// Eye-branch input model: stacked-eyes single pass, double-pass with
/// shared weights, or two separate branches.
enum class EyeInputModel { SE, DP, TB };

std::string eye_model_name(EyeInputModel m);
EyeInputModel eye_model_from(const std::string& s);

struct GazeNetConfig {
  BackboneConfig face;     // 3-channel
  BackboneConfig eye;      // 1-channel; SE square, DP/TB half-height
  EyeInputModel eye_model = EyeInputModel::SE;
  int head_hidden = 256;

  void validate() const;
  bool operator==(const GazeNetConfig&) const = default;

  int eye_feature_width() const {
    return eye_model == EyeInputModel::TB ? 2 * eye.stage_channels.back()
                                          : eye.stage_channels.back();
  }
  int fused_width() const { return face.stage_channels.back() + eye_feature_width(); }
};

/// Two-branch gaze regressor: twin backbones for face and eyes, feature
/// concatenation, two fully-connected prediction layers emitting
/// (pitch, yaw) in radians.
class GazeNet {
public:
  GazeNetConfig cfg;
  Backbone face;
  Backbone eye;                     // SE/DP branch, and TB left branch
  std::unique_ptr<Backbone> eye_r;  // TB only: right-eye branch
  TensorPtr head1_w, head1_b;       // fused -> hidden
  TensorPtr head2_w, head2_b;       // hidden -> 2

  GazeNet(GazeNetConfig c, std::mt19937_64& rng);

  /// face [N,3,H,W]; eyes: SE one tensor [N,1,E,E], DP/TB eyes_left and
  /// eyes_right [N,1,E/2,E]. Returns [N,2] (pitch, yaw).
  TensorPtr forward(Tape* tape, const TensorPtr& face_img, const TensorPtr& eyes,
                    const TensorPtr& eyes_right, bool train, bool capture_maps = false);

  void visit_params(const ParamVisitor& fn) const;
  void visit_buffers(const ParamVisitor& fn) const;

  long long count_parameters() const;
};

}  // namespace ag
