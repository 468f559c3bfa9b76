#pragma once

#include <memory>
#include <optional>

#include "aresgaze/aaconv.hpp"

namespace ag {

using ParamVisitor = std::function<void(const std::string&, const TensorPtr&)>;

/// Plain convolution layer (weight + bias + geometry).
struct Conv2dLayer {
  TensorPtr w;
  TensorPtr b;
  int stride = 1;
  int padding = 0;
};

/// ResNet-14 / ARes-14 configuration: standard stem, three stages of basic
/// blocks at strides [1,2,2], global average pooling.
struct BackboneConfig {
  bool attention = true;  // ARes-14 when true, ResNet-14 baseline when false
  std::vector<int> stage_channels{64, 128, 256};
  int blocks_per_stage = 2;
  int nh = 8;  // requested heads; clamped per layer to divide dk/dv
  double k_ratio = 0.25;
  double v_ratio = 0.25;
  bool augment_shortcuts = false;  // 1x1 projection shortcuts stay regular by default
  int input_channels = 3;
  int input_h = 112;
  int input_w = 112;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// One 3x3 block convolution, regular or attention-augmented.
struct BlockConv {
  bool attention = false;
  Conv2dLayer conv;                    // used when !attention
  std::unique_ptr<AAConvLayer> aa;     // used when attention

  TensorPtr forward(Tape* tape, const TensorPtr& x, bool capture_maps) {
    if (attention) return aaconv_forward(tape, x, *aa, capture_maps);
    return conv2d(tape, x, conv.w, conv.b, conv.stride, conv.padding);
  }
};

/// Two 3x3 convolutions with batch norm, ReLU after the first BN and after
/// the residual addition; projection shortcut when stride/channels change.
struct BasicBlock {
  BlockConv conv1;
  BlockConv conv2;
  BatchNorm2d bn1;
  BatchNorm2d bn2;
  bool has_projection = false;
  Conv2dLayer proj;
  BatchNorm2d proj_bn;

  BasicBlock(int out_channels) : bn1(out_channels), bn2(out_channels), proj_bn(out_channels) {}
};

class Backbone {
public:
  BackboneConfig cfg;
  Conv2dLayer stem;
  BatchNorm2d stem_bn;
  std::vector<BasicBlock> blocks;

  Backbone(BackboneConfig c, std::mt19937_64& rng);

  /// Image [N, Cin, H, W] -> feature [N, stage_channels.back()].
  TensorPtr forward(Tape* tape, const TensorPtr& image, bool train, bool capture_maps = false);

  /// Stem conv + block convolutions + the prediction-layer position;
  /// projection shortcuts excluded. 14 under the default config.
  int count_layers() const {
    return 1 + static_cast<int>(blocks.size()) * 2 + 1;
  }

  int feature_length() const { return cfg.stage_channels.back(); }

  /// Attention-augmented layers in forward order (empty for ResNet-14).
  std::vector<AAConvLayer*> attention_layers();

  void visit_params(const std::string& prefix, const ParamVisitor& fn) const;
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn) const;
};

/// Largest head count <= requested that divides both dk and dv.
int compatible_heads(int requested, int dk, int dv);

}  // namespace ag
