#include "aresgaze/backbone.hpp"

#include <cmath>

namespace ag {

void BackboneConfig::validate() const {
  if (stage_channels.size() != 3) throw ConfigError("backbone requires exactly 3 stages");
  for (int c : stage_channels)
    if (c < 1) throw ConfigError("stage channels must be positive");
  if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (input_h < 8 || input_w < 8) throw ConfigError("input extent too small for the stem");
  if (nh < 1) throw ConfigError("nh must be >= 1");
  if (!(k_ratio > 0.0 && k_ratio < 1.0) || !(v_ratio > 0.0 && v_ratio < 1.0))
    throw ConfigError("attention ratios must lie in (0,1)");
}

int compatible_heads(int requested, int dk, int dv) {
  for (int n = std::min({requested, dk, dv}); n >= 1; --n)
    if (dk % n == 0 && dv % n == 0) return n;
  return 1;
}

namespace {

Conv2dLayer make_conv(int cin, int cout, int kernel, int stride, int padding,
                      std::mt19937_64& rng) {
  Conv2dLayer l;
  l.w = Tensor::randn(Shape{cout, cin, kernel, kernel}, rng,
                      std::sqrt(2.0 / (cin * kernel * kernel)));
  l.b = Tensor::zeros(Shape{cout});
  l.stride = stride;
  l.padding = padding;
  return l;
}

BlockConv make_block_conv(const BackboneConfig& cfg, int cin, int cout, int stride, int h, int w,
                          std::mt19937_64& rng) {
  BlockConv bc;
  bc.attention = cfg.attention;
  if (cfg.attention) {
    AAConvConfig ac;
    ac.f_in = cin;
    ac.f_out = cout;
    ac.kernel = 3;
    ac.stride = stride;
    ac.k_ratio = cfg.k_ratio;
    ac.v_ratio = cfg.v_ratio;
    ac.nh = compatible_heads(cfg.nh, ac.dk(), ac.dv());
    bc.aa = std::make_unique<AAConvLayer>(ac, h, w, rng);
  } else {
    bc.conv = make_conv(cin, cout, 3, stride, 1, rng);
  }
  return bc;
}

void visit_conv(const std::string& name, const Conv2dLayer& c, const ParamVisitor& fn) {
  fn(name + ".w", c.w);
  fn(name + ".b", c.b);
}

void visit_bn_params(const std::string& name, const BatchNorm2d& bn, const ParamVisitor& fn) {
  fn(name + ".gamma", bn.gamma);
  fn(name + ".beta", bn.beta);
}

void visit_bn_buffers(const std::string& name, const BatchNorm2d& bn, const ParamVisitor& fn) {
  fn(name + ".running_mean", bn.running_mean);
  fn(name + ".running_var", bn.running_var);
}

void visit_block_conv(const std::string& name, const BlockConv& bc, const ParamVisitor& fn) {
  if (bc.attention) {
    fn(name + ".conv.w", bc.aa->conv_w);
    fn(name + ".conv.b", bc.aa->conv_b);
    fn(name + ".qkv.w", bc.aa->qkv_w);
    fn(name + ".mix.w", bc.aa->mix_w);
    fn(name + ".rel_w", bc.aa->rel_w);
    fn(name + ".rel_h", bc.aa->rel_h);
  } else {
    visit_conv(name, bc.conv, fn);
  }
}

}  // namespace

Backbone::Backbone(BackboneConfig c, std::mt19937_64& rng) : cfg(std::move(c)), stem_bn(1) {
  cfg.validate();
  const int c0 = cfg.stage_channels[0];
  stem = make_conv(cfg.input_channels, c0, 7, 2, 3, rng);
  stem_bn = BatchNorm2d(c0);

  // Extents after stem conv (s2 p3) and max pool (3, s2, p1): both ceil(x/2).
  int h = (cfg.input_h + 1) / 2, w = (cfg.input_w + 1) / 2;
  h = (h + 1) / 2;
  w = (w + 1) / 2;

  int cin = c0;
  const int stage_strides[3] = {1, 2, 2};
  for (int s = 0; s < 3; ++s) {
    const int cout = cfg.stage_channels[s];
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const int stride = (b == 0) ? stage_strides[s] : 1;
      BasicBlock blk(cout);
      blk.conv1 = make_block_conv(cfg, cin, cout, stride, h, w, rng);
      const int oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
      blk.conv2 = make_block_conv(cfg, cout, cout, 1, oh, ow, rng);
      if (stride != 1 || cin != cout) {
        blk.has_projection = true;
        blk.proj = make_conv(cin, cout, 1, stride, 0, rng);
        blk.proj_bn = BatchNorm2d(cout);
      }
      blocks.push_back(std::move(blk));
      cin = cout;
      h = oh;
      w = ow;
    }
  }
}

TensorPtr Backbone::forward(Tape* tape, const TensorPtr& image, bool train, bool capture_maps) {
  if (image->shape.rank() != 4 || image->shape[1] != cfg.input_channels ||
      image->shape[2] != cfg.input_h || image->shape[3] != cfg.input_w)
    throw ShapeError("backbone built for [N," + std::to_string(cfg.input_channels) + "," +
                     std::to_string(cfg.input_h) + "," + std::to_string(cfg.input_w) + "], got " +
                     image->shape.str());

  auto x = conv2d(tape, image, stem.w, stem.b, stem.stride, stem.padding);
  x = batch_norm2d(tape, x, stem_bn, train);
  x = relu(tape, x);
  x = max_pool2d(tape, x, 3, 2, 1);

  for (auto& blk : blocks) {
    TensorPtr shortcut = x;
    if (blk.has_projection) {
      shortcut = conv2d(tape, x, blk.proj.w, blk.proj.b, blk.proj.stride, blk.proj.padding);
      shortcut = batch_norm2d(tape, shortcut, blk.proj_bn, train);
    }
    auto y = blk.conv1.forward(tape, x, capture_maps);
    y = batch_norm2d(tape, y, blk.bn1, train);
    y = relu(tape, y);
    y = blk.conv2.forward(tape, y, capture_maps);
    y = batch_norm2d(tape, y, blk.bn2, train);
    x = relu(tape, add(tape, y, shortcut));
  }
  return global_avg_pool(tape, x);
}

std::vector<AAConvLayer*> Backbone::attention_layers() {
  std::vector<AAConvLayer*> out;
  for (auto& blk : blocks) {
    if (blk.conv1.attention) out.push_back(blk.conv1.aa.get());
    if (blk.conv2.attention) out.push_back(blk.conv2.aa.get());
  }
  return out;
}

void Backbone::visit_params(const std::string& prefix, const ParamVisitor& fn) const {
  visit_conv(prefix + ".stem", stem, fn);
  visit_bn_params(prefix + ".stem_bn", stem_bn, fn);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string bp = prefix + ".block" + std::to_string(i);
    const BasicBlock& blk = blocks[i];
    visit_block_conv(bp + ".conv1", blk.conv1, fn);
    visit_block_conv(bp + ".conv2", blk.conv2, fn);
    visit_bn_params(bp + ".bn1", blk.bn1, fn);
    visit_bn_params(bp + ".bn2", blk.bn2, fn);
    if (blk.has_projection) {
      visit_conv(bp + ".proj", blk.proj, fn);
      visit_bn_params(bp + ".proj_bn", blk.proj_bn, fn);
    }
  }
}

void Backbone::visit_buffers(const std::string& prefix, const ParamVisitor& fn) const {
  visit_bn_buffers(prefix + ".stem_bn", stem_bn, fn);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string bp = prefix + ".block" + std::to_string(i);
    visit_bn_buffers(bp + ".bn1", blocks[i].bn1, fn);
    visit_bn_buffers(bp + ".bn2", blocks[i].bn2, fn);
    if (blocks[i].has_projection) visit_bn_buffers(bp + ".proj_bn", blocks[i].proj_bn, fn);
  }
}

}  // namespace ag
