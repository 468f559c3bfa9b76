#include "aresgaze/gazenet.hpp"

#include <cmath>

namespace ag {

std::string eye_model_name(EyeInputModel m) {
  switch (m) {
    case EyeInputModel::SE: return "se";
    case EyeInputModel::DP: return "dp";
    case EyeInputModel::TB: return "tb";
  }
  throw ConfigError("unknown eye model");
}

EyeInputModel eye_model_from(const std::string& s) {
  if (s == "se") return EyeInputModel::SE;
  if (s == "dp") return EyeInputModel::DP;
  if (s == "tb") return EyeInputModel::TB;
  throw ConfigError("eye_model must be one of se|dp|tb, got '" + s + "'");
}

void GazeNetConfig::validate() const {
  face.validate();
  eye.validate();
  if (eye.input_channels != 1) throw ConfigError("eye branch consumes single-channel images");
  if (eye_model == EyeInputModel::SE) {
    if (eye.input_h != eye.input_w)
      throw ConfigError("stacked-eyes input must be square, got " + std::to_string(eye.input_h) +
                        "x" + std::to_string(eye.input_w));
  } else {
    if (2 * eye.input_h != eye.input_w)
      throw ConfigError("per-eye input must have 2:1 width:height, got " +
                        std::to_string(eye.input_h) + "x" + std::to_string(eye.input_w));
  }
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
}

GazeNet::GazeNet(GazeNetConfig c, std::mt19937_64& rng)
    : cfg(std::move(c)), face(cfg.face, rng), eye(cfg.eye, rng) {
  cfg.validate();
  if (cfg.eye_model == EyeInputModel::TB) eye_r = std::make_unique<Backbone>(cfg.eye, rng);
  const int fused = cfg.fused_width();
  head1_w = Tensor::randn(Shape{cfg.head_hidden, fused}, rng, std::sqrt(2.0 / fused));
  head1_b = Tensor::zeros(Shape{cfg.head_hidden});
  head2_w = Tensor::randn(Shape{2, cfg.head_hidden}, rng, std::sqrt(2.0 / cfg.head_hidden));
  head2_b = Tensor::zeros(Shape{2});
}

namespace {

// Joins [N,A] and [N,B] features into [N,A+B].
TensorPtr concat_features(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  const int N = a->shape[0];
  auto a4 = reshape(tape, a, Shape{N, a->shape[1], 1, 1});
  auto b4 = reshape(tape, b, Shape{N, b->shape[1], 1, 1});
  auto cat = concat_channels(tape, a4, b4);
  return reshape(tape, cat, Shape{N, cat->shape[1]});
}

}  // namespace

TensorPtr GazeNet::forward(Tape* tape, const TensorPtr& face_img, const TensorPtr& eyes,
                           const TensorPtr& eyes_right, bool train, bool capture_maps) {
  auto face_feat = face.forward(tape, face_img, train, capture_maps);

  TensorPtr eye_feat;
  switch (cfg.eye_model) {
    case EyeInputModel::SE:
      eye_feat = eye.forward(tape, eyes, train, capture_maps);
      break;
    case EyeInputModel::DP: {
      if (!eyes_right) throw ShapeError("double-pass model needs left and right eye inputs");
      auto l = eye.forward(tape, eyes, train, capture_maps);
      auto r = eye.forward(tape, eyes_right, train, capture_maps);
      eye_feat = add(tape, l, r);  // sum fusion keeps the fused width at 512-like
      break;
    }
    case EyeInputModel::TB: {
      if (!eyes_right) throw ShapeError("two-branch model needs left and right eye inputs");
      auto l = eye.forward(tape, eyes, train, capture_maps);
      auto r = eye_r->forward(tape, eyes_right, train, capture_maps);
      eye_feat = concat_features(tape, l, r);
      break;
    }
  }

  auto fused = concat_features(tape, face_feat, eye_feat);
  auto h = relu(tape, linear(tape, fused, head1_w, head1_b));
  return linear(tape, h, head2_w, head2_b);  // no activation: angles may be negative
}

void GazeNet::visit_params(const ParamVisitor& fn) const {
  face.visit_params("face", fn);
  eye.visit_params("eye", fn);
  if (eye_r) eye_r->visit_params("eye_r", fn);
  fn("head.fc1.w", head1_w);
  fn("head.fc1.b", head1_b);
  fn("head.fc2.w", head2_w);
  fn("head.fc2.b", head2_b);
}

void GazeNet::visit_buffers(const ParamVisitor& fn) const {
  face.visit_buffers("face", fn);
  eye.visit_buffers("eye", fn);
  if (eye_r) eye_r->visit_buffers("eye_r", fn);
}

long long GazeNet::count_parameters() const {
  long long n = 0;
  visit_params([&](const std::string&, const TensorPtr& t) { n += t->numel(); });
  return n;
}

}  // namespace ag
