#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "aresgaze/checkpoint.hpp"
#include "testutil.hpp"

using namespace ag;
namespace fs = std::filesystem;

namespace {

GazeNetConfig tiny_config(EyeInputModel model = EyeInputModel::SE) {
  GazeNetConfig cfg;
  cfg.face.stage_channels = {8, 16, 32};
  cfg.face.input_channels = 3;
  cfg.face.input_h = 32;
  cfg.face.input_w = 32;
  cfg.eye = cfg.face;
  cfg.eye.input_channels = 1;
  cfg.eye.input_h = 16;
  cfg.eye.input_w = 16;
  if (model != EyeInputModel::SE) cfg.eye.input_h = 8;
  cfg.eye_model = model;
  cfg.head_hidden = 16;
  return cfg;
}

std::string temp_file(const std::string& tag) {
  return (fs::temp_directory_path() / ("aresgaze_ckpt_" + tag + ".bin")).string();
}

void perturb_buffers(GazeNet& net, std::mt19937_64& rng) {
  net.visit_buffers([&](const std::string&, const TensorPtr& t) {
    for (double& v : t->v) v = tu::rand_real(rng, -1.0, 2.0);
  });
}

}  // namespace

TEST_CASE("config text serialization round-trips") {
  for (auto model : {EyeInputModel::SE, EyeInputModel::DP, EyeInputModel::TB}) {
    const GazeNetConfig cfg = tiny_config(model);
    const GazeNetConfig back = parse_config(serialize_config(cfg));
    CHECK(back == cfg);
  }
  CHECK_THROWS_AS(parse_config("eye_model=se\ngibberish"), ParseError);
  CHECK_THROWS_AS(parse_config("head_hidden=16\n"), ParseError);  // missing eye_model
}

TEST_CASE("checkpoint round trip restores parameters and buffers bit-exactly") {
  std::mt19937_64 rng(91);
  GazeNet net(tiny_config(), rng);
  perturb_buffers(net, rng);
  const std::string path = temp_file("rt");
  save_checkpoint(net, path);

  std::mt19937_64 rng2(12345);  // different init, must be overwritten exactly
  GazeNet loaded(tiny_config(), rng2);
  load_checkpoint(loaded, path);

  std::vector<TensorPtr> a, b;
  auto collect_a = [&](const std::string&, const TensorPtr& t) { a.push_back(t); };
  auto collect_b = [&](const std::string&, const TensorPtr& t) { b.push_back(t); };
  net.visit_params(collect_a);
  net.visit_buffers(collect_a);
  loaded.visit_params(collect_b);
  loaded.visit_buffers(collect_b);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i]->v == b[i]->v);  // bitwise via doubles
}

TEST_CASE("predictions are identical before save and after load") {
  std::mt19937_64 rng(92);
  GazeNet net(tiny_config(), rng);
  perturb_buffers(net, rng);
  auto face = Tensor::randn(Shape{2, 3, 32, 32}, rng, 1.0);
  auto eyes = Tensor::randn(Shape{2, 1, 16, 16}, rng, 1.0);
  auto before = net.forward(nullptr, face, eyes, nullptr, false);

  const std::string path = temp_file("pred");
  save_checkpoint(net, path);
  std::mt19937_64 rng2(999);
  GazeNet loaded(tiny_config(), rng2);
  load_checkpoint(loaded, path);
  auto after = loaded.forward(nullptr, face, eyes, nullptr, false);
  CHECK(before->v == after->v);
}

TEST_CASE("loading into a mismatched config names the first differing field") {
  std::mt19937_64 rng(93);
  GazeNet net(tiny_config(), rng);
  const std::string path = temp_file("mismatch");
  save_checkpoint(net, path);

  GazeNetConfig other = tiny_config();
  other.head_hidden = 32;
  GazeNet target(other, rng);
  try {
    load_checkpoint(target, path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("head_hidden") != std::string::npos);
  }

  GazeNetConfig other2 = tiny_config();
  other2.face.nh = 4;
  GazeNet target2(other2, rng);
  try {
    load_checkpoint(target2, path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("face.nh") != std::string::npos);
  }
}

TEST_CASE("optimizer state rides an optional trailing section") {
  std::mt19937_64 rng(94);
  GazeNet net(tiny_config(), rng);
  std::map<std::string, TensorPtr> state;
  state["momentum.head.fc1.w"] = Tensor::randn(net.head1_w->shape, rng, 1.0);
  state["momentum.head.fc2.b"] = Tensor::randn(net.head2_b->shape, rng, 1.0);
  const std::string path = temp_file("opt");
  save_checkpoint(net, path, &state);

  GazeNet loaded(tiny_config(), rng);
  std::map<std::string, TensorPtr> back;
  load_checkpoint(loaded, path, &back);
  REQUIRE(back.size() == 2);
  CHECK(back.at("momentum.head.fc1.w")->v == state.at("momentum.head.fc1.w")->v);
  CHECK(back.at("momentum.head.fc2.b")->v == state.at("momentum.head.fc2.b")->v);

  // a checkpoint without optimizer state yields an empty map
  save_checkpoint(net, path);
  load_checkpoint(loaded, path, &back);
  CHECK(back.empty());
}

TEST_CASE("corrupt files raise parse errors") {
  std::mt19937_64 rng(95);
  GazeNet net(tiny_config(), rng);
  const std::string path = temp_file("corrupt");
  save_checkpoint(net, path);

  // truncate
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path + ".trunc", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(net, path + ".trunc"), ParseError);

  // wrong magic
  {
    std::ofstream out(path + ".magic", std::ios::binary);
    out << "NOPE then some bytes";
  }
  CHECK_THROWS_AS(load_checkpoint(net, path + ".magic"), ParseError);
  CHECK_THROWS_AS(load_checkpoint(net, path + ".does_not_exist"), IoError);
}

TEST_CASE("read_checkpoint_config rebuilds the stored configuration") {
  std::mt19937_64 rng(96);
  const GazeNetConfig cfg = tiny_config(EyeInputModel::TB);
  GazeNet net(cfg, rng);
  const std::string path = temp_file("cfg");
  save_checkpoint(net, path);
  CHECK(read_checkpoint_config(path) == cfg);
}
