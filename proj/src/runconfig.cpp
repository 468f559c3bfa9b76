#include "aresgaze/runconfig.hpp"

#include <fstream>
#include <sstream>

namespace ag {

namespace {

bool parse_switch(const std::string& v, const std::string& key) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ParseError("key '" + key + "' expects on|off, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t pos = 0;
      out.push_back(std::stoi(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ParseError("key '" + key + "': bad integer '" + tok + "'");
    }
  }
  if (out.empty()) throw ParseError("key '" + key + "': empty list");
  return out;
}

}  // namespace

GazeNetConfig RunConfig::net_config() const {
  GazeNetConfig cfg;
  cfg.eye_model = eye_model;
  cfg.face.attention = attention_face;
  cfg.face.stage_channels = stage_channels;
  cfg.face.nh = nh;
  cfg.face.k_ratio = k_ratio;
  cfg.face.v_ratio = v_ratio;
  cfg.face.input_channels = 3;
  cfg.face.input_h = face_extent;
  cfg.face.input_w = face_extent;
  cfg.eye = cfg.face;
  cfg.eye.attention = attention_eyes;
  cfg.eye.input_channels = 1;
  if (eye_model == EyeInputModel::SE) {
    cfg.eye.input_h = eye_extent;
    cfg.eye.input_w = eye_extent;
  } else {
    cfg.eye.input_h = eye_extent / 2;
    cfg.eye.input_w = eye_extent;
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  auto num = [&](const std::string& v, const std::string& key) -> double {
    try {
      size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(lineno) + ": key '" + key + "': bad number '" +
                       v + "'");
    }
  };
  while (std::getline(ss, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected key=value, got '" + line +
                       "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "epochs") rc.train.epochs = static_cast<int>(num(val, key));
    else if (key == "batch_size") rc.train.batch_size = static_cast<int>(num(val, key));
    else if (key == "lr_max") rc.train.lr_max = num(val, key);
    else if (key == "warmup_fraction") rc.train.warmup_fraction = num(val, key);
    else if (key == "momentum") rc.train.momentum = num(val, key);
    else if (key == "weight_decay") rc.train.weight_decay = num(val, key);
    else if (key == "seed") rc.train.seed = static_cast<uint64_t>(num(val, key));
    else if (key == "nh") rc.nh = static_cast<int>(num(val, key));
    else if (key == "k_ratio") rc.k_ratio = num(val, key);
    else if (key == "v_ratio") rc.v_ratio = num(val, key);
    else if (key == "eye_model") rc.eye_model = eye_model_from(val);
    else if (key == "attention_face") rc.attention_face = parse_switch(val, key);
    else if (key == "attention_eyes") rc.attention_eyes = parse_switch(val, key);
    else if (key == "stage_channels") rc.stage_channels = parse_int_list(val, key);
    else if (key == "face_extent") rc.face_extent = static_cast<int>(num(val, key));
    else if (key == "eye_extent") rc.eye_extent = static_cast<int>(num(val, key));
    else
      throw ParseError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  rc.train.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run config '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_run_config(os.str());
}

}  // namespace ag
