#include "aresgaze/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ag {

namespace {

constexpr char kMagic[4] = {'A', 'R', 'S', 'G'};
constexpr uint32_t kVersion = 1;

std::string stage_list(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_stage_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

void backbone_kv(const std::string& p, const BackboneConfig& b,
                 std::map<std::string, std::string>& kv) {
  kv[p + ".attention"] = b.attention ? "1" : "0";
  kv[p + ".stage_channels"] = stage_list(b.stage_channels);
  kv[p + ".blocks_per_stage"] = std::to_string(b.blocks_per_stage);
  kv[p + ".nh"] = std::to_string(b.nh);
  kv[p + ".k_ratio"] = std::to_string(b.k_ratio);
  kv[p + ".v_ratio"] = std::to_string(b.v_ratio);
  kv[p + ".augment_shortcuts"] = b.augment_shortcuts ? "1" : "0";
  kv[p + ".input_channels"] = std::to_string(b.input_channels);
  kv[p + ".input_h"] = std::to_string(b.input_h);
  kv[p + ".input_w"] = std::to_string(b.input_w);
}

void backbone_from_kv(const std::string& p, const std::map<std::string, std::string>& kv,
                      BackboneConfig& b) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(p + "." + k);
    if (it == kv.end()) throw ParseError("checkpoint config missing key '" + p + "." + k + "'");
    return it->second;
  };
  b.attention = get("attention") == "1";
  b.stage_channels = parse_stage_list(get("stage_channels"));
  b.blocks_per_stage = std::stoi(get("blocks_per_stage"));
  b.nh = std::stoi(get("nh"));
  b.k_ratio = std::stod(get("k_ratio"));
  b.v_ratio = std::stod(get("v_ratio"));
  b.augment_shortcuts = get("augment_shortcuts") == "1";
  b.input_channels = std::stoi(get("input_channels"));
  b.input_h = std::stoi(get("input_h"));
  b.input_w = std::stoi(get("input_w"));
}

std::map<std::string, std::string> config_kv(const GazeNetConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["eye_model"] = eye_model_name(cfg.eye_model);
  kv["head_hidden"] = std::to_string(cfg.head_hidden);
  backbone_kv("face", cfg.face, kv);
  backbone_kv("eye", cfg.eye, kv);
  return kv;
}

std::map<std::string, TensorPtr> named_tensors(const GazeNet& net) {
  std::map<std::string, TensorPtr> out;
  auto put = [&](const std::string& n, const TensorPtr& t) { out[n] = t; };
  net.visit_params(put);
  net.visit_buffers(put);
  return out;
}

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path + ": truncated checkpoint");
}

void write_tensor_section(std::ostream& out, const std::map<std::string, TensorPtr>& tensors) {
  write_raw(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {  // std::map iterates sorted
    write_raw(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(out, static_cast<uint8_t>(t->shape.rank()));
    for (int d : t->shape.dims) write_raw(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t->v.data()),
              static_cast<std::streamsize>(t->v.size() * sizeof(double)));
  }
}

void read_tensor_section(std::istream& in, const std::string& path,
                         std::map<std::string, TensorPtr>& dst, bool create_missing) {
  uint32_t count = 0;
  read_raw(in, count, path);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = 0;
    read_raw(in, len, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw ParseError(path + ": truncated checkpoint");
    uint8_t rank = 0;
    read_raw(in, rank, path);
    std::vector<int> dims(rank);
    for (auto& d : dims) {
      uint32_t dd = 0;
      read_raw(in, dd, path);
      d = static_cast<int>(dd);
    }
    Shape shape{dims};
    TensorPtr target;
    auto it = dst.find(name);
    if (it != dst.end()) {
      target = it->second;
      if (target->shape != shape)
        throw ShapeError(path + ": tensor '" + name + "' has shape " + shape.str() +
                         " but model expects " + target->shape.str());
    } else if (create_missing) {
      target = Tensor::zeros(shape);
      dst[name] = target;
    } else {
      throw ParseError(path + ": unknown tensor '" + name + "' for this model");
    }
    in.read(reinterpret_cast<char*>(target->v.data()),
            static_cast<std::streamsize>(target->v.size() * sizeof(double)));
    if (!in) throw ParseError(path + ": truncated checkpoint in tensor '" + name + "'");
  }
}

std::string read_header_config(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": bad magic (not an ARSG checkpoint)");
  uint32_t version = 0;
  read_raw(in, version, path);
  if (version != kVersion)
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  uint32_t clen = 0;
  read_raw(in, clen, path);
  std::string cfg(clen, '\0');
  in.read(cfg.data(), clen);
  if (!in) throw ParseError(path + ": truncated config block");
  return cfg;
}

}  // namespace

std::string serialize_config(const GazeNetConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : config_kv(cfg)) os << k << "=" << v << "\n";
  return os.str();
}

GazeNetConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  GazeNetConfig cfg;
  auto it = kv.find("eye_model");
  if (it == kv.end()) throw ParseError("checkpoint config missing key 'eye_model'");
  cfg.eye_model = eye_model_from(it->second);
  it = kv.find("head_hidden");
  if (it == kv.end()) throw ParseError("checkpoint config missing key 'head_hidden'");
  cfg.head_hidden = std::stoi(it->second);
  backbone_from_kv("face", kv, cfg.face);
  backbone_from_kv("eye", kv, cfg.eye);
  return cfg;
}

void save_checkpoint(const GazeNet& net, const std::string& path,
                     const std::map<std::string, TensorPtr>* optimizer_state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  const std::string cfg = serialize_config(net.cfg);
  write_raw(out, static_cast<uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_raw(out, static_cast<uint8_t>(optimizer_state ? 1 : 0));
  write_tensor_section(out, named_tensors(net));
  if (optimizer_state) write_tensor_section(out, *optimizer_state);
  if (!out) throw IoError("failed writing '" + path + "'");
}

void load_checkpoint(GazeNet& net, const std::string& path,
                     std::map<std::string, TensorPtr>* optimizer_state) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  const std::string stored = read_header_config(in, path);
  const auto stored_kv_text = stored;

  // Compare per key so the error names the first differing field.
  {
    std::map<std::string, std::string> want, got;
    for (const auto& [k, v] : config_kv(net.cfg)) want[k] = v;
    std::stringstream ss(stored_kv_text);
    std::string line;
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq != std::string::npos) got[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const auto& [k, v] : want) {
      auto it = got.find(k);
      if (it == got.end() || it->second != v)
        throw ConfigError("checkpoint config mismatch at field '" + k + "': model has '" + v +
                          "', checkpoint has '" + (it == got.end() ? "<missing>" : it->second) +
                          "'");
    }
  }

  uint8_t has_opt = 0;
  read_raw(in, has_opt, path);
  auto tensors = named_tensors(net);
  read_tensor_section(in, path, tensors, /*create_missing=*/false);
  if (optimizer_state) {
    optimizer_state->clear();
    if (has_opt) read_tensor_section(in, path, *optimizer_state, /*create_missing=*/true);
  }
}

GazeNetConfig read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_config(read_header_config(in, path));
}

}  // namespace ag
