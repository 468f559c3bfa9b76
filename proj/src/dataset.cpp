#include "aresgaze/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace ag {

void SyntheticConfig::validate() const {
  if (subjects < 1 || samples_per_subject < 1)
    throw ValueError("synthetic config needs subjects >= 1 and samples >= 1");
  if (gaze_pitch_range <= 0.0 || gaze_pitch_range > M_PI / 2 || gaze_yaw_range <= 0.0 ||
      gaze_yaw_range > M_PI / 2)
    throw ValueError("gaze ranges must lie in (0, pi/2]");
  if (head_roll_range < 0.0 || head_roll_range > M_PI / 2)
    throw ValueError("head roll range must lie in [0, pi/2]");
  if (light_min <= 0.0 || light_max < light_min) throw ValueError("invalid light multiplier range");
  if (extent < 32) throw ValueError("frame extent too small to fit the face proxy");
}

namespace {

// splitmix64: cheap deterministic stream derivation.
uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e91bULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct SubjectStyle {
  double skin, bg, eye_sep, face_rx, face_ry;
};

SubjectStyle subject_style(uint64_t seed, int subject) {
  std::mt19937_64 rng(mix(seed ^ mix(0x5157u + static_cast<uint64_t>(subject))));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SubjectStyle s;
  s.skin = 120.0 + 80.0 * u(rng);
  s.bg = 20.0 + 40.0 * u(rng);
  s.eye_sep = 0.17 + 0.04 * u(rng);
  s.face_rx = 0.34 + 0.05 * u(rng);
  s.face_ry = 0.42 + 0.05 * u(rng);
  return s;
}

}  // namespace

SyntheticSample render_synthetic_sample(const GazeVector& gaze, const HeadPose& head,
                                        double head_roll, double light_multiplier, int extent,
                                        int subject_id, uint64_t style_seed) {
  if (extent < 32) throw ValueError("frame extent too small to fit the face proxy");
  const SubjectStyle st = subject_style(style_seed, subject_id);
  const double E = extent;
  const double gox = 0.5 * E, goy = 0.42 * E;  // mid-eye point, rotation pivot
  const double sep = st.eye_sep * E;
  const double eye_r = 0.07 * E;
  const double pupil_r = 0.4 * eye_r;
  const double c = 0.35 * eye_r;
  const double cn = 0.12 * E;  // nose-tip displacement per tan(head angle)

  // Canonical (unrotated) geometry; left eye sits on image right.
  const double lx = gox + sep, rx = gox - sep, ey = goy;
  const double plx = lx + c * std::tan(gaze.yaw), ply = ey + c * std::tan(gaze.pitch);
  const double prx = rx + c * std::tan(gaze.yaw), pry = ey + c * std::tan(gaze.pitch);
  const double nose_top_y = goy + 0.08 * E;
  const double nose_bx = gox + cn * std::tan(head.yaw);
  const double nose_by = goy + 0.26 * E + cn * std::tan(head.pitch);
  const double nose_hw = 0.05 * E;

  const double cr = std::cos(head_roll), sr = std::sin(head_roll);
  auto shade_at = [&](double px, double py) -> double {
    // Rotate the sample point back into the canonical frame.
    const double dx = px - gox, dy = py - goy;
    const double x = gox + cr * dx + sr * dy;
    const double y = goy - sr * dx + cr * dy;

    double v = st.bg;
    const double fx = (x - gox) / (st.face_rx * E), fy = (y - 0.5 * E) / (st.face_ry * E);
    if (fx * fx + fy * fy <= 1.0) v = st.skin;
    // nose wedge: triangle (gox, nose_top_y) .. base centered at (nose_bx, nose_by)
    {
      const double x0 = gox, y0 = nose_top_y;
      const double x1 = nose_bx - nose_hw, y1 = nose_by;
      const double x2 = nose_bx + nose_hw, y2 = nose_by;
      const double d0 = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
      const double d1 = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
      const double d2 = (x0 - x2) * (y - y2) - (y0 - y2) * (x - x2);
      const bool neg = d0 < 0 || d1 < 0 || d2 < 0, pos = d0 > 0 || d1 > 0 || d2 > 0;
      if (!(neg && pos)) v = st.skin * 0.75;
    }
    auto in_disk = [&](double cx, double cy, double r) {
      return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
    };
    if (in_disk(lx, ey, eye_r) || in_disk(rx, ey, eye_r)) v = 235.0;
    if (in_disk(plx, ply, pupil_r) || in_disk(prx, pry, pupil_r)) v = 25.0;
    return v;
  };

  SyntheticSample s;
  s.frame = ImageBuffer(extent, extent, 3);
  for (int y = 0; y < extent; ++y)
    for (int x = 0; x < extent; ++x) {
      // 2x2 subpixel coverage for smooth shape edges.
      double v = 0.0;
      for (int sy2 = 0; sy2 < 2; ++sy2)
        for (int sx2 = 0; sx2 < 2; ++sx2)
          v += shade_at(x + 0.25 + 0.5 * sx2, y + 0.25 + 0.5 * sy2);
      v = std::clamp(v * 0.25 * light_multiplier, 0.0, 255.0);
      s.frame.at(x, y, 0) = static_cast<uint8_t>(std::lround(v));
      s.frame.at(x, y, 1) = static_cast<uint8_t>(std::lround(v * 0.92));
      s.frame.at(x, y, 2) = static_cast<uint8_t>(std::lround(v * 0.82));
    }

  // Landmarks: eye centers rotated forward by head_roll about the pivot.
  auto fwd = [&](double x, double y, double& ox, double& oy) {
    const double dx = x - gox, dy = y - goy;
    ox = gox + cr * dx - sr * dy;
    oy = goy + sr * dx + cr * dy;
  };
  s.record.subject_id = subject_id;
  s.record.gaze = gaze;
  s.record.head = head;
  fwd(lx, ey, s.record.landmarks.left_x, s.record.landmarks.left_y);
  fwd(rx, ey, s.record.landmarks.right_x, s.record.landmarks.right_y);
  return s;
}

SyntheticSample generate_sample(const SyntheticConfig& cfg, int subject, int index) {
  cfg.validate();
  std::mt19937_64 rng(mix(cfg.seed ^ mix((static_cast<uint64_t>(subject) << 24) ^
                                         static_cast<uint64_t>(index) ^ 0xda7aULL)));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const double pose_scale = cfg.mobile_head ? 1.0 : 0.15;
  GazeVector gaze{cfg.gaze_pitch_range * u(rng), cfg.gaze_yaw_range * u(rng)};
  HeadPose head{cfg.head_pitch_range * pose_scale * u(rng),
                cfg.head_yaw_range * pose_scale * u(rng)};
  const double roll = cfg.head_roll_range * pose_scale * u(rng);
  const double light = cfg.light_min + (cfg.light_max - cfg.light_min) * u01(rng);

  SyntheticSample s =
      render_synthetic_sample(gaze, head, roll, light, cfg.extent, subject, cfg.seed);
  char id[32];
  std::snprintf(id, sizeof(id), "s%02d_%04d", subject, index);
  s.record.sample_id = id;
  s.record.light = mean_intensity(s.frame);
  return s;
}

std::vector<SampleRecord> generate_dataset(const SyntheticConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());

  std::vector<SampleRecord> records;
  for (int s = 0; s < cfg.subjects; ++s)
    for (int i = 0; i < cfg.samples_per_subject; ++i) {
      SyntheticSample sample = generate_sample(cfg, s, i);
      const std::string name = sample.record.sample_id + ".ppm";
      write_pnm(sample.frame, out_dir + "/" + name);
      sample.record.face_path = name;
      records.push_back(sample.record);
    }
  write_manifest(records, out_dir + "/manifest.csv");
  return records;
}

// -- PNM -------------------------------------------------------------------

namespace {

int read_pnm_token(std::istream& in, const std::string& path, size_t& offset) {
  // Skips whitespace and '#' comments, then parses a nonnegative integer.
  int ch;
  while ((ch = in.get()) != EOF) {
    ++offset;
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') ++offset;
      ++offset;
      continue;
    }
    if (!std::isspace(ch)) break;
  }
  if (ch == EOF || !std::isdigit(ch))
    throw ParseError(path + ": expected integer in header at byte offset " +
                     std::to_string(offset ? offset - 1 : 0));
  long val = ch - '0';
  while ((ch = in.peek()) != EOF && std::isdigit(ch)) {
    in.get();
    ++offset;
    val = val * 10 + (ch - '0');
    if (val > 1 << 24) throw ParseError(path + ": header value out of range");
  }
  return static_cast<int>(val);
}

}  // namespace

ImageBuffer read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  size_t offset = 0;
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  offset = 2;
  int channels;
  if (m0 == 'P' && m1 == '5') channels = 1;
  else if (m0 == 'P' && m1 == '6') channels = 3;
  else throw ParseError(path + ": unsupported magic at byte offset 0 (want P5 or P6)");

  const int w = read_pnm_token(in, path, offset);
  const int h = read_pnm_token(in, path, offset);
  const int maxval = read_pnm_token(in, path, offset);
  if (maxval != 255)
    throw ParseError(path + ": unsupported maxval " + std::to_string(maxval) +
                     " at byte offset " + std::to_string(offset) + " (only 255)");
  const int sep = in.get();  // single whitespace byte before payload
  ++offset;
  if (sep == EOF || !std::isspace(sep))
    throw ParseError(path + ": missing whitespace before payload at byte offset " +
                     std::to_string(offset - 1));
  if (w < 1 || h < 1) throw ParseError(path + ": non-positive image dimensions");

  ImageBuffer img(w, h, channels);
  in.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (static_cast<size_t>(in.gcount()) != img.px.size())
    throw ParseError(path + ": truncated payload at byte offset " +
                     std::to_string(offset + static_cast<size_t>(in.gcount())));
  return img;
}

void write_pnm(const ImageBuffer& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

// -- Manifest --------------------------------------------------------------

namespace {

const char* kManifestHeader =
    "sample_id,subject_id,face_path,gaze_pitch,gaze_yaw,head_pitch,head_yaw,"
    "leye_x,leye_y,reye_x,reye_y,light";

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double parse_real(const std::string& s, int line, const std::string& path) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line) + ": unparsable number '" + s + "'");
  }
}

}  // namespace

void write_manifest(const std::vector<SampleRecord>& records, const std::string& path) {
  std::set<std::string> ids;
  for (const auto& r : records)
    if (!ids.insert(r.sample_id).second)
      throw ValueError("duplicate sample_id '" + r.sample_id + "' in manifest");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << kManifestHeader << "\n";
  for (const auto& r : records) {
    out << r.sample_id << "," << r.subject_id << "," << r.face_path << ","
        << fmt_real(r.gaze.pitch) << "," << fmt_real(r.gaze.yaw) << "," << fmt_real(r.head.pitch)
        << "," << fmt_real(r.head.yaw) << "," << fmt_real(r.landmarks.left_x) << ","
        << fmt_real(r.landmarks.left_y) << "," << fmt_real(r.landmarks.right_x) << ","
        << fmt_real(r.landmarks.right_y) << "," << fmt_real(r.light) << "\n";
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<SampleRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header row");
  if (line != kManifestHeader)
    throw ParseError(path + ":1: unexpected header (want '" + std::string(kManifestHeader) + "')");

  std::vector<SampleRecord> records;
  std::set<std::string> ids;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 12)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 12 columns, got " +
                       std::to_string(cells.size()));
    SampleRecord r;
    r.sample_id = cells[0];
    if (!ids.insert(r.sample_id).second)
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate sample_id '" +
                       r.sample_id + "'");
    r.subject_id = static_cast<int>(parse_real(cells[1], lineno, path));
    r.face_path = cells[2];
    r.gaze.pitch = parse_real(cells[3], lineno, path);
    r.gaze.yaw = parse_real(cells[4], lineno, path);
    r.head.pitch = parse_real(cells[5], lineno, path);
    r.head.yaw = parse_real(cells[6], lineno, path);
    r.landmarks.left_x = parse_real(cells[7], lineno, path);
    r.landmarks.left_y = parse_real(cells[8], lineno, path);
    r.landmarks.right_x = parse_real(cells[9], lineno, path);
    r.landmarks.right_y = parse_real(cells[10], lineno, path);
    r.light = parse_real(cells[11], lineno, path);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace ag
