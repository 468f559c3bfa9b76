#pragma once

#include <optional>
#include <string>

#include "aresgaze/image.hpp"

namespace ag {

/// One dataset row: file reference, subject, ground truth, head pose,
/// raw-frame landmarks and (after normalization) the light level.
struct SampleRecord {
  std::string sample_id;
  int subject_id = 0;
  std::string face_path;
  GazeVector gaze;
  HeadPose head;
  EyeLandmarks landmarks;
  double light = 0.0;
};

/// Deterministic synthetic face-proxy generator configuration. Stands in
/// for the real corpora at desk scale; seed fixes all randomness.
struct SyntheticConfig {
  int subjects = 4;
  int samples_per_subject = 10;
  double gaze_pitch_range = 0.4;  // radians, symmetric about 0
  double gaze_yaw_range = 0.6;
  double head_roll_range = 0.35;  // mobile-head default
  double head_pitch_range = 0.3;
  double head_yaw_range = 0.4;
  double light_min = 0.45;
  double light_max = 1.05;
  int extent = 64;  // square frame size in pixels
  bool mobile_head = true;  // static mode shrinks roll/pose ranges
  uint64_t seed = 0;

  void validate() const;
};

/// Renders one synthetic frame. Pupils are displaced inside the eye disks
/// by c * tan(gaze), c = 0.35 * eye radius; the whole face is rotated by
/// head_roll about the mid-eye point; shades scale with the light
/// multiplier. Landmarks report the true post-rotation eye centers.
struct SyntheticSample {
  ImageBuffer frame;
  SampleRecord record;
};
SyntheticSample render_synthetic_sample(const GazeVector& gaze, const HeadPose& head,
                                        double head_roll, double light_multiplier, int extent,
                                        int subject_id, uint64_t style_seed);

/// Per-sample deterministic generation: sample i of subject s depends only
/// on (cfg.seed, s, i).
SyntheticSample generate_sample(const SyntheticConfig& cfg, int subject, int index);

/// Writes frames (P6) plus manifest.csv into out_dir; returns the records.
std::vector<SampleRecord> generate_dataset(const SyntheticConfig& cfg, const std::string& out_dir);

// -- PNM (P5/P6, maxval 255, binary) --------------------------------------
ImageBuffer read_pnm(const std::string& path);
void write_pnm(const ImageBuffer& img, const std::string& path);

// -- Manifest CSV ----------------------------------------------------------
// Columns: sample_id,subject_id,face_path,gaze_pitch,gaze_yaw,head_pitch,
// head_yaw,leye_x,leye_y,reye_x,reye_y,light. Reals carry 9 significant
// digits; duplicate sample ids are rejected.
void write_manifest(const std::vector<SampleRecord>& records, const std::string& path);
std::vector<SampleRecord> read_manifest(const std::string& path);

}  // namespace ag
