#pragma once

#include <array>

#include "aresgaze/errors.hpp"

namespace ag {

/// Gaze direction as pitch/yaw angle pair in radians.
struct GazeVector {
  double pitch = 0.0;
  double yaw = 0.0;
};

/// Head orientation, pitch/yaw in radians.
struct HeadPose {
  double pitch = 0.0;
  double yaw = 0.0;
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

/// Eye centers in source-frame pixel coordinates. The subject's anatomical
/// left eye appears on image right under mirror-free capture; stored as
/// annotated, no mirroring applied.
struct EyeLandmarks {
  double left_x = 0.0, left_y = 0.0;    // image-right eye
  double right_x = 0.0, right_y = 0.0;  // image-left eye

  double distance() const;
};

/// The parameters and composed 2x3 matrix M = [R T] that cancels head roll
/// and standardizes scale so eye centers land at canonical positions in a
/// Z x Z output image.
struct AffineNormalization {
  double alpha = 0.0;  // inter-eye roll angle
  double scale = 0.0;  // S
  int out_size = 0;    // Z
  double a = 0.0, b = 0.0;   // a = S cos(alpha), b = S sin(alpha)
  double go_x = 0.0, go_y = 0.0;  // gaze origin: mid-eye point in source frame
  double tx = 0.0, ty = 0.0;      // canonical target of the gaze origin
  // m[row][col], columns 0-1 rotation/scale, column 2 translation
  std::array<std::array<double, 3>, 2> m{};

  void apply(double x, double y, double& ox, double& oy) const {
    ox = m[0][0] * x + m[0][1] * y + m[0][2];
    oy = m[1][0] * x + m[1][1] * y + m[1][2];
  }
};

/// Pitch/yaw -> unit 3-vector. (0,0) looks straight at the camera (-z).
Vec3 pitchyaw_to_vec3(const GazeVector& g);

/// Inverse of pitchyaw_to_vec3; throws ValueError on the zero vector.
GazeVector vec3_to_pitchyaw(const Vec3& v);

/// Angle between two gaze directions in degrees.
double angular_error_deg(const GazeVector& pred, const GazeVector& gt);

/// Builds the normalization from eye landmarks for a Z x Z output: the
/// target inter-eye distance is 0.4*Z, eye centers map to (0.7Z, 0.35Z)
/// and (0.3Z, 0.35Z), the mid-eye point to (0.5Z, 0.35Z).
AffineNormalization build_normalization(const EyeLandmarks& lm, int Z);

}  // namespace ag
