#include "aresgaze/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace ag {

double EyeLandmarks::distance() const {
  return std::hypot(left_x - right_x, left_y - right_y);
}

Vec3 pitchyaw_to_vec3(const GazeVector& g) {
  Vec3 v;
  v.x = -std::cos(g.pitch) * std::sin(g.yaw);
  v.y = -std::sin(g.pitch);
  v.z = -std::cos(g.pitch) * std::cos(g.yaw);
  return v;
}

GazeVector vec3_to_pitchyaw(const Vec3& v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  if (n <= 0.0) throw ValueError("cannot convert the zero vector to pitch/yaw");
  GazeVector g;
  g.pitch = -std::asin(std::clamp(v.y / n, -1.0, 1.0));
  g.yaw = std::atan2(-v.x, -v.z);
  return g;
}

double angular_error_deg(const GazeVector& pred, const GazeVector& gt) {
  const Vec3 a = pitchyaw_to_vec3(pred), b = pitchyaw_to_vec3(gt);
  const double dot = std::clamp(a.x * b.x + a.y * b.y + a.z * b.z, -1.0, 1.0);
  return std::acos(dot) * 180.0 / M_PI;
}

AffineNormalization build_normalization(const EyeLandmarks& lm, int Z) {
  if (Z < 32) throw ValueError("normalized image size must be >= 32 px");
  const double D = lm.distance();
  if (D <= 0.0) throw ValueError("degenerate landmarks: coincident eye centers");

  AffineNormalization n;
  n.out_size = Z;
  // Angle of the right->left eye line (image-left eye to image-right eye).
  n.alpha = std::atan2(lm.left_y - lm.right_y, lm.left_x - lm.right_x);
  // Target inter-eye distance is 40% of the image width.
  n.scale = Z * 0.4 / D;
  n.a = n.scale * std::cos(n.alpha);
  n.b = n.scale * std::sin(n.alpha);
  n.go_x = 0.5 * (lm.left_x + lm.right_x);
  n.go_y = 0.5 * (lm.left_y + lm.right_y);
  n.tx = Z * 0.5;
  n.ty = Z * 0.35;

  n.m[0][0] = n.a;
  n.m[0][1] = n.b;
  n.m[1][0] = -n.b;
  n.m[1][1] = n.a;
  n.m[0][2] = (1.0 - n.a) * n.go_x - n.b * n.go_y + (n.tx - n.go_x);
  n.m[1][2] = n.b * n.go_x + (1.0 - n.a) * n.go_y + (n.ty - n.go_y);
  return n;
}

}  // namespace ag
