#pragma once

#include "aresgaze/training.hpp"

namespace ag {

/// Mean angular error per (head pitch, head yaw) cell. Bin index is
/// floor(angle / bin_width), so negative angles land in negative indices.
struct PoseBinCell {
  int pitch_idx = 0;
  int yaw_idx = 0;
  int count = 0;
  double mean_error_deg = 0.0;
};

struct PoseBinGrid {
  double bin_width = 0.20;  // radians
  std::vector<PoseBinCell> cells;  // sorted by (pitch_idx, yaw_idx), populated only

  const PoseBinCell* find(int pitch_idx, int yaw_idx) const;
};

PoseBinGrid pose_bin_analysis(const std::vector<EvalRecord>& records, double bin_width = 0.20);

/// Per-cell error difference a - b over cells populated in both grids.
struct PoseBinDiffCell {
  int pitch_idx = 0;
  int yaw_idx = 0;
  double diff_deg = 0.0;
};
std::vector<PoseBinDiffCell> pose_bin_difference(const PoseBinGrid& a, const PoseBinGrid& b);

/// Mean error across ten equal light-level bins covering [0, 256), plus
/// the ordinary-least-squares slope of mean error against bin centers.
struct LightBins {
  static constexpr int kBins = 10;
  std::array<int, kBins> count{};
  std::array<double, kBins> mean_error_deg{};
  double slope = 0.0;  // degrees of error per light unit
  int populated = 0;
};

LightBins light_bin_analysis(const std::vector<EvalRecord>& records);

}  // namespace ag
