#include "aresgaze/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ag {

const PoseBinCell* PoseBinGrid::find(int pitch_idx, int yaw_idx) const {
  for (const auto& c : cells)
    if (c.pitch_idx == pitch_idx && c.yaw_idx == yaw_idx) return &c;
  return nullptr;
}

PoseBinGrid pose_bin_analysis(const std::vector<EvalRecord>& records, double bin_width) {
  if (!(bin_width > 0.0)) throw ValueError("bin width must be positive");
  if (records.empty()) throw ValueError("no records to bin");
  std::map<std::pair<int, int>, std::pair<int, double>> acc;
  for (const auto& r : records) {
    const int pi = static_cast<int>(std::floor(r.head.pitch / bin_width));
    const int yi = static_cast<int>(std::floor(r.head.yaw / bin_width));
    auto& slot = acc[{pi, yi}];
    slot.first += 1;
    slot.second += r.error_deg;
  }
  PoseBinGrid grid;
  grid.bin_width = bin_width;
  for (const auto& [key, slot] : acc)
    grid.cells.push_back({key.first, key.second, slot.first, slot.second / slot.first});
  return grid;
}

std::vector<PoseBinDiffCell> pose_bin_difference(const PoseBinGrid& a, const PoseBinGrid& b) {
  if (a.bin_width != b.bin_width) throw ValueError("pose grids use different bin widths");
  std::vector<PoseBinDiffCell> out;
  for (const auto& ca : a.cells)
    if (const PoseBinCell* cb = b.find(ca.pitch_idx, ca.yaw_idx))
      out.push_back({ca.pitch_idx, ca.yaw_idx, ca.mean_error_deg - cb->mean_error_deg});
  return out;
}

LightBins light_bin_analysis(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ValueError("no records to bin");
  LightBins out;
  const double width = 256.0 / LightBins::kBins;
  std::array<double, LightBins::kBins> acc{};
  for (const auto& r : records) {
    if (r.light < 0.0 || r.light >= 256.0)
      throw ValueError("light level " + std::to_string(r.light) + " outside [0, 256)");
    const int b = static_cast<int>(r.light / width);
    out.count[static_cast<size_t>(b)] += 1;
    acc[static_cast<size_t>(b)] += r.error_deg;
  }
  for (int b = 0; b < LightBins::kBins; ++b)
    if (out.count[static_cast<size_t>(b)] > 0) {
      out.mean_error_deg[static_cast<size_t>(b)] =
          acc[static_cast<size_t>(b)] / out.count[static_cast<size_t>(b)];
      ++out.populated;
    }
  if (out.populated < 2)
    throw ValueError("light trend needs at least two populated bins, got " +
                     std::to_string(out.populated));

  // OLS slope of mean error against populated bin centers.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int b = 0; b < LightBins::kBins; ++b) {
    if (out.count[static_cast<size_t>(b)] == 0) continue;
    const double x = (b + 0.5) * width;
    const double y = out.mean_error_deg[static_cast<size_t>(b)];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = out.populated;
  out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return out;
}

}  // namespace ag
