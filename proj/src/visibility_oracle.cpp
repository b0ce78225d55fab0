#include <algorithm>
#include <cmath>
#include <numeric>

#include "doda/vss.hpp"

namespace doda {

std::vector<bool> visibility_oracle(const LabeledPointCloud& cloud, const CameraPose& pose,
                                    const FovConfig& fov, double point_radius) {
  if (!(point_radius > 0)) throw Error(ErrorCode::kInvalidArgument, "point radius must be > 0");
  std::vector<bool> mask = visible_range_mask(cloud, pose, fov);
  const std::size_t n = cloud.size();

  // Occluders sorted by range so each query can stop at the farthest possible blocker.
  std::vector<Vec3> offset(n);
  std::vector<double> range(n);
  for (std::size_t i = 0; i < n; ++i) {
    offset[i] = cloud.positions[i] - pose.position;
    range[i] = offset[i].norm();
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return range[a] < range[b] || (range[a] == range[b] && a < b);
  });
  std::vector<Vec3> sorted_offset(n);
  std::vector<double> sorted_range(n);
  for (std::size_t k = 0; k < n; ++k) {
    sorted_offset[k] = offset[order[k]];
    sorted_range[k] = range[order[k]];
  }

  const double r = point_radius;
  const double r2 = r * r;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const double length = range[i];
    const double reach = length - r;
    if (reach <= 0) continue;
    const Vec3 dir = offset[i] / length;
    // |w|^2 = t^2 + perp^2 < reach^2 + r^2 for any blocker
    const double max_range = std::sqrt(reach * reach + r2);
    bool hidden = false;
    for (std::size_t k = 0; k < n && sorted_range[k] < max_range; ++k) {
      if (order[k] == i) continue;
      const Vec3& w = sorted_offset[k];
      const double t = w.dot(dir);
      if (t <= 0 || t >= reach) continue;
      if (w.squaredNorm() - t * t < r2) {
        hidden = true;
        break;
      }
    }
    if (hidden) mask[i] = false;
  }
  return mask;
}

}  // namespace doda
