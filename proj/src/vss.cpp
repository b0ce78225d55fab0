#include "doda/vss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

namespace doda {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
// Angular slack so that points exactly on an FOV boundary are kept.
constexpr double kAngleSlackDeg = 1e-9;

}  // namespace

std::string_view to_string(ViewingMode mode) {
  switch (mode) {
    case ViewingMode::kFixed: return "fixed";
    case ViewingMode::kParallel: return "parallel";
    case ViewingMode::kPerspective: return "perspective";
  }
  return "unknown";
}

ViewingMode parse_viewing_mode(std::string_view name) {
  if (name == "fixed") return ViewingMode::kFixed;
  if (name == "parallel") return ViewingMode::kParallel;
  if (name == "perspective") return ViewingMode::kPerspective;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown viewing mode '{}'", name));
}

void FovConfig::validate() const {
  if (!(alpha_h > 0 && alpha_h <= 360)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("alpha_h={} not in (0, 360]", alpha_h));
  }
  if (!(alpha_v > 0 && alpha_v <= 180)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("alpha_v={} not in (0, 180]", alpha_v));
  }
  if (mode == ViewingMode::kParallel && !(parallel_reference_distance > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "parallel mode needs d_ref > 0");
  }
}

void VssConfig::validate() const {
  fov.validate();
  if (n_cameras < 1) throw Error(ErrorCode::kInvalidArgument, "n_v must be >= 1");
  if (!(bev_cell > 0)) throw Error(ErrorCode::kInvalidArgument, "bev cell size must be > 0");
  if (!(camera_clearance >= 0)) throw Error(ErrorCode::kInvalidArgument, "clearance must be >= 0");
  if (!(theta_bin > 0)) throw Error(ErrorCode::kInvalidArgument, "theta_bin must be > 0");
  if (!(depth_tolerance >= 0)) throw Error(ErrorCode::kInvalidArgument, "eps_d must be >= 0");
  if (!(jitter >= 0)) throw Error(ErrorCode::kInvalidArgument, "delta_p must be >= 0");
}

Eigen::Vector2d BevGrid::cell_center(int ix, int iy) const {
  return origin + cell_size * Eigen::Vector2d(ix + 0.5, iy + 0.5);
}

Eigen::Vector2i BevGrid::cell_of(double x, double y) const {
  const int ix = static_cast<int>(std::floor((x - origin.x()) / cell_size));
  const int iy = static_cast<int>(std::floor((y - origin.y()) / cell_size));
  return {std::clamp(ix, 0, nx - 1), std::clamp(iy, 0, ny - 1)};
}

std::size_t BevGrid::free_count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), CellState::kFree));
}

CameraFrame camera_frame(const CameraPose& pose) {
  const Vec3 dir = pose.look_at - pose.position;
  if (dir.norm() == 0.0) throw Error(ErrorCode::kDegeneratePose, "look-at point equals camera position");
  CameraFrame f;
  f.forward = dir.normalized();
  const Vec3 up = Vec3::UnitZ() - f.forward.z() * f.forward;
  if (up.norm() < 1e-12) {
    throw Error(ErrorCode::kDegeneratePose, "view direction is parallel to the vertical axis");
  }
  f.up = up.normalized();
  f.right = f.forward.cross(f.up);
  return f;
}

BevGrid compute_free_space_bev(const LabeledPointCloud& cloud, const VssConfig& config,
                               const StructuralClasses& structural) {
  if (cloud.empty()) throw Error(ErrorCode::kEmptyInput, "free space of an empty cloud");
  if (!(config.bev_cell > 0)) throw Error(ErrorCode::kInvalidArgument, "bev cell size must be > 0");
  const Aabb box = aabb_of(cloud);
  BevGrid bev;
  bev.origin = box.min.head<2>();
  bev.cell_size = config.bev_cell;
  const Vec3 extent = box.extent();
  bev.nx = std::max(1, static_cast<int>(std::ceil(extent.x() / config.bev_cell)));
  bev.ny = std::max(1, static_cast<int>(std::ceil(extent.y() / config.bev_cell)));
  bev.cells.assign(static_cast<std::size_t>(bev.nx) * static_cast<std::size_t>(bev.ny),
                   CellState::kFree);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Label l = cloud.labels[i];
    if (l == structural.floor || l == structural.ceiling) continue;
    const auto c = bev.cell_of(cloud.positions[i].x(), cloud.positions[i].y());
    bev.cells[static_cast<std::size_t>(c.x() * bev.ny + c.y())] = CellState::kBlockedFurniture;
  }
  for (int ix = 0; ix < bev.nx; ++ix) {
    for (int iy = 0; iy < bev.ny; ++iy) {
      if (ix == 0 || iy == 0 || ix == bev.nx - 1 || iy == bev.ny - 1) {
        bev.cells[static_cast<std::size_t>(ix * bev.ny + iy)] = CellState::kBlockedBoundary;
      }
    }
  }
  if (bev.free_count() == 0) throw Error(ErrorCode::kNoFreeSpace, "no free bird's-eye-view cell");
  return bev;
}

std::vector<Eigen::Vector2i> placeable_cells(const BevGrid& bev, double clearance) {
  std::vector<Eigen::Vector2i> out;
  const int reach = static_cast<int>(std::ceil(clearance / bev.cell_size)) + 1;
  for (int ix = 0; ix < bev.nx; ++ix) {
    for (int iy = 0; iy < bev.ny; ++iy) {
      if (!bev.is_free(ix, iy)) continue;
      const Eigen::Vector2d c = bev.cell_center(ix, iy);
      bool clear = true;
      for (int jx = std::max(0, ix - reach); clear && jx <= std::min(bev.nx - 1, ix + reach); ++jx) {
        for (int jy = std::max(0, iy - reach); jy <= std::min(bev.ny - 1, iy + reach); ++jy) {
          if (bev.is_free(jx, jy)) continue;
          const Eigen::Vector2d lo = bev.origin + bev.cell_size * Eigen::Vector2d(jx, jy);
          const Eigen::Vector2d hi = lo + Eigen::Vector2d::Constant(bev.cell_size);
          const Eigen::Vector2d nearest = c.cwiseMax(lo).cwiseMin(hi);
          if ((nearest - c).norm() < clearance) {
            clear = false;
            break;
          }
        }
      }
      if (clear) out.emplace_back(ix, iy);
    }
  }
  return out;
}

std::vector<CameraPose> sample_camera_poses(const LabeledPointCloud& cloud, const BevGrid& bev,
                                            const VssConfig& config,
                                            const StructuralClasses& structural, RandomStream& rng) {
  const auto cells = placeable_cells(bev, config.camera_clearance);
  if (cells.empty()) throw Error(ErrorCode::kNoFreeSpace, "no free cell clears the camera radius");
  std::vector<std::size_t> walls;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.labels[i] == structural.wall) walls.push_back(i);
  }
  if (walls.empty()) throw Error(ErrorCode::kNoWallPoints, "scene has no wall-labeled points");
  const Aabb box = aabb_of(cloud);
  const double z_lo = box.min.z() + 0.5 * (box.max.z() - box.min.z());
  const double z_hi = box.max.z();
  std::vector<CameraPose> poses;
  poses.reserve(static_cast<std::size_t>(config.n_cameras));
  for (int k = 0; k < config.n_cameras; ++k) {
    const auto& cell = cells[rng.index(cells.size())];
    const Eigen::Vector2d xy = bev.cell_center(cell.x(), cell.y());
    const double z = rng.uniform(z_lo, z_hi);
    const Vec3 h = cloud.positions[walls[rng.index(walls.size())]];
    poses.push_back({Vec3(xy.x(), xy.y(), z), h});
  }
  return poses;
}

std::vector<bool> visible_range_mask(const LabeledPointCloud& cloud, const CameraPose& pose,
                                     const FovConfig& fov) {
  const CameraFrame frame = camera_frame(pose);
  const double half_h = 0.5 * fov.alpha_h;
  const double half_v = 0.5 * fov.alpha_v;
  // tan bounds; a half-angle of 90 degrees or more leaves that axis unbounded
  const bool bound_h = half_h < 90.0;
  const bool bound_v = half_v < 90.0;
  const double tan_h = bound_h ? std::tan(half_h * kDeg) : 0.0;
  const double tan_v = bound_v ? std::tan(half_v * kDeg) : 0.0;
  const double d_ref = fov.parallel_reference_distance;

  std::vector<bool> mask(cloud.size(), false);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 q = cloud.positions[i] - pose.position;
    const double qf = q.dot(frame.forward);
    const double qr = q.dot(frame.right);
    const double qu = q.dot(frame.up);
    bool in = false;
    switch (fov.mode) {
      case ViewingMode::kFixed: {
        const double az = std::atan2(qr, qf) / kDeg;
        const double el = std::atan2(qu, std::hypot(qf, qr)) / kDeg;
        in = std::abs(az) <= half_h + kAngleSlackDeg && std::abs(el) <= half_v + kAngleSlackDeg;
        break;
      }
      case ViewingMode::kPerspective:
        in = qf > 0 && (!bound_h || std::abs(qr) <= tan_h * qf) &&
             (!bound_v || std::abs(qu) <= tan_v * qf);
        break;
      case ViewingMode::kParallel:
        in = qf > 0 && (!bound_h || std::abs(qr) <= d_ref * tan_h) &&
             (!bound_v || std::abs(qu) <= d_ref * tan_v);
        break;
    }
    mask[i] = in;
  }
  return mask;
}

std::vector<bool> visible_points(const LabeledPointCloud& cloud, const CameraPose& pose,
                                 const VssConfig& config) {
  if (!(config.theta_bin > 0)) throw Error(ErrorCode::kInvalidArgument, "theta_bin must be > 0");
  std::vector<bool> mask = visible_range_mask(cloud, pose, config.fov);
  const CameraFrame frame = camera_frame(pose);
  const double bin = config.theta_bin;
  const int n_az = static_cast<int>(std::ceil(360.0 / bin));
  const int n_el = static_cast<int>(std::ceil(180.0 / bin)) + 1;
  const auto bin_id = [n_el](int ia, int ie) {
    return static_cast<std::size_t>(ia) * static_cast<std::size_t>(n_el) +
           static_cast<std::size_t>(ie);
  };
  const std::size_t n_bins = static_cast<std::size_t>(n_az) * static_cast<std::size_t>(n_el);

  struct Projected {
    std::size_t index;
    int ia;
    int ie;
    double range;
    Vec3 direction;  // unit, camera frame (forward, right, up)
  };
  std::vector<Projected> projected;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3 q = cloud.positions[i] - pose.position;
    const Vec3 local(q.dot(frame.forward), q.dot(frame.right), q.dot(frame.up));
    const double range = local.norm();
    if (range == 0.0) continue;  // the camera center itself stays visible
    const double az = std::atan2(local.y(), local.x()) / kDeg;
    const double el = std::atan2(local.z(), std::hypot(local.x(), local.y())) / kDeg;
    const int ia = std::clamp(static_cast<int>(std::floor((az + 180.0) / bin)), 0, n_az - 1);
    const int ie = std::clamp(static_cast<int>(std::floor((el + 90.0) / bin)), 0, n_el - 1);
    projected.push_back({i, ia, ie, range, local / range});
  }

  if (config.splat_radius <= 0) {
    std::vector<double> nearest(n_bins, std::numeric_limits<double>::infinity());
    for (const auto& p : projected) {
      double& slot = nearest[bin_id(p.ia, p.ie)];
      slot = std::min(slot, p.range);
    }
    for (const auto& p : projected) {
      mask[p.index] = p.range <= nearest[bin_id(p.ia, p.ie)] + config.depth_tolerance;
    }
    return mask;
  }

  // Splatted buffer: every point registers in all bins its sphere's cone can touch;
  // a point's depth reference is the nearest registered point whose cone contains
  // the point's exact direction.
  const auto for_each_covered_bin = [&](const Projected& p, auto&& visit) {
    const double half_deg = std::asin(std::min(1.0, config.splat_radius / p.range)) / kDeg;
    const int reach_el = static_cast<int>(std::ceil(half_deg / bin)) + 1;
    for (int de = -reach_el; de <= reach_el; ++de) {
      const int je = p.ie + de;
      if (je < 0 || je >= n_el) continue;
      const double el_lo = je * bin - 90.0;
      const double widest = std::max(std::abs(el_lo), std::abs(el_lo + bin));
      const double cos_el = std::cos(std::min(widest, 89.9) * kDeg);
      const int reach_az =
          std::min(n_az / 2, static_cast<int>(std::ceil(half_deg / cos_el / bin)) + 1);
      for (int da = -reach_az; da <= reach_az; ++da) {
        visit(bin_id(((p.ia + da) % n_az + n_az) % n_az, je));
      }
    }
  };
  std::vector<std::uint32_t> offsets(n_bins + 1, 0);
  for (const auto& p : projected) for_each_covered_bin(p, [&](std::size_t b) { ++offsets[b + 1]; });
  for (std::size_t b = 0; b < n_bins; ++b) offsets[b + 1] += offsets[b];
  std::vector<std::uint32_t> entries(offsets.back());
  {
    std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
    for (std::size_t k = 0; k < projected.size(); ++k) {
      for_each_covered_bin(projected[k], [&](std::size_t b) {
        entries[cursor[b]++] = static_cast<std::uint32_t>(k);
      });
    }
  }
  std::vector<double> cos_half(projected.size());
  for (std::size_t k = 0; k < projected.size(); ++k) {
    const double s = std::min(1.0, config.splat_radius / projected[k].range);
    cos_half[k] = std::sqrt(1.0 - s * s);
  }
  const double r2 = config.splat_radius * config.splat_radius;
  for (const auto& p : projected) {
    const std::size_t b = bin_id(p.ia, p.ie);
    // depth at which the ray through p first meets a splat sphere
    double nearest = p.range;
    for (std::uint32_t e = offsets[b]; e < offsets[b + 1]; ++e) {
      const Projected& q = projected[entries[e]];
      const double cos_angle = q.direction.dot(p.direction);
      if (cos_angle < cos_half[entries[e]]) continue;
      const double along = q.range * cos_angle;
      const double perp2 = std::max(0.0, q.range * q.range - along * along);
      const double entry = along - std::sqrt(std::max(0.0, r2 - perp2));
      nearest = std::min(nearest, entry);
    }
    mask[p.index] = p.range <= nearest + config.depth_tolerance;
  }
  return mask;
}

std::vector<bool> union_visibility(const LabeledPointCloud& cloud,
                                   const std::vector<CameraPose>& poses, const VssConfig& config) {
  std::vector<bool> visible(cloud.size(), false);
  for (const auto& pose : poses) {
    const auto mask = visible_points(cloud, pose, config);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) visible[i] = true;
    }
  }
  return visible;
}

ScanResult simulate_scan(const LabeledPointCloud& cloud, const VssConfig& config,
                         const StructuralClasses& structural, RandomStream& rng) {
  config.validate();
  const BevGrid bev = compute_free_space_bev(cloud, config, structural);
  ScanResult result;
  result.poses = sample_camera_poses(cloud, bev, config, structural, rng);
  result.indices = mask_to_indices(union_visibility(cloud, result.poses, config));
  result.cloud = select(cloud, result.indices);
  return result;
}

LabeledPointCloud jitter_points(const LabeledPointCloud& cloud, double half_range,
                                RandomStream& rng) {
  if (!(half_range >= 0)) throw Error(ErrorCode::kInvalidArgument, "jitter half-range must be >= 0");
  LabeledPointCloud out = cloud;
  if (half_range == 0.0) return out;
  for (Vec3& p : out.positions) {
    for (int a = 0; a < 3; ++a) p[a] += rng.symmetric(half_range);
  }
  return out;
}

LabeledPointCloud virtual_scan(const LabeledPointCloud& cloud, const VssConfig& config,
                               const StructuralClasses& structural, RandomStream& rng) {
  ScanResult scan = simulate_scan(cloud, config, structural, rng);
  return jitter_points(scan.cloud, config.jitter, rng);
}

}  // namespace doda
