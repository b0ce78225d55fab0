#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "doda/core.hpp"

namespace doda {

// Labels that do not block camera placement (floor, ceiling) and the look-at class (wall).
struct StructuralClasses {
  Label floor = 0;
  Label wall = 1;
  Label ceiling = 2;
};

enum class CellState : std::uint8_t { kFree, kBlockedFurniture, kBlockedBoundary };

// Bird's-eye-view occupancy over the cloud's x-y bounding box.
struct BevGrid {
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double cell_size = 0.25;
  int nx = 0;
  int ny = 0;
  std::vector<CellState> cells;  // row-major, index = ix * ny + iy

  CellState at(int ix, int iy) const { return cells[static_cast<std::size_t>(ix * ny + iy)]; }
  bool is_free(int ix, int iy) const { return at(ix, iy) == CellState::kFree; }
  Eigen::Vector2d cell_center(int ix, int iy) const;
  // Half-open binning, the last row/column also takes points on the max edge.
  Eigen::Vector2i cell_of(double x, double y) const;
  std::size_t free_count() const;
};

enum class ViewingMode { kFixed, kParallel, kPerspective };

std::string_view to_string(ViewingMode mode);
ViewingMode parse_viewing_mode(std::string_view name);

struct FovConfig {
  double alpha_h = 180.0;  // degrees
  double alpha_v = 90.0;   // degrees
  ViewingMode mode = ViewingMode::kFixed;
  double parallel_reference_distance = 2.0;  // meters, parallel mode only

  void validate() const;
};

struct VssConfig {
  int n_cameras = 4;
  FovConfig fov;
  double bev_cell = 0.25;
  double camera_clearance = 0.1;
  double theta_bin = 0.5;  // degrees
  double depth_tolerance = 0.05;
  // Angular footprint of each point in the depth buffer; 0 bins point centers only.
  double splat_radius = 0.02;
  double jitter = 0.01;  // delta_p, half-range of the uniform displacement

  void validate() const;
};

struct CameraPose {
  Vec3 position = Vec3::Zero();
  Vec3 look_at = Vec3::UnitX();

  Vec3 forward() const { return (look_at - position).normalized(); }
};

// Orthonormal camera basis: forward, up (world z made orthogonal to forward), right = forward x up.
struct CameraFrame {
  Vec3 forward;
  Vec3 up;
  Vec3 right;
};

// Throws kDegeneratePose when the view direction is (anti)parallel to world z or h == v.
CameraFrame camera_frame(const CameraPose& pose);

BevGrid compute_free_space_bev(const LabeledPointCloud& cloud, const VssConfig& config,
                               const StructuralClasses& structural);

// Free cells whose center is at least `clearance` away from every blocked cell.
std::vector<Eigen::Vector2i> placeable_cells(const BevGrid& bev, double clearance);

std::vector<CameraPose> sample_camera_poses(const LabeledPointCloud& cloud, const BevGrid& bev,
                                            const VssConfig& config,
                                            const StructuralClasses& structural, RandomStream& rng);

std::vector<bool> visible_range_mask(const LabeledPointCloud& cloud, const CameraPose& pose,
                                     const FovConfig& fov);

// Spherical depth buffer: points are binned by (azimuth, elevation) in the camera frame and
// kept when within depth_tolerance of the nearest point of their bin.
std::vector<bool> visible_points(const LabeledPointCloud& cloud, const CameraPose& pose,
                                 const VssConfig& config);

// Exact O(n^2) reference: p is hidden when another point, modeled as a sphere of
// radius point_radius, meets the segment (v, p) with its center projecting to a
// distance in (0, |p - v| - point_radius) along the ray. Same FOV mask as visible_points.
std::vector<bool> visibility_oracle(const LabeledPointCloud& cloud, const CameraPose& pose,
                                    const FovConfig& fov, double point_radius);

struct ScanResult {
  LabeledPointCloud cloud;            // visible subset, input order preserved
  std::vector<std::size_t> indices;   // source indices of the kept points
  std::vector<CameraPose> poses;
};

// Union of visible_points over the given poses.
std::vector<bool> union_visibility(const LabeledPointCloud& cloud,
                                   const std::vector<CameraPose>& poses, const VssConfig& config);

ScanResult simulate_scan(const LabeledPointCloud& cloud, const VssConfig& config,
                         const StructuralClasses& structural, RandomStream& rng);

LabeledPointCloud jitter_points(const LabeledPointCloud& cloud, double half_range,
                                RandomStream& rng);

// Occlusion simulation followed by jitter.
LabeledPointCloud virtual_scan(const LabeledPointCloud& cloud, const VssConfig& config,
                               const StructuralClasses& structural, RandomStream& rng);

}  // namespace doda
