#include "doda/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include <Eigen/Geometry>
#include <fmt/format.h>

namespace doda {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kDuplicateScene: return "DuplicateScene";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kOverlapError: return "OverlapError";
    case ErrorCode::kNoFreeSpace: return "NoFreeSpace";
    case ErrorCode::kNoWallPoints: return "NoWallPoints";
    case ErrorCode::kDegeneratePose: return "DegeneratePose";
    case ErrorCode::kDegeneratePartition: return "DegeneratePartition";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNoSupervision: return "NoSupervision";
    case ErrorCode::kDimensionError: return "DimensionError";
    case ErrorCode::kDivergenceError: return "DivergenceError";
    case ErrorCode::kNoEvaluatedClasses: return "NoEvaluatedClasses";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(fmt::format("{}: {}", to_string(code), message)), code_(code) {}

ClassTaxonomy::ClassTaxonomy(std::string name, std::vector<std::string> class_names,
                             Label ignore_index)
    : name_(std::move(name)), names_(std::move(class_names)), ignore_(ignore_index) {
  if (names_.empty()) throw Error(ErrorCode::kInvalidArgument, "taxonomy has no classes");
  std::set<std::string> unique(names_.begin(), names_.end());
  if (unique.size() != names_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "taxonomy '" + name_ + "' has duplicate class names");
  }
  if (ignore_ < names_.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("ignore index {} collides with a class index", ignore_));
  }
}

Label ClassTaxonomy::index_of(const std::string& class_name) const {
  const auto it = std::find(names_.begin(), names_.end(), class_name);
  if (it == names_.end()) {
    throw Error(ErrorCode::kUnknownLabel, "class '" + class_name + "' not in taxonomy " + name_);
  }
  return static_cast<Label>(it - names_.begin());
}

void LabeledPointCloud::reserve(std::size_t n) {
  positions.reserve(n);
  labels.reserve(n);
}

void LabeledPointCloud::push_back(const Vec3& p, Label label) {
  positions.push_back(p);
  labels.push_back(label);
}

void LabeledPointCloud::validate() const {
  if (labels.size() != positions.size()) {
    throw Error(ErrorCode::kDimensionError,
                fmt::format("{} labels for {} points", labels.size(), positions.size()));
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("point {} is not finite", i));
    }
    if (taxonomy && !taxonomy->is_ignore(labels[i]) && !taxonomy->is_valid_class(labels[i])) {
      throw Error(ErrorCode::kUnknownLabel,
                  fmt::format("point {} has label {} outside [0, {})", i, labels[i],
                              taxonomy->size()));
    }
  }
}

LabeledPointCloud select(const LabeledPointCloud& cloud, const std::vector<std::size_t>& indices) {
  LabeledPointCloud out(cloud.taxonomy);
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(cloud.positions[i], cloud.labels[i]);
  return out;
}

std::vector<std::size_t> mask_to_indices(const std::vector<bool>& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

bool Aabb::contains(const Vec3& p, double tol) const {
  return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
}

Aabb aabb_of(const std::vector<Vec3>& positions) {
  if (positions.empty()) throw Error(ErrorCode::kEmptyInput, "bounding box of an empty cloud");
  Aabb box{positions.front(), positions.front()};
  for (const Vec3& p : positions) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

Aabb aabb_of(const LabeledPointCloud& cloud) { return aabb_of(cloud.positions); }

LabeledPointCloud map_labels(const LabeledPointCloud& cloud, const LabelMapping& mapping) {
  const Label src_ignore = cloud.taxonomy ? cloud.taxonomy->ignore_index() : kIgnoreLabel;
  const Label dst_ignore = mapping.target ? mapping.target->ignore_index() : kIgnoreLabel;
  LabeledPointCloud out(mapping.target);
  out.positions = cloud.positions;
  out.labels.resize(cloud.labels.size());
  for (std::size_t i = 0; i < cloud.labels.size(); ++i) {
    const Label in = cloud.labels[i];
    if (in == src_ignore) {
      out.labels[i] = dst_ignore;
      continue;
    }
    const auto it = mapping.table.find(in);
    if (it == mapping.table.end()) {
      throw Error(ErrorCode::kUnknownLabel, fmt::format("no mapping for label {}", in));
    }
    if (it->second != dst_ignore && mapping.target && !mapping.target->is_valid_class(it->second)) {
      throw Error(ErrorCode::kUnknownLabel,
                  fmt::format("label {} maps to {} outside the target taxonomy", in, it->second));
    }
    out.labels[i] = it->second;
  }
  return out;
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.rotate = c.flip = c.elastic = c.jitter = c.shuffle = false;
  return c;
}

namespace {

// Displacement field: uniform noise on a lattice of `spacing`, trilinearly interpolated.
void apply_elastic(std::vector<Vec3>& positions, double spacing, double magnitude,
                   RandomStream& rng) {
  const Aabb box = aabb_of(positions);
  Eigen::Array3i dims;
  for (int a = 0; a < 3; ++a) {
    dims[a] = static_cast<int>(std::floor(box.extent()[a] / spacing)) + 2;
  }
  std::vector<Vec3> lattice(static_cast<std::size_t>(dims.prod()));
  for (Vec3& v : lattice) v = Vec3(rng.symmetric(1.0), rng.symmetric(1.0), rng.symmetric(1.0));
  const auto node = [&](int i, int j, int k) -> const Vec3& {
    return lattice[static_cast<std::size_t>((i * dims[1] + j) * dims[2] + k)];
  };
  for (Vec3& p : positions) {
    const Vec3 g = (p - box.min) / spacing;
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
      base[a] = std::clamp(static_cast<int>(std::floor(g[a])), 0, dims[a] - 2);
      frac[a] = g[a] - base[a];
    }
    Vec3 d = Vec3::Zero();
    for (int corner = 0; corner < 8; ++corner) {
      const int di = corner & 1, dj = (corner >> 1) & 1, dk = (corner >> 2) & 1;
      const double w = (di ? frac[0] : 1 - frac[0]) * (dj ? frac[1] : 1 - frac[1]) *
                       (dk ? frac[2] : 1 - frac[2]);
      d += w * node(base[0] + di, base[1] + dj, base[2] + dk);
    }
    p += magnitude * d;
  }
}

}  // namespace

LabeledPointCloud standard_augment(const LabeledPointCloud& cloud, const AugmentConfig& config,
                                   RandomStream& rng) {
  if (cloud.empty()) throw Error(ErrorCode::kEmptyInput, "augmenting an empty cloud");
  LabeledPointCloud out = cloud;
  if (config.rotate) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
    for (Vec3& p : out.positions) p = rot * p;
  }
  if (config.flip) {
    const bool flip_x = rng.bernoulli(0.5);
    const bool flip_y = rng.bernoulli(0.5);
    for (Vec3& p : out.positions) {
      if (flip_x) p.x() = -p.x();
      if (flip_y) p.y() = -p.y();
    }
  }
  if (config.elastic && config.elastic_magnitude > 0.0) {
    apply_elastic(out.positions, config.elastic_spacing, config.elastic_magnitude, rng);
  }
  if (config.jitter && config.jitter_half_range > 0.0) {
    for (Vec3& p : out.positions) {
      for (int a = 0; a < 3; ++a) p[a] += rng.symmetric(config.jitter_half_range);
    }
  }
  if (config.shuffle) {
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    out = select(out, order);
  }
  return out;
}

}  // namespace doda
