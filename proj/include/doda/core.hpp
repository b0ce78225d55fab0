#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "doda/error.hpp"
#include "doda/random.hpp"

namespace doda {

using Vec3 = Eigen::Vector3d;
using Label = std::uint16_t;

// Sentinel for unlabeled / filtered points. Also the on-disk value in PLY files.
inline constexpr Label kIgnoreLabel = 65535;

class ClassTaxonomy {
 public:
  ClassTaxonomy(std::string name, std::vector<std::string> class_names,
                Label ignore_index = kIgnoreLabel);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& class_names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  Label ignore_index() const noexcept { return ignore_; }

  bool is_valid_class(Label label) const noexcept { return label < names_.size(); }
  bool is_ignore(Label label) const noexcept { return label == ignore_; }
  // Index of a class by name; throws kUnknownLabel when absent.
  Label index_of(const std::string& class_name) const;

 private:
  std::string name_;
  std::vector<std::string> names_;
  Label ignore_;
};

using TaxonomyPtr = std::shared_ptr<const ClassTaxonomy>;

struct LabeledPointCloud {
  std::vector<Vec3> positions;
  std::vector<Label> labels;
  TaxonomyPtr taxonomy;

  LabeledPointCloud() = default;
  explicit LabeledPointCloud(TaxonomyPtr tax) : taxonomy(std::move(tax)) {}

  std::size_t size() const noexcept { return positions.size(); }
  bool empty() const noexcept { return positions.empty(); }
  void reserve(std::size_t n);
  void push_back(const Vec3& p, Label label);

  // Throws on length mismatch, out-of-range labels or non-finite coordinates.
  void validate() const;
};

// Copies the points at `indices` (in the given order) into a new cloud.
LabeledPointCloud select(const LabeledPointCloud& cloud, const std::vector<std::size_t>& indices);
// Indices of the true entries of a mask.
std::vector<std::size_t> mask_to_indices(const std::vector<bool>& mask);

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p, double tol = 0.0) const;
};

Aabb aabb_of(const LabeledPointCloud& cloud);
Aabb aabb_of(const std::vector<Vec3>& positions);

struct LabelMapping {
  std::map<Label, Label> table;  // source index -> condensed index or ignore
  TaxonomyPtr target;
};

LabeledPointCloud map_labels(const LabeledPointCloud& cloud, const LabelMapping& mapping);

struct AugmentConfig {
  bool rotate = true;
  bool flip = true;
  bool elastic = true;
  bool jitter = true;
  bool shuffle = true;
  double elastic_spacing = 0.2;
  double elastic_magnitude = 0.05;
  double jitter_half_range = 0.005;

  static AugmentConfig none();
};

LabeledPointCloud standard_augment(const LabeledPointCloud& cloud, const AugmentConfig& config,
                                   RandomStream& rng);

}  // namespace doda
