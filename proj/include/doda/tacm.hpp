#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <vector>

#include "doda/core.hpp"

namespace doda {

struct TacmConfig {
  std::array<int, 3> partitions{2, 2, 1};
  double boundary_jitter = 0.1;  // delta_phi
  double permute_prob = 0.5;     // rho_s
  double mix_prob = 0.5;         // rho_m
  std::size_t queue_capacity = 256;
  std::size_t tail_classes = 2;       // n_r
  std::size_t min_tail_cuboids = 2;   // u

  int cell_count() const { return partitions[0] * partitions[1] * partitions[2]; }
  void validate() const;
};

// Optional per-point payload (one row per point) carried through partition,
// permutation, mixing and the queue; rows follow their points.
using PointAttributes = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Provenance : std::uint8_t { kSource, kTarget, kQueue };

struct Cuboid {
  std::array<int, 3> cell{0, 0, 0};
  Aabb bounds;                       // current (possibly translated) bounds
  std::vector<std::size_t> members;  // indices into the owning set's cloud, ascending
  Provenance provenance = Provenance::kSource;
};

// Partition of one cloud into n_x * n_y * n_z cuboids. `cuboids` is indexed by
// cell (i * n_y + j) * n_z + k; `boundaries` are the partition positions per axis.
struct CuboidSet {
  LabeledPointCloud cloud;
  std::array<int, 3> shape{1, 1, 1};
  std::array<std::vector<double>, 3> boundaries;
  std::vector<Cuboid> cuboids;
  PointAttributes attributes;  // empty, or one row per cloud point
  bool permuted = false;

  std::size_t cell_index(int i, int j, int k) const {
    return static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k);
  }
  // Bounds of the partition grid cell, independent of which cuboid occupies it.
  Aabb cell_bounds(std::size_t cell) const;
};

CuboidSet partition_cuboids(const LabeledPointCloud& cloud, const TacmConfig& config,
                            RandomStream& rng);
// Deterministic partition at explicit boundaries (each array strictly increasing, covering the cloud).
CuboidSet partition_at(const LabeledPointCloud& cloud, std::array<std::vector<double>, 3> boundaries);

// With probability permute_prob (one draw per scene) applies a uniform random permutation.
CuboidSet permute_cuboids(const CuboidSet& set, double permute_prob, RandomStream& rng);
// Moves the cuboid in cell c to cell destination[c], translating bounds center onto cell center.
CuboidSet apply_permutation(const CuboidSet& set, const std::vector<std::size_t>& destination);

// The n_r classes with the smallest positive ratio; ties go to the lower index.
std::vector<Label> select_tail_classes(const std::vector<double>& ratios, std::size_t n_tail);

// True when the cuboid's fraction of some tail class strictly exceeds that class's ratio.
bool is_tail_cuboid(const std::vector<Label>& labels, const std::vector<Label>& tail_classes,
                    const std::vector<double>& ratios, Label ignore);

std::vector<bool> classify_tail_cuboids(const CuboidSet& set, const std::vector<double>& ratios,
                                        std::size_t n_tail);

// A cuboid stored in canonical frame: bounds min corner at the origin.
struct QueuedCuboid {
  std::vector<Vec3> positions;
  std::vector<Label> labels;
  PointAttributes attributes;
  Vec3 extent = Vec3::Zero();
  std::size_t serial = 0;  // insertion counter, for FIFO inspection
};

class TailCuboidQueue {
 public:
  explicit TailCuboidQueue(std::size_t capacity = 256) : capacity_(capacity) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const QueuedCuboid& operator[](std::size_t i) const { return items_[i]; }
  std::size_t pushed() const noexcept { return next_serial_; }

  void push(QueuedCuboid item);

 private:
  std::size_t capacity_;
  std::size_t next_serial_ = 0;
  std::deque<QueuedCuboid> items_;
};

// Appends flagged cuboids in cell order (deep copies in canonical frame), evicting the oldest.
void update_tail_queue(TailCuboidQueue& queue, const CuboidSet& set, const std::vector<bool>& flags);

struct MixedCell {
  std::size_t cell = 0;
  Provenance provenance = Provenance::kTarget;
  Aabb bounds;
  std::size_t begin = 0;  // point range [begin, end) in the mixed cloud
  std::size_t end = 0;
};

struct MixedScene {
  LabeledPointCloud cloud;               // points grouped by cell
  std::vector<Provenance> point_provenance;
  std::vector<MixedCell> cells;          // one per partition cell, cell order
  PointAttributes attributes;            // present when every contributing cuboid carried them
};

// Starts from the target set; each cell is independently replaced by the source
// cuboid of the same cell with probability mix_prob.
MixedScene mix_cuboids(const CuboidSet& source, const CuboidSet& target, double mix_prob,
                       RandomStream& rng);
// Same, with the replacement decision given per cell.
MixedScene mix_with_choice(const CuboidSet& source, const CuboidSet& target,
                           const std::vector<bool>& take_source);

std::vector<bool> classify_mixed_cells(const MixedScene& scene, const std::vector<double>& ratios,
                                       std::size_t n_tail);

struct ComposeResult {
  MixedScene scene;
  std::size_t mixed_from_source = 0;        // cells taken from the source scene
  std::vector<std::size_t> queue_replaced;  // cells overwritten from the queue
  std::size_t queue_pushed = 0;
};

// Partition both scenes, permute each, mix, oversample tail cuboids from the queue up to
// min_tail_cuboids, then push the target scene's tail cuboids into the queue.
// Attribute matrices, when given, must have one row per point of their cloud.
ComposeResult tacm_compose(const LabeledPointCloud& source, const LabeledPointCloud& target,
                           const std::vector<double>& ratios, const TacmConfig& config,
                           TailCuboidQueue& queue, RandomStream& rng,
                           const PointAttributes* source_attributes = nullptr,
                           const PointAttributes* target_attributes = nullptr);

}  // namespace doda
