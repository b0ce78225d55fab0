#include "doda/tacm.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

namespace doda {

void TacmConfig::validate() const {
  for (int n : partitions) {
    if (n < 1) throw Error(ErrorCode::kInvalidArgument, "partition counts must be >= 1");
  }
  if (boundary_jitter < 0) throw Error(ErrorCode::kInvalidArgument, "delta_phi must be >= 0");
  if (permute_prob < 0 || permute_prob > 1 || mix_prob < 0 || mix_prob > 1) {
    throw Error(ErrorCode::kInvalidArgument, "rho_s and rho_m must lie in [0, 1]");
  }
  if (min_tail_cuboids > static_cast<std::size_t>(cell_count())) {
    throw Error(ErrorCode::kInvalidArgument, "min_tail_cuboids exceeds the cell count");
  }
}

namespace {

std::array<int, 3> decode_cell(const std::array<int, 3>& shape, std::size_t cell) {
  const int c = static_cast<int>(cell);
  return {c / (shape[1] * shape[2]), (c / shape[2]) % shape[1], c % shape[2]};
}

// Cell index along one axis: number of interior boundaries <= v. The lowest
// cell is closed below, every cell is open above except the last.
int axis_bin(const std::vector<double>& b, double v) {
  const auto first = b.begin() + 1;
  const auto last = b.end() - 1;
  return static_cast<int>(std::upper_bound(first, last, v) - first);
}

}  // namespace

Aabb CuboidSet::cell_bounds(std::size_t cell) const {
  const auto ijk = decode_cell(shape, cell);
  Aabb box;
  for (int a = 0; a < 3; ++a) {
    box.min[a] = boundaries[a][static_cast<std::size_t>(ijk[a])];
    box.max[a] = boundaries[a][static_cast<std::size_t>(ijk[a]) + 1];
  }
  return box;
}

CuboidSet partition_at(const LabeledPointCloud& cloud, std::array<std::vector<double>, 3> boundaries) {
  if (cloud.empty()) throw Error(ErrorCode::kEmptyInput, "cannot partition an empty cloud");
  CuboidSet set;
  for (int a = 0; a < 3; ++a) {
    const auto& b = boundaries[a];
    if (b.size() < 2) throw Error(ErrorCode::kInvalidArgument, "boundary array needs >= 2 entries");
    for (std::size_t i = 1; i < b.size(); ++i) {
      if (!(b[i] > b[i - 1]) && !(b.size() == 2 && b[1] == b[0])) {
        throw Error(ErrorCode::kDegeneratePartition,
                    fmt::format("boundaries on axis {} are not strictly increasing", a));
      }
    }
    set.shape[a] = static_cast<int>(b.size()) - 1;
  }
  set.cloud = cloud;
  set.boundaries = std::move(boundaries);
  const std::size_t n_cells = static_cast<std::size_t>(set.shape[0] * set.shape[1] * set.shape[2]);
  set.cuboids.resize(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    set.cuboids[c].cell = decode_cell(set.shape, c);
    set.cuboids[c].bounds = set.cell_bounds(c);
  }
  for (std::size_t idx = 0; idx < cloud.size(); ++idx) {
    const Vec3& p = cloud.positions[idx];
    const std::size_t c = set.cell_index(axis_bin(set.boundaries[0], p.x()),
                                         axis_bin(set.boundaries[1], p.y()),
                                         axis_bin(set.boundaries[2], p.z()));
    set.cuboids[c].members.push_back(idx);
  }
  return set;
}

CuboidSet partition_cuboids(const LabeledPointCloud& cloud, const TacmConfig& config,
                            RandomStream& rng) {
  config.validate();
  const Aabb box = aabb_of(cloud);
  const double dphi = config.boundary_jitter;
  std::array<std::vector<double>, 3> bounds;
  for (int a = 0; a < 3; ++a) {
    const int n = config.partitions[a];
    const double lo = box.min[a];
    const double hi = box.max[a];
    const double extent = hi - lo;
    if (n > 1) {
      // Neighbouring interior boundaries may move toward each other by 2*dphi,
      // the outer ones toward an endpoint by dphi.
      const double spacing = extent / n;
      const bool ok = (n == 2) ? spacing > dphi : spacing > 2 * dphi;
      if (!ok) {
        throw Error(ErrorCode::kDegeneratePartition,
                    fmt::format("extent {:.4f} on axis {} too small for {} cells with delta_phi {}",
                                extent, a, n, dphi));
      }
    }
    auto& b = bounds[a];
    b.resize(static_cast<std::size_t>(n) + 1);
    b.front() = lo;
    b.back() = hi;
    for (int i = 1; i < n; ++i) b[static_cast<std::size_t>(i)] = lo + extent * i / n + rng.symmetric(dphi);
  }
  return partition_at(cloud, std::move(bounds));
}

CuboidSet apply_permutation(const CuboidSet& set, const std::vector<std::size_t>& destination) {
  const std::size_t n = set.cuboids.size();
  if (destination.size() != n) throw Error(ErrorCode::kShapeMismatch, "permutation size mismatch");
  std::vector<bool> seen(n, false);
  for (std::size_t d : destination) {
    if (d >= n || seen[d]) throw Error(ErrorCode::kInvalidArgument, "not a permutation");
    seen[d] = true;
  }
  CuboidSet out;
  out.shape = set.shape;
  out.boundaries = set.boundaries;
  out.cloud = set.cloud;
  out.attributes = set.attributes;
  out.permuted = true;
  out.cuboids.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const Cuboid& from = set.cuboids[c];
    const std::size_t to = destination[c];
    const Vec3 offset = set.cell_bounds(to).center() - from.bounds.center();
    Cuboid moved = from;
    moved.cell = decode_cell(set.shape, to);
    moved.bounds.min += offset;
    moved.bounds.max += offset;
    for (std::size_t idx : moved.members) out.cloud.positions[idx] = set.cloud.positions[idx] + offset;
    out.cuboids[to] = std::move(moved);
  }
  return out;
}

CuboidSet permute_cuboids(const CuboidSet& set, double permute_prob, RandomStream& rng) {
  if (!rng.bernoulli(permute_prob)) return set;
  std::vector<std::size_t> destination(set.cuboids.size());
  std::iota(destination.begin(), destination.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(destination));
  return apply_permutation(set, destination);
}

std::vector<Label> select_tail_classes(const std::vector<double>& ratios, std::size_t n_tail) {
  std::vector<Label> present;
  for (std::size_t c = 0; c < ratios.size(); ++c) {
    if (ratios[c] > 0) present.push_back(static_cast<Label>(c));
  }
  std::stable_sort(present.begin(), present.end(),
                   [&](Label a, Label b) { return ratios[a] < ratios[b]; });
  present.resize(std::min(n_tail, present.size()));
  return present;
}

bool is_tail_cuboid(const std::vector<Label>& labels, const std::vector<Label>& tail_classes,
                    const std::vector<double>& ratios, Label ignore) {
  if (tail_classes.empty()) return false;
  std::size_t labeled = 0;
  std::vector<std::size_t> counts(tail_classes.size(), 0);
  for (Label l : labels) {
    if (l == ignore || l >= ratios.size()) continue;
    ++labeled;
    for (std::size_t t = 0; t < tail_classes.size(); ++t) {
      if (l == tail_classes[t]) ++counts[t];
    }
  }
  if (labeled == 0) return false;
  for (std::size_t t = 0; t < tail_classes.size(); ++t) {
    const double frac = static_cast<double>(counts[t]) / static_cast<double>(labeled);
    if (counts[t] > 0 && frac > ratios[tail_classes[t]]) return true;
  }
  return false;
}

namespace {

Label ignore_of(const LabeledPointCloud& cloud) {
  return cloud.taxonomy ? cloud.taxonomy->ignore_index() : kIgnoreLabel;
}

std::vector<Label> member_labels(const CuboidSet& set, const Cuboid& cuboid) {
  std::vector<Label> out;
  out.reserve(cuboid.members.size());
  for (std::size_t idx : cuboid.members) out.push_back(set.cloud.labels[idx]);
  return out;
}

}  // namespace

std::vector<bool> classify_tail_cuboids(const CuboidSet& set, const std::vector<double>& ratios,
                                        std::size_t n_tail) {
  const auto tail = select_tail_classes(ratios, n_tail);
  std::vector<bool> flags;
  flags.reserve(set.cuboids.size());
  for (const Cuboid& c : set.cuboids) {
    flags.push_back(is_tail_cuboid(member_labels(set, c), tail, ratios, ignore_of(set.cloud)));
  }
  return flags;
}

void TailCuboidQueue::push(QueuedCuboid item) {
  item.serial = next_serial_++;
  if (capacity_ == 0) return;
  items_.push_back(std::move(item));
  while (items_.size() > capacity_) items_.pop_front();
}

void update_tail_queue(TailCuboidQueue& queue, const CuboidSet& set, const std::vector<bool>& flags) {
  if (flags.size() != set.cuboids.size()) {
    throw Error(ErrorCode::kShapeMismatch, "tail flags do not match the cuboid count");
  }
  for (std::size_t c = 0; c < flags.size(); ++c) {
    if (!flags[c]) continue;
    const Cuboid& cub = set.cuboids[c];
    QueuedCuboid q;
    q.extent = cub.bounds.extent();
    q.positions.reserve(cub.members.size());
    q.labels.reserve(cub.members.size());
    const bool attr = set.attributes.rows() > 0;
    if (attr) q.attributes.resize(static_cast<Eigen::Index>(cub.members.size()), set.attributes.cols());
    for (std::size_t k = 0; k < cub.members.size(); ++k) {
      const std::size_t idx = cub.members[k];
      q.positions.push_back(set.cloud.positions[idx] - cub.bounds.min);
      q.labels.push_back(set.cloud.labels[idx]);
      if (attr) q.attributes.row(static_cast<Eigen::Index>(k)) = set.attributes.row(static_cast<Eigen::Index>(idx));
    }
    queue.push(std::move(q));
  }
}

namespace {

struct CellContent {
  Provenance provenance = Provenance::kTarget;
  Aabb bounds;
  std::vector<Vec3> positions;
  std::vector<Label> labels;
  PointAttributes attributes;
  bool has_attributes = false;
};

CellContent take_cuboid(const CuboidSet& set, std::size_t cell, const Vec3& center, Provenance prov) {
  const Cuboid& cub = set.cuboids[cell];
  const Vec3 offset = center - cub.bounds.center();
  CellContent out;
  out.provenance = prov;
  out.bounds = Aabb{cub.bounds.min + offset, cub.bounds.max + offset};
  out.positions.reserve(cub.members.size());
  out.labels.reserve(cub.members.size());
  out.has_attributes = set.attributes.rows() > 0;
  if (out.has_attributes) out.attributes.resize(static_cast<Eigen::Index>(cub.members.size()), set.attributes.cols());
  for (std::size_t k = 0; k < cub.members.size(); ++k) {
    const std::size_t idx = cub.members[k];
    out.positions.push_back(set.cloud.positions[idx] + offset);
    out.labels.push_back(set.cloud.labels[idx]);
    if (out.has_attributes) out.attributes.row(static_cast<Eigen::Index>(k)) = set.attributes.row(static_cast<Eigen::Index>(idx));
  }
  return out;
}

CellContent take_queued(const QueuedCuboid& q, const Vec3& center) {
  const Vec3 offset = center - 0.5 * q.extent;
  CellContent out;
  out.provenance = Provenance::kQueue;
  out.bounds = Aabb{offset, offset + q.extent};
  out.labels = q.labels;
  out.attributes = q.attributes;
  out.has_attributes = q.attributes.rows() > 0 || q.positions.empty();
  out.positions.reserve(q.positions.size());
  for (const Vec3& p : q.positions) out.positions.push_back(p + offset);
  return out;
}

MixedScene assemble(const std::vector<CellContent>& cells, const TaxonomyPtr& taxonomy) {
  MixedScene scene;
  scene.cloud.taxonomy = taxonomy;
  std::size_t total = 0;
  for (const auto& c : cells) total += c.positions.size();
  scene.cloud.reserve(total);
  scene.point_provenance.reserve(total);
  Eigen::Index attr_cols = -1;
  bool attr = !cells.empty();
  for (const auto& c : cells) {
    attr = attr && c.has_attributes;
    if (c.attributes.rows() > 0) {
      if (attr_cols >= 0 && attr_cols != c.attributes.cols()) {
        throw Error(ErrorCode::kShapeMismatch, "cuboid attributes differ in width");
      }
      attr_cols = c.attributes.cols();
    }
  }
  if (attr && attr_cols >= 0) scene.attributes.resize(static_cast<Eigen::Index>(total), attr_cols);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellContent& c = cells[i];
    MixedCell mc;
    mc.cell = i;
    mc.provenance = c.provenance;
    mc.bounds = c.bounds;
    mc.begin = scene.cloud.size();
    if (scene.attributes.rows() > 0 && !c.positions.empty()) {
      scene.attributes.middleRows(static_cast<Eigen::Index>(mc.begin), c.attributes.rows()) = c.attributes;
    }
    for (std::size_t k = 0; k < c.positions.size(); ++k) {
      scene.cloud.push_back(c.positions[k], c.labels[k]);
      scene.point_provenance.push_back(c.provenance);
    }
    mc.end = scene.cloud.size();
    scene.cells.push_back(mc);
  }
  return scene;
}

std::vector<CellContent> mix_cells(const CuboidSet& source, const CuboidSet& target,
                                   const std::vector<bool>& take_source) {
  if (source.shape != target.shape) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("partition shapes differ: ({},{},{}) vs ({},{},{})", source.shape[0],
                            source.shape[1], source.shape[2], target.shape[0], target.shape[1],
                            target.shape[2]));
  }
  if (take_source.size() != target.cuboids.size()) {
    throw Error(ErrorCode::kShapeMismatch, "mixing choice does not match the cell count");
  }
  std::vector<CellContent> cells;
  cells.reserve(target.cuboids.size());
  for (std::size_t c = 0; c < target.cuboids.size(); ++c) {
    const Vec3 center = target.cell_bounds(c).center();
    cells.push_back(take_source[c] ? take_cuboid(source, c, center, Provenance::kSource)
                                   : take_cuboid(target, c, center, Provenance::kTarget));
  }
  return cells;
}

}  // namespace

MixedScene mix_with_choice(const CuboidSet& source, const CuboidSet& target,
                           const std::vector<bool>& take_source) {
  return assemble(mix_cells(source, target, take_source), target.cloud.taxonomy);
}

MixedScene mix_cuboids(const CuboidSet& source, const CuboidSet& target, double mix_prob,
                       RandomStream& rng) {
  if (source.shape != target.shape) return mix_with_choice(source, target, {});
  std::vector<bool> take(target.cuboids.size());
  for (std::size_t c = 0; c < take.size(); ++c) take[c] = rng.bernoulli(mix_prob);
  return mix_with_choice(source, target, take);
}

std::vector<bool> classify_mixed_cells(const MixedScene& scene, const std::vector<double>& ratios,
                                       std::size_t n_tail) {
  const auto tail = select_tail_classes(ratios, n_tail);
  std::vector<bool> flags;
  flags.reserve(scene.cells.size());
  for (const MixedCell& c : scene.cells) {
    const std::vector<Label> labels(scene.cloud.labels.begin() + static_cast<std::ptrdiff_t>(c.begin),
                                    scene.cloud.labels.begin() + static_cast<std::ptrdiff_t>(c.end));
    flags.push_back(is_tail_cuboid(labels, tail, ratios, ignore_of(scene.cloud)));
  }
  return flags;
}

ComposeResult tacm_compose(const LabeledPointCloud& source, const LabeledPointCloud& target,
                           const std::vector<double>& ratios, const TacmConfig& config,
                           TailCuboidQueue& queue, RandomStream& rng,
                           const PointAttributes* source_attributes,
                           const PointAttributes* target_attributes) {
  config.validate();
  auto with_attributes = [](CuboidSet set, const PointAttributes* attr) {
    if (attr) {
      if (static_cast<std::size_t>(attr->rows()) != set.cloud.size()) {
        throw Error(ErrorCode::kShapeMismatch, "attribute rows differ from the point count");
      }
      set.attributes = *attr;
    }
    return set;
  };
  const CuboidSet src = permute_cuboids(
      with_attributes(partition_cuboids(source, config, rng), source_attributes), config.permute_prob, rng);
  const CuboidSet tgt = permute_cuboids(
      with_attributes(partition_cuboids(target, config, rng), target_attributes), config.permute_prob, rng);

  std::vector<bool> take(tgt.cuboids.size());
  for (std::size_t c = 0; c < take.size(); ++c) take[c] = rng.bernoulli(config.mix_prob);
  std::vector<CellContent> cells = mix_cells(src, tgt, take);

  ComposeResult result;
  result.mixed_from_source = static_cast<std::size_t>(std::count(take.begin(), take.end(), true));

  const auto tail = select_tail_classes(ratios, config.tail_classes);
  const Label ignore = ignore_of(tgt.cloud);
  std::vector<bool> is_tail(cells.size());
  std::size_t tail_count = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    is_tail[c] = is_tail_cuboid(cells[c].labels, tail, ratios, ignore);
    tail_count += is_tail[c] ? 1 : 0;
  }

  if (tail_count < config.min_tail_cuboids && !queue.empty()) {
    const std::size_t needed = config.min_tail_cuboids - tail_count;
    const bool distinct = queue.size() >= needed;
    std::vector<std::size_t> pool(queue.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> open;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!is_tail[c]) open.push_back(c);
    }
    while (tail_count < config.min_tail_cuboids && !open.empty() && !pool.empty()) {
      const std::size_t cell_pick = rng.index(open.size());
      const std::size_t cell = open[cell_pick];
      open.erase(open.begin() + static_cast<std::ptrdiff_t>(cell_pick));
      const std::size_t q_pick = rng.index(pool.size());
      const std::size_t q_idx = pool[q_pick];
      if (distinct) pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(q_pick));
      cells[cell] = take_queued(queue[q_idx], tgt.cell_bounds(cell).center());
      result.queue_replaced.push_back(cell);
      if (is_tail_cuboid(cells[cell].labels, tail, ratios, ignore)) ++tail_count;
    }
  }

  result.scene = assemble(cells, target.taxonomy);
  const std::size_t before = queue.pushed();
  update_tail_queue(queue, tgt, classify_tail_cuboids(tgt, ratios, config.tail_classes));
  result.queue_pushed = queue.pushed() - before;
  return result;
}

}  // namespace doda
