#include <array>

#include <fmt/format.h>

#include "doda/scenegen.hpp"

namespace doda {

std::string_view to_string(SceneTemplate kind) {
  switch (kind) {
    case SceneTemplate::kEmptyRoom: return "empty_room";
    case SceneTemplate::kOneOccluder: return "one_occluder";
    case SceneTemplate::kCluttered: return "cluttered";
    case SceneTemplate::kCorridor: return "corridor";
    case SceneTemplate::kTailHeavy: return "tail_heavy";
    case SceneTemplate::kTwoRoom: return "two_room";
  }
  return "unknown";
}

SceneTemplate parse_scene_template(std::string_view name) {
  for (SceneTemplate t : kAllTemplates) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown scene template '{}'", name));
}

TaxonomyPtr toy_taxonomy() {
  static const TaxonomyPtr tax = std::make_shared<const ClassTaxonomy>(
      "toy8", std::vector<std::string>{"floor", "wall", "ceiling", "cabinet", "bed", "table",
                                       "chair", "shelf"});
  return tax;
}

namespace {

using namespace toy_class;

struct SizeRange {
  Vec3 lo;
  Vec3 hi;
};

SizeRange size_range(Label cls) {
  switch (cls) {
    case kCabinet: return {Vec3(0.5, 0.4, 1.6), Vec3(1.0, 0.6, 2.0)};
    case kBed: return {Vec3(1.8, 1.4, 0.4), Vec3(2.1, 1.8, 0.6)};
    case kTable: return {Vec3(0.9, 0.6, 0.7), Vec3(1.4, 0.9, 0.8)};
    case kChair: return {Vec3(0.4, 0.4, 0.8), Vec3(0.5, 0.5, 1.0)};
    case kShelf: return {Vec3(0.8, 0.25, 0.3), Vec3(1.2, 0.35, 0.4)};
    default: return {Vec3(0.5, 0.5, 0.5), Vec3(1.0, 1.0, 1.0)};
  }
}

bool overlaps_any(const Aabb& box, const SceneSpec& spec, double gap) {
  for (const auto& f : spec.furniture) {
    const bool disjoint = (box.max.array() + gap <= f.box.min.array()).any() ||
                          (f.box.max.array() + gap <= box.min.array()).any();
    if (!disjoint) return true;
  }
  return false;
}

// Random placement; walls-adjacent for cabinets and shelves, shelves are wall-mounted.
// Gives up silently after a bounded number of attempts.
bool place(SceneSpec& spec, Label cls, RandomStream& rng, double x_lo, double x_hi) {
  constexpr double kMargin = 0.05;
  const SizeRange r = size_range(cls);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vec3 size(rng.uniform(r.lo.x(), r.hi.x()), rng.uniform(r.lo.y(), r.hi.y()),
              rng.uniform(r.lo.z(), r.hi.z()));
    const bool rotated = rng.bernoulli(0.5);
    if (rotated) std::swap(size.x(), size.y());
    const double avail_x = (x_hi - x_lo) - 2 * kMargin - size.x();
    const double avail_y = spec.depth - 2 * kMargin - size.y();
    if (avail_x <= 0 || avail_y <= 0) continue;
    Vec3 lo(x_lo + kMargin + rng.uniform(0, avail_x), kMargin + rng.uniform(0, avail_y), 0.0);
    if (cls == kCabinet || cls == kShelf) {
      // snap to one of the four walls
      switch (rng.index(4)) {
        case 0: lo.x() = x_lo + kMargin; break;
        case 1: lo.x() = x_hi - kMargin - size.x(); break;
        case 2: lo.y() = kMargin; break;
        default: lo.y() = spec.depth - kMargin - size.y(); break;
      }
    }
    if (cls == kShelf) lo.z() = rng.uniform(1.1, 1.5);
    Aabb box{lo, lo + size};
    if (box.max.z() > spec.height - 0.1) continue;
    if (overlaps_any(box, spec, 0.1)) continue;
    spec.furniture.push_back({box, cls});
    return true;
  }
  return false;
}

void place_many(SceneSpec& spec, RandomStream& rng, std::initializer_list<Label> classes,
                double x_lo, double x_hi) {
  for (Label c : classes) place(spec, c, rng, x_lo, x_hi);
}

SceneSpec base_room(RandomStream& rng, double density, double w_lo, double w_hi, double d_lo,
                    double d_hi) {
  SceneSpec s;
  s.width = rng.uniform(w_lo, w_hi);
  s.depth = rng.uniform(d_lo, d_hi);
  s.height = rng.uniform(2.6, 3.0);
  s.density = density;
  s.floor_class = kFloor;
  s.wall_class = kWall;
  s.ceiling_class = kCeiling;
  return s;
}

}  // namespace

SceneSpec make_template(SceneTemplate kind, RandomStream& rng, double density) {
  switch (kind) {
    case SceneTemplate::kEmptyRoom:
      return base_room(rng, density, 3.5, 5.0, 3.5, 5.0);
    case SceneTemplate::kOneOccluder: {
      SceneSpec s = base_room(rng, density, 3.5, 5.0, 3.5, 5.0);
      const Vec3 size(rng.uniform(0.8, 1.2), rng.uniform(0.5, 0.8), rng.uniform(1.5, 1.9));
      const Vec3 center(0.5 * s.width + rng.symmetric(0.4), 0.5 * s.depth + rng.symmetric(0.4), 0);
      const Vec3 lo(center.x() - 0.5 * size.x(), center.y() - 0.5 * size.y(), 0.0);
      s.furniture.push_back({Aabb{lo, lo + size}, kCabinet});
      return s;
    }
    case SceneTemplate::kCluttered: {
      SceneSpec s = base_room(rng, density, 4.0, 6.0, 4.0, 6.0);
      place_many(s, rng, {kBed, kCabinet, kCabinet, kTable, kChair, kChair, kShelf}, 0, s.width);
      const std::size_t extra = rng.index(3);
      static constexpr std::array<Label, 5> kPool{kCabinet, kBed, kTable, kChair, kShelf};
      for (std::size_t i = 0; i < extra; ++i) place(s, kPool[rng.index(kPool.size())], rng, 0, s.width);
      return s;
    }
    case SceneTemplate::kCorridor: {
      SceneSpec s = base_room(rng, density, 7.0, 9.0, 1.8, 2.4);
      place_many(s, rng, {kCabinet, kCabinet, kShelf}, 0, s.width);
      return s;
    }
    case SceneTemplate::kTailHeavy: {
      // Large head classes spread over the room; the rare classes share one corner.
      SceneSpec s = base_room(rng, density, 4.5, 6.0, 4.5, 6.0);
      place_many(s, rng, {kBed, kBed, kCabinet, kCabinet, kCabinet}, 0, s.width);
      const double corner = 0.45 * s.width;
      place_many(s, rng, {kChair, kShelf}, 0, corner);
      return s;
    }
    case SceneTemplate::kTwoRoom: {
      SceneSpec s = base_room(rng, density, 6.0, 8.0, 3.5, 4.5);
      const double x_mid = 0.5 * s.width + rng.symmetric(0.5);
      constexpr double kThickness = 0.1;
      const double door_lo = rng.uniform(0.5, s.depth - 1.5);
      const double door_hi = door_lo + 1.0;
      s.furniture.push_back(
          {Aabb{Vec3(x_mid, 0, 0), Vec3(x_mid + kThickness, door_lo, s.height)}, kWall});
      s.furniture.push_back(
          {Aabb{Vec3(x_mid, door_hi, 0), Vec3(x_mid + kThickness, s.depth, s.height)}, kWall});
      place_many(s, rng, {kBed, kCabinet, kChair}, 0, x_mid);
      place_many(s, rng, {kTable, kChair, kCabinet, kShelf}, x_mid + kThickness, s.width);
      return s;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown template");
}

}  // namespace doda
