#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "doda/core.hpp"

namespace doda {

// Planar parallelogram {origin + a*edge_u + b*edge_v : a, b in [0, 1]}.
struct Face {
  Vec3 origin = Vec3::Zero();
  Vec3 edge_u = Vec3::Zero();
  Vec3 edge_v = Vec3::Zero();

  double area() const { return edge_u.cross(edge_v).norm(); }
};

struct Furniture {
  Aabb box;
  Label label = 0;
};

// Room occupies [0, width] x [0, depth] x [0, height].
struct SceneSpec {
  double width = 4.0;
  double depth = 4.0;
  double height = 2.8;
  double density = 1250.0;  // points per square meter
  Label floor_class = 0;
  Label wall_class = 1;
  Label ceiling_class = 2;
  std::vector<Furniture> furniture;

  // Throws kInvalidArgument / kOverlapError.
  void validate() const;
};

// floor(density * area) points plus one more with probability equal to the
// fractional part; positions i.i.d. uniform on the face.
std::vector<Vec3> sample_primitive_surface(const Face& face, double density, RandomStream& rng);

// The six outer faces of a box; the bottom face is dropped when it rests on z <= floor_z.
std::vector<Face> box_faces(const Aabb& box, double floor_z);
// Floor, ceiling and four walls, in that order.
std::vector<Face> room_faces(const SceneSpec& spec);

LabeledPointCloud generate_scene(const SceneSpec& spec, TaxonomyPtr taxonomy, RandomStream& rng);

// key=value lines; furniture as repeated "box=xmin,ymin,zmin,xmax,ymax,zmax,class".
SceneSpec parse_scene_spec(std::string_view text);
std::string format_scene_spec(const SceneSpec& spec);

// ---- parametric templates ----

enum class SceneTemplate {
  kEmptyRoom,
  kOneOccluder,
  kCluttered,
  kCorridor,
  kTailHeavy,
  kTwoRoom,
};

inline constexpr SceneTemplate kAllTemplates[] = {
    SceneTemplate::kEmptyRoom, SceneTemplate::kOneOccluder, SceneTemplate::kCluttered,
    SceneTemplate::kCorridor,  SceneTemplate::kTailHeavy,   SceneTemplate::kTwoRoom,
};

std::string_view to_string(SceneTemplate kind);
SceneTemplate parse_scene_template(std::string_view name);

// Classes: floor, wall, ceiling, cabinet, bed, table, chair, shelf.
TaxonomyPtr toy_taxonomy();

namespace toy_class {
inline constexpr Label kFloor = 0;
inline constexpr Label kWall = 1;
inline constexpr Label kCeiling = 2;
inline constexpr Label kCabinet = 3;
inline constexpr Label kBed = 4;
inline constexpr Label kTable = 5;
inline constexpr Label kChair = 6;
inline constexpr Label kShelf = 7;
}  // namespace toy_class

// Randomized instance of a template; dimensions and furniture placement are drawn from rng.
SceneSpec make_template(SceneTemplate kind, RandomStream& rng, double density = 1250.0);

}  // namespace doda
