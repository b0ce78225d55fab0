#include "doda/scenegen.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace doda {

void SceneSpec::validate() const {
  if (!(width > 0 && depth > 0 && height > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "room dimensions must be positive");
  }
  if (!(density > 0)) throw Error(ErrorCode::kInvalidArgument, "surface density must be positive");
  const Aabb room{Vec3::Zero(), Vec3(width, depth, height)};
  for (std::size_t i = 0; i < furniture.size(); ++i) {
    const Aabb& b = furniture[i].box;
    if ((b.min.array() > b.max.array()).any()) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("box {} has min > max", i));
    }
    if (!room.contains(b.min) || !room.contains(b.max)) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("box {} extends outside the room", i));
    }
    for (std::size_t j = 0; j < i; ++j) {
      const Aabb& o = furniture[j].box;
      const bool disjoint = (b.max.array() <= o.min.array()).any() ||
                            (o.max.array() <= b.min.array()).any();
      if (!disjoint) {
        throw Error(ErrorCode::kOverlapError, fmt::format("boxes {} and {} overlap", j, i));
      }
    }
  }
}

std::vector<Vec3> sample_primitive_surface(const Face& face, double density, RandomStream& rng) {
  const double expected = density * face.area();
  const double whole = std::floor(expected);
  auto n = static_cast<std::size_t>(whole);
  if (rng.bernoulli(expected - whole)) ++n;
  std::vector<Vec3> points;
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform();
    const double b = rng.uniform();
    points.push_back(face.origin + a * face.edge_u + b * face.edge_v);
  }
  return points;
}

std::vector<Face> box_faces(const Aabb& b, double floor_z) {
  const Vec3 e = b.extent();
  const Vec3 ex(e.x(), 0, 0), ey(0, e.y(), 0), ez(0, 0, e.z());
  std::vector<Face> faces;
  if (b.min.z() > floor_z) faces.push_back({b.min, ex, ey});
  faces.push_back({Vec3(b.min.x(), b.min.y(), b.max.z()), ex, ey});
  faces.push_back({b.min, ex, ez});
  faces.push_back({Vec3(b.min.x(), b.max.y(), b.min.z()), ex, ez});
  faces.push_back({b.min, ey, ez});
  faces.push_back({Vec3(b.max.x(), b.min.y(), b.min.z()), ey, ez});
  return faces;
}

std::vector<Face> room_faces(const SceneSpec& s) {
  const Vec3 ex(s.width, 0, 0), ey(0, s.depth, 0), ez(0, 0, s.height);
  return {
      {Vec3::Zero(), ex, ey},
      {Vec3(0, 0, s.height), ex, ey},
      {Vec3::Zero(), ex, ez},
      {Vec3(0, s.depth, 0), ex, ez},
      {Vec3::Zero(), ey, ez},
      {Vec3(s.width, 0, 0), ey, ez},
  };
}

LabeledPointCloud generate_scene(const SceneSpec& spec, TaxonomyPtr taxonomy, RandomStream& rng) {
  spec.validate();
  if (taxonomy) {
    for (Label l : {spec.floor_class, spec.wall_class, spec.ceiling_class}) {
      if (!taxonomy->is_valid_class(l)) {
        throw Error(ErrorCode::kUnknownLabel, fmt::format("structural class {} not in taxonomy", l));
      }
    }
    for (const auto& f : spec.furniture) {
      if (!taxonomy->is_valid_class(f.label)) {
        throw Error(ErrorCode::kUnknownLabel, fmt::format("furniture class {} not in taxonomy", f.label));
      }
    }
  }
  LabeledPointCloud cloud(std::move(taxonomy));
  const auto emit = [&](const Face& face, Label label) {
    for (const Vec3& p : sample_primitive_surface(face, spec.density, rng)) cloud.push_back(p, label);
  };
  const auto room = room_faces(spec);
  emit(room[0], spec.floor_class);
  emit(room[1], spec.ceiling_class);
  for (std::size_t w = 2; w < room.size(); ++w) emit(room[w], spec.wall_class);
  for (const auto& f : spec.furniture) {
    for (const Face& face : box_faces(f.box, 0.0)) emit(face, f.label);
  }
  return cloud;
}

SceneSpec parse_scene_spec(std::string_view text) {
  SceneSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  const auto number = [&](const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty()) {
      throw Error(ErrorCode::kParseError, fmt::format("scene spec line {}: bad number '{}'", line_no, v));
    }
    return d;
  };
  const auto label = [&](const std::string& v) {
    const double d = number(v);
    if (d < 0 || d >= kIgnoreLabel || d != std::floor(d)) {
      throw Error(ErrorCode::kParseError, fmt::format("scene spec line {}: bad class '{}'", line_no, v));
    }
    return static_cast<Label>(d);
  };
  spec.furniture.clear();
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParseError, fmt::format("scene spec line {}: expected key=value", line_no));
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "width") {
      spec.width = number(value);
    } else if (key == "depth") {
      spec.depth = number(value);
    } else if (key == "height") {
      spec.height = number(value);
    } else if (key == "density") {
      spec.density = number(value);
    } else if (key == "floor_class") {
      spec.floor_class = label(value);
    } else if (key == "wall_class") {
      spec.wall_class = label(value);
    } else if (key == "ceiling_class") {
      spec.ceiling_class = label(value);
    } else if (key == "box") {
      std::vector<std::string> parts;
      std::istringstream fields(value);
      for (std::string part; std::getline(fields, part, ',');) parts.push_back(part);
      if (parts.size() != 7) {
        throw Error(ErrorCode::kParseError,
                    fmt::format("scene spec line {}: box needs 7 comma-separated fields", line_no));
      }
      Furniture f;
      f.box.min = Vec3(number(parts[0]), number(parts[1]), number(parts[2]));
      f.box.max = Vec3(number(parts[3]), number(parts[4]), number(parts[5]));
      f.label = label(parts[6]);
      spec.furniture.push_back(f);
    } else {
      throw Error(ErrorCode::kParseError, fmt::format("scene spec line {}: unknown key '{}'", line_no, key));
    }
  }
  return spec;
}

std::string format_scene_spec(const SceneSpec& spec) {
  std::string out = fmt::format(
      "width={}\ndepth={}\nheight={}\ndensity={}\nfloor_class={}\nwall_class={}\nceiling_class={}\n",
      spec.width, spec.depth, spec.height, spec.density, spec.floor_class, spec.wall_class,
      spec.ceiling_class);
  for (const auto& f : spec.furniture) {
    out += fmt::format("box={},{},{},{},{},{},{}\n", f.box.min.x(), f.box.min.y(), f.box.min.z(),
                       f.box.max.x(), f.box.max.y(), f.box.max.z(), f.label);
  }
  return out;
}

}  // namespace doda
