#include <doctest.h>

#include <cmath>

#include "doda/error.hpp"
#include "doda/scenegen.hpp"
#include "support/oracles.hpp"

using namespace doda;

namespace {

// Distance from p to the boundary surface of box b (0 when on a face).
double distance_to_box_surface(const Vec3& p, const Aabb& b) {
  double outside = 0;
  for (int a = 0; a < 3; ++a) {
    const double d = std::max({b.min[a] - p[a], 0.0, p[a] - b.max[a]});
    outside += d * d;
  }
  if (outside > 0) return std::sqrt(outside);
  double inside = INFINITY;
  for (int a = 0; a < 3; ++a) inside = std::min({inside, p[a] - b.min[a], b.max[a] - p[a]});
  return inside;
}

SceneSpec cube_room(double side, double density) {
  SceneSpec s;
  s.width = s.depth = s.height = side;
  s.density = density;
  return s;
}

}  // namespace

TEST_CASE("surface sampling counts") {
  RandomStream r(1);
  const Face zero{Vec3::Zero(), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  CHECK(sample_primitive_surface(zero, 1250, r).empty());
  const Face unit{Vec3::Zero(), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  for (int t = 0; t < 20; ++t) {
    const auto n = sample_primitive_surface(unit, 1250, r).size();
    CHECK(n >= 1249);
    CHECK(n <= 1251);
  }
  // fractional part drives a Bernoulli extra point: 0.5 m^2 at density 3 -> 1 or 2
  const Face half{Vec3::Zero(), Vec3(0.5, 0, 0), Vec3(0, 1, 0)};
  std::size_t twos = 0;
  for (int t = 0; t < 2000; ++t) {
    const auto n = sample_primitive_surface(half, 3, r).size();
    CHECK((n == 1 || n == 2));
    twos += n == 2;
  }
  CHECK(std::abs(static_cast<double>(twos) / 2000 - 0.5) < 0.05);
}

TEST_CASE("surface sampling is uniform over a 6-cell grid") {
  const Face f{Vec3(1, 1, 0), Vec3(2, 0, 0), Vec3(0, 3, 0)};
  std::vector<double> observed(6, 0);
  double total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomStream r(seed);
    for (const auto& p : sample_primitive_surface(f, 100, r)) {
      const int cx = std::min(1, static_cast<int>(p.x() - 1));
      const int cy = std::min(2, static_cast<int>(p.y() - 1));
      observed[static_cast<std::size_t>(cx * 3 + cy)] += 1;
      total += 1;
      CHECK(std::abs(p.z()) <= 1e-12);
    }
  }
  const std::vector<double> expected(6, total / 6);
  CHECK(oracle::chi_square_statistic(observed, expected) < oracle::chi_square_critical(5, 0.01));
}

TEST_CASE("empty 2 m room at density 100 has about 2400 structural points") {
  RandomStream r(2);
  const auto c = generate_scene(cube_room(2, 100), toy_taxonomy(), r);
  CHECK(c.size() >= 2394);
  CHECK(c.size() <= 2406);
  for (Label l : c.labels) CHECK(l <= toy_class::kCeiling);
}

TEST_CASE("every point lies on its declared surface") {
  RandomStream r(3);
  SceneSpec s = cube_room(4, 200);
  s.height = 2.8;
  s.furniture.push_back({Aabb{Vec3(1, 1, 0), Vec3(2, 1.5, 0.8)}, toy_class::kTable});
  s.furniture.push_back({Aabb{Vec3(2.5, 2.5, 0.5), Vec3(3, 3.5, 1.5)}, toy_class::kShelf});
  const auto c = generate_scene(s, toy_taxonomy(), r);
  std::size_t box_points = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3& p = c.positions[i];
    const Label l = c.labels[i];
    if (l == toy_class::kFloor) {
      CHECK(std::abs(p.z()) <= 1e-9);
    } else if (l == toy_class::kCeiling) {
      CHECK(std::abs(p.z() - s.height) <= 1e-9);
    } else if (l == toy_class::kWall) {
      const double d = std::min({std::abs(p.x()), std::abs(p.x() - s.width), std::abs(p.y()),
                                 std::abs(p.y() - s.depth)});
      CHECK(d <= 1e-9);
    } else {
      const auto& box = l == toy_class::kTable ? s.furniture[0].box : s.furniture[1].box;
      CHECK(distance_to_box_surface(p, box) <= 1e-9);
      ++box_points;
    }
  }
  CHECK(box_points > 0);
}

TEST_CASE("boxes resting on the floor have no bottom face") {
  const Aabb on_floor{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  const Aabb raised{Vec3(0, 0, 0.5), Vec3(1, 1, 1)};
  CHECK(box_faces(on_floor, 0.0).size() == 5);
  CHECK(box_faces(raised, 0.0).size() == 6);
  double area = 0;
  for (const auto& f : box_faces(on_floor, 0.0)) area += f.area();
  CHECK(area == doctest::Approx(5.0));
  CHECK(room_faces(cube_room(2, 1)).size() == 6);
}

TEST_CASE("class histogram follows face areas") {
  RandomStream r(4);
  SceneSpec s = cube_room(5, 300);
  s.height = 3;
  s.furniture.push_back({Aabb{Vec3(1, 1, 0), Vec3(2, 3, 1)}, toy_class::kBed});
  const auto c = generate_scene(s, toy_taxonomy(), r);
  std::vector<double> area(toy_taxonomy()->size(), 0.0);
  area[toy_class::kFloor] = 25;
  area[toy_class::kCeiling] = 25;
  area[toy_class::kWall] = 4 * 5 * 3;
  for (const auto& f : box_faces(s.furniture[0].box, 0.0)) area[toy_class::kBed] += f.area();
  double total_area = 0;
  for (double a : area) total_area += a;
  std::vector<double> count(area.size(), 0.0);
  for (Label l : c.labels) count[l] += 1;
  const double n = static_cast<double>(c.size());
  for (std::size_t j = 0; j < area.size(); ++j) {
    const double p = area[j] / total_area;
    const double sd = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(count[j] - n * p) <= 3 * sd + 6);
  }
}

TEST_CASE("same spec and seed give identical clouds") {
  const SceneSpec s = make_template(SceneTemplate::kCluttered, *std::make_unique<RandomStream>(5), 300);
  RandomStream a(6), b(6);
  const auto x = generate_scene(s, toy_taxonomy(), a);
  const auto y = generate_scene(s, toy_taxonomy(), b);
  CHECK(x.positions == y.positions);
  CHECK(x.labels == y.labels);
}

TEST_CASE("spec validation") {
  auto code_of = [](const SceneSpec& s) {
    try {
      s.validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kEmptyInput;  // sentinel for "no error"
  };
  SceneSpec ok = cube_room(4, 100);
  ok.furniture.push_back({Aabb{Vec3(1, 1, 0), Vec3(2, 2, 1)}, 3});
  CHECK(code_of(ok) == ErrorCode::kEmptyInput);
  SceneSpec overlap = ok;
  overlap.furniture.push_back({Aabb{Vec3(1.5, 1.5, 0), Vec3(2.5, 2.5, 1)}, 4});
  CHECK(code_of(overlap) == ErrorCode::kOverlapError);
  SceneSpec outside = ok;
  outside.furniture[0].box.max.x() = 4.5;
  CHECK(code_of(outside) == ErrorCode::kInvalidArgument);
  SceneSpec bad_density = ok;
  bad_density.density = 0;
  CHECK(code_of(bad_density) == ErrorCode::kInvalidArgument);
  SceneSpec bad_dim = ok;
  bad_dim.width = -1;
  CHECK(code_of(bad_dim) == ErrorCode::kInvalidArgument);
  RandomStream r(0);
  CHECK_THROWS_AS(generate_scene(overlap, toy_taxonomy(), r), Error);
}

TEST_CASE("scene spec text round trip") {
  RandomStream r(7);
  const SceneSpec s = make_template(SceneTemplate::kCluttered, r, 500);
  const SceneSpec back = parse_scene_spec(format_scene_spec(s));
  CHECK(back.width == s.width);
  CHECK(back.height == s.height);
  CHECK(back.density == s.density);
  REQUIRE(back.furniture.size() == s.furniture.size());
  for (std::size_t i = 0; i < s.furniture.size(); ++i) {
    CHECK(back.furniture[i].box.min == s.furniture[i].box.min);
    CHECK(back.furniture[i].box.max == s.furniture[i].box.max);
    CHECK(back.furniture[i].label == s.furniture[i].label);
  }
  CHECK_THROWS_AS(parse_scene_spec("width=4\ncolour=red\n"), Error);
  CHECK_THROWS_AS(parse_scene_spec("width=four\n"), Error);
  CHECK_THROWS_AS(parse_scene_spec("box=1,2,3\n"), Error);
}

TEST_CASE("every template yields a valid scene") {
  for (auto kind : kAllTemplates) {
    CAPTURE(to_string(kind));
    CHECK(parse_scene_template(to_string(kind)) == kind);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      RandomStream r(seed);
      const SceneSpec s = make_template(kind, r, 100);
      CHECK_NOTHROW(s.validate());
      const auto c = generate_scene(s, toy_taxonomy(), r);
      CHECK_NOTHROW(c.validate());
      CHECK(c.size() > 100);
    }
  }
  CHECK_THROWS_AS(parse_scene_template("castle"), Error);
}

TEST_CASE("templates: occluder and tail-heavy contents") {
  RandomStream r(8);
  const SceneSpec one = make_template(SceneTemplate::kOneOccluder, r);
  CHECK(one.furniture.size() == 1);
  const SceneSpec empty = make_template(SceneTemplate::kEmptyRoom, r);
  CHECK(empty.furniture.empty());
  const SceneSpec tail = make_template(SceneTemplate::kTailHeavy, r, 200);
  const auto c = generate_scene(tail, toy_taxonomy(), r);
  std::vector<std::size_t> hist(8, 0);
  for (Label l : c.labels) ++hist[l];
  // the rare classes exist but are much smaller than the head furniture classes
  CHECK(hist[toy_class::kChair] > 0);
  CHECK(hist[toy_class::kShelf] + hist[toy_class::kChair] < hist[toy_class::kCabinet] + hist[toy_class::kBed]);
}
