#include <doctest.h>

#include <numeric>
#include <set>

#include "doda/error.hpp"
#include "doda/scenegen.hpp"
#include "doda/tacm.hpp"
#include "support/oracles.hpp"

using namespace doda;

namespace {

TaxonomyPtr three() {
  return std::make_shared<ClassTaxonomy>("three", std::vector<std::string>{"a", "b", "c"});
}

LabeledPointCloud unit_cloud(std::size_t n, std::uint64_t seed, TaxonomyPtr tax = toy_taxonomy()) {
  RandomStream r(seed);
  auto c = oracle::random_cloud(n, tax, r);
  // pin the corners so the AABB is exactly the unit cube
  c.positions[0] = Vec3::Zero();
  c.positions[1] = Vec3::Ones();
  return c;
}

TacmConfig shape_config(int nx, int ny, int nz, double dphi) {
  TacmConfig c;
  c.partitions = {nx, ny, nz};
  c.boundary_jitter = dphi;
  c.min_tail_cuboids = 0;
  return c;
}

void check_partition(const CuboidSet& set, const LabeledPointCloud& cloud) {
  std::vector<int> hits(cloud.size(), 0);
  for (const auto& cub : set.cuboids) {
    for (std::size_t idx : cub.members) {
      ++hits[idx];
      CHECK(cub.bounds.contains(cloud.positions[idx]));
    }
  }
  for (int h : hits) CHECK(h == 1);
  const auto brute = oracle::brute_partition_cells(cloud, set.boundaries);
  for (std::size_t c = 0; c < set.cuboids.size(); ++c) {
    for (std::size_t idx : set.cuboids[c].members) CHECK(brute[idx] == c);
  }
  const auto box = oracle::brute_aabb(cloud.positions);
  for (int a = 0; a < 3; ++a) {
    CHECK(set.boundaries[a].front() == box.min[a]);
    CHECK(set.boundaries[a].back() == box.max[a]);
    for (std::size_t i = 1; i < set.boundaries[a].size(); ++i) {
      CHECK(set.boundaries[a][i] > set.boundaries[a][i - 1]);
    }
  }
}

std::vector<Vec3> member_positions(const CuboidSet& set, std::size_t cell) {
  std::vector<Vec3> out;
  for (std::size_t idx : set.cuboids[cell].members) out.push_back(set.cloud.positions[idx]);
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("partition: one cell holds everything") {
  const auto c = unit_cloud(500, 1);
  RandomStream r(1);
  const auto set = partition_cuboids(c, shape_config(1, 1, 1, 0.1), r);
  REQUIRE(set.cuboids.size() == 1);
  CHECK(set.cuboids[0].members.size() == 500);
  CHECK(set.cuboids[0].bounds.min == Vec3::Zero());
  CHECK(set.cuboids[0].bounds.max == Vec3::Ones());
}

TEST_CASE("partition: equal division without jitter") {
  const auto c = unit_cloud(500, 2);
  RandomStream r(2);
  const auto set = partition_cuboids(c, shape_config(2, 2, 1, 0.0), r);
  REQUIRE(set.cuboids.size() == 4);
  CHECK(set.boundaries[0] == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(set.boundaries[1] == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(set.boundaries[2] == std::vector<double>{0.0, 1.0});
  check_partition(set, c);
}

TEST_CASE("partition: jittered boundaries match the membership oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = unit_cloud(2000, 100 + seed);
    RandomStream r(seed);
    const auto set = partition_cuboids(c, shape_config(2, 2, 1, 0.1), r);
    for (int a = 0; a < 2; ++a) CHECK(std::abs(set.boundaries[a][1] - 0.5) <= 0.1);
    check_partition(set, c);
  }
}

TEST_CASE("partition: points on boundaries follow the half-open rule") {
  LabeledPointCloud c(toy_taxonomy());
  for (double x : {0.0, 0.5, 1.0}) c.push_back(Vec3(x, 0, 0), 0);
  const auto set = partition_at(c, {std::vector<double>{0, 0.5, 1}, std::vector<double>{0, 1},
                                    std::vector<double>{0, 1}});
  CHECK(set.cuboids[0].members == std::vector<std::size_t>{0});
  CHECK(set.cuboids[1].members == std::vector<std::size_t>{1, 2});
}

TEST_CASE("partition: degenerate extents are rejected") {
  LabeledPointCloud c(toy_taxonomy());
  c.push_back(Vec3(0, 0, 0), 0);
  c.push_back(Vec3(0.15, 1, 1), 0);
  RandomStream r(3);
  CHECK(code_of([&] { (void)partition_cuboids(c, shape_config(2, 1, 1, 0.1), r); }) ==
        ErrorCode::kDegeneratePartition);
  CHECK_NOTHROW(partition_cuboids(c, shape_config(1, 2, 1, 0.1), r));
  CHECK(code_of([&] { (void)partition_cuboids(LabeledPointCloud(toy_taxonomy()), shape_config(1, 1, 1, 0), r); }) ==
        ErrorCode::kEmptyInput);
  CHECK(code_of([&] {
          (void)partition_at(c, {std::vector<double>{0, 0.2, 0.1, 1}, std::vector<double>{0, 1},
                                 std::vector<double>{0, 1}});
        }) == ErrorCode::kDegeneratePartition);
}

TEST_CASE("permute: probability zero is the identity") {
  const auto c = unit_cloud(300, 4);
  RandomStream r(4);
  const auto set = partition_cuboids(c, shape_config(2, 2, 1, 0.1), r);
  const auto same = permute_cuboids(set, 0.0, r);
  CHECK_FALSE(same.permuted);
  CHECK(same.cloud.positions == set.cloud.positions);
}

TEST_CASE("permute: a forced swap exchanges cell centers rigidly") {
  const auto c = unit_cloud(400, 5);
  RandomStream r(5);
  const auto set = partition_cuboids(c, shape_config(2, 1, 1, 0.1), r);
  const auto swapped = apply_permutation(set, {1, 0});
  CHECK(swapped.permuted);
  CHECK(swapped.cloud.labels == set.cloud.labels);
  for (std::size_t cell = 0; cell < 2; ++cell) {
    const std::size_t other = 1 - cell;
    CHECK((swapped.cuboids[other].bounds.center() - set.cell_bounds(other).center()).norm() < 1e-12);
    CHECK(swapped.cuboids[other].members == set.cuboids[cell].members);
    CHECK(oracle::pairwise_distance_error(member_positions(set, cell), member_positions(swapped, other)) <= 1e-9);
  }
}

TEST_CASE("permute: random permutations preserve every cuboid's shape") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = unit_cloud(600, 200 + seed);
    RandomStream r(seed);
    const auto set = partition_cuboids(c, shape_config(3, 3, 1, 0.05), r);
    const auto p = permute_cuboids(set, 1.0, r);
    REQUIRE(p.permuted);
    for (std::size_t cell = 0; cell < p.cuboids.size(); ++cell) {
      const auto& cub = p.cuboids[cell];
      CHECK((cub.bounds.center() - set.cell_bounds(cell).center()).norm() < 1e-12);
      // find where it came from by member identity
      std::size_t from = 0;
      while (set.cuboids[from].members != cub.members) ++from;
      CHECK(oracle::pairwise_distance_error(member_positions(set, from), member_positions(p, cell)) <= 1e-9);
    }
  }
}

TEST_CASE("tail classes: selection and the strict rule") {
  CHECK(select_tail_classes({0.5, 0.3, 0.2}, 2) == std::vector<Label>{2, 1});
  CHECK(select_tail_classes({0.5, 0.0, 0.25, 0.25}, 2) == std::vector<Label>{2, 3});
  CHECK(select_tail_classes({0.5, 0.5}, 5).size() == 2);
  const std::vector<double> r{0.5, 0.3, 0.2};
  const std::vector<Label> tail{2, 1};
  // 40% class 2
  CHECK(is_tail_cuboid({2, 2, 0, 0, 0}, tail, r, kIgnoreLabel));
  CHECK_FALSE(is_tail_cuboid({0, 0, 0, 0}, tail, r, kIgnoreLabel));
  // exactly at the ratio is not enough
  CHECK_FALSE(is_tail_cuboid({2, 0, 0, 0, 0}, tail, r, kIgnoreLabel));
  // ignored points do not count toward the denominator
  CHECK(is_tail_cuboid({2, 0, kIgnoreLabel, kIgnoreLabel, kIgnoreLabel, kIgnoreLabel}, tail, r, kIgnoreLabel));
  CHECK_FALSE(is_tail_cuboid({}, tail, r, kIgnoreLabel));
}

TEST_CASE("tail flags equal a counting oracle") {
  RandomStream g(6);
  for (int t = 0; t < 30; ++t) {
    auto c = oracle::random_cloud(800, toy_taxonomy(), g, Vec3::Zero(), Vec3(2, 2, 1), 0.1);
    // skew labels so some classes are rare
    for (auto& l : c.labels) {
      if (l != kIgnoreLabel && l >= 4 && g.bernoulli(0.8)) l = static_cast<Label>(g.index(4));
    }
    std::vector<double> ratios(8);
    for (auto& v : ratios) v = g.bernoulli(0.2) ? 0.0 : g.uniform(0.01, 0.3);
    const std::size_t n_tail = 1 + g.index(3);
    RandomStream r(static_cast<std::uint64_t>(t));
    const auto set = partition_cuboids(c, shape_config(3, 2, 1, 0.1), r);
    const auto flags = classify_tail_cuboids(set, ratios, n_tail);
    for (std::size_t cell = 0; cell < set.cuboids.size(); ++cell) {
      std::vector<Label> labels;
      for (std::size_t idx : set.cuboids[cell].members) labels.push_back(c.labels[idx]);
      CHECK(flags[cell] == oracle::brute_is_tail(labels, ratios, n_tail));
    }
  }
}

TEST_CASE("queue: capacity and FIFO eviction") {
  TailCuboidQueue q(256);
  for (int i = 0; i < 300; ++i) {
    QueuedCuboid item;
    item.labels = {static_cast<Label>(i % 8)};
    q.push(item);
  }
  CHECK(q.size() == 256);
  CHECK(q.pushed() == 300);
  CHECK(q[0].serial == 44);
  CHECK(q[255].serial == 299);
  TailCuboidQueue none(0);
  none.push(QueuedCuboid{});
  CHECK(none.empty());
}

TEST_CASE("queue: no flagged cuboids leaves it unchanged") {
  const auto c = unit_cloud(200, 7);
  RandomStream r(7);
  const auto set = partition_cuboids(c, shape_config(2, 2, 1, 0.1), r);
  TailCuboidQueue q(4);
  update_tail_queue(q, set, std::vector<bool>(4, false));
  CHECK(q.empty());
  CHECK(q.pushed() == 0);
}

TEST_CASE("queue: stored cuboids are canonical deep copies") {
  const auto c = unit_cloud(300, 8);
  RandomStream r(8);
  const auto set = partition_cuboids(c, shape_config(2, 2, 1, 0.1), r);
  TailCuboidQueue q(8);
  update_tail_queue(q, set, {false, true, false, true});
  REQUIRE(q.size() == 2);
  const auto& item = q[0];
  const auto& cub = set.cuboids[1];
  CHECK(item.positions.size() == cub.members.size());
  CHECK((item.extent - cub.bounds.extent()).norm() < 1e-15);
  for (std::size_t k = 0; k < item.positions.size(); ++k) {
    CHECK((item.positions[k] - (c.positions[cub.members[k]] - cub.bounds.min)).norm() < 1e-15);
    CHECK(item.labels[k] == c.labels[cub.members[k]]);
    CHECK((item.positions[k].array() >= -1e-15).all());
  }
}

TEST_CASE("queue: interleaved updates replay against a reference FIFO") {
  RandomStream g(9);
  TailCuboidQueue q(13);
  oracle::ReferenceFifo ref(13);
  std::size_t id = 0;
  std::vector<std::size_t> sizes;  // id -> member count, used to recognize items
  for (int scene = 0; scene < 40; ++scene) {
    const auto c = unit_cloud(100 + g.index(400), 1000 + static_cast<std::uint64_t>(scene));
    RandomStream r(static_cast<std::uint64_t>(scene));
    const auto set = partition_cuboids(c, shape_config(2, 2, 1, 0.1), r);
    std::vector<bool> flags(4);
    for (std::size_t k = 0; k < 4; ++k) {
      flags[k] = g.bernoulli(0.4);
      if (flags[k]) {
        ref.push(id++);
        sizes.push_back(set.cuboids[k].members.size());
      }
    }
    update_tail_queue(q, set, flags);
    REQUIRE(q.size() == ref.items().size());
    for (std::size_t k = 0; k < q.size(); ++k) {
      CHECK(q[k].serial == ref.items()[k]);
      CHECK(q[k].positions.size() == sizes[ref.items()[k]]);
    }
  }
}

TEST_CASE("mix: extremes") {
  const auto s = unit_cloud(400, 10);
  const auto t = unit_cloud(500, 11);
  RandomStream r(10);
  const auto cfg = shape_config(2, 2, 1, 0.1);
  const auto ss = partition_cuboids(s, cfg, r);
  const auto ts = permute_cuboids(partition_cuboids(t, cfg, r), 1.0, r);

  const auto none = mix_cuboids(ss, ts, 0.0, r);
  CHECK(none.cloud.size() == t.size());
  for (auto p : none.point_provenance) CHECK(p == Provenance::kTarget);
  // same points as the permuted target, grouped by cell
  std::size_t k = 0;
  for (std::size_t cell = 0; cell < 4; ++cell) {
    for (std::size_t idx : ts.cuboids[cell].members) {
      CHECK(none.cloud.positions[k] == ts.cloud.positions[idx]);
      CHECK(none.cloud.labels[k] == ts.cloud.labels[idx]);
      ++k;
    }
  }

  const auto all = mix_cuboids(ss, ts, 1.0, r);
  CHECK(all.cloud.size() == s.size());
  for (auto p : all.point_provenance) CHECK(p == Provenance::kSource);
  for (const auto& cell : all.cells) {
    CHECK((cell.bounds.center() - ts.cell_bounds(cell.cell).center()).norm() < 1e-12);
    CHECK(cell.end - cell.begin == ss.cuboids[cell.cell].members.size());
    // rigid translation of the source cuboid
    std::vector<Vec3> moved(all.cloud.positions.begin() + static_cast<long>(cell.begin),
                            all.cloud.positions.begin() + static_cast<long>(cell.end));
    CHECK(oracle::pairwise_distance_error(member_positions(ss, cell.cell), moved) <= 1e-9);
  }
}

TEST_CASE("mix: labels follow provenance") {
  const auto s = unit_cloud(400, 12);
  auto t = unit_cloud(400, 13);
  for (auto& l : t.labels) l = 7;  // pseudo labels all class 7; sources never use it
  auto s2 = s;
  for (auto& l : s2.labels) l = static_cast<Label>(l % 7);
  RandomStream r(12);
  const auto cfg = shape_config(2, 2, 1, 0.1);
  const auto m = mix_cuboids(partition_cuboids(s2, cfg, r), partition_cuboids(t, cfg, r), 0.5, r);
  for (std::size_t i = 0; i < m.cloud.size(); ++i) {
    CHECK((m.point_provenance[i] == Provenance::kTarget) == (m.cloud.labels[i] == 7));
  }
}

TEST_CASE("mix: shape mismatch") {
  const auto s = unit_cloud(100, 14);
  RandomStream r(14);
  const auto a = partition_cuboids(s, shape_config(2, 2, 1, 0.1), r);
  const auto b = partition_cuboids(s, shape_config(3, 2, 1, 0.1), r);
  CHECK(code_of([&] { (void)mix_cuboids(a, b, 0.5, r); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("compose: without a queue or tail cells it equals plain mixing") {
  const auto s = unit_cloud(500, 15);
  const auto t = unit_cloud(500, 16);
  TacmConfig cfg;
  TailCuboidQueue q(16);
  const std::vector<double> ratios(8, 0.0);  // no positive ratio, so no tail class
  RandomStream a(17), b(17);
  const auto res = tacm_compose(s, t, ratios, cfg, q, a);
  const auto ss = permute_cuboids(partition_cuboids(s, cfg, b), cfg.permute_prob, b);
  const auto ts = permute_cuboids(partition_cuboids(t, cfg, b), cfg.permute_prob, b);
  const auto ref = mix_cuboids(ss, ts, cfg.mix_prob, b);
  CHECK(res.scene.cloud.positions == ref.cloud.positions);
  CHECK(res.scene.cloud.labels == ref.cloud.labels);
  CHECK(res.queue_replaced.empty());
  CHECK(q.empty());
}

TEST_CASE("compose: enough tail cells means no queue replacement") {
  // every point is the rare class 2, so every non-empty cell is tail
  auto s = unit_cloud(400, 18, three());
  auto t = unit_cloud(400, 19, three());
  for (auto& l : s.labels) l = 2;
  for (auto& l : t.labels) l = 2;
  TacmConfig cfg;
  TailCuboidQueue q(16);
  QueuedCuboid item;
  item.positions = {Vec3(0.1, 0.1, 0.1)};
  item.labels = {2};
  item.extent = Vec3(0.2, 0.2, 0.2);
  q.push(item);
  const std::vector<double> ratios{0.6, 0.3, 0.1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomStream r(seed);
    const auto res = tacm_compose(s, t, ratios, cfg, q, r);
    CHECK(res.queue_replaced.empty());
  }
}

TEST_CASE("compose: scripted oversampling replaces two non-tail cells") {
  auto s = unit_cloud(400, 20, three());
  auto t = unit_cloud(400, 21, three());
  for (auto& l : s.labels) l = 0;
  for (auto& l : t.labels) l = 0;
  TacmConfig cfg;
  cfg.permute_prob = 0.0;
  TailCuboidQueue q(16);
  for (int i = 0; i < 2; ++i) {
    QueuedCuboid item;
    item.positions = {Vec3(0.05, 0.05, 0.05), Vec3(0.1, 0.2, 0.3)};
    item.labels = {2, 2};
    item.extent = Vec3(0.1, 0.2, 0.3);
    q.push(item);
  }
  const std::vector<double> ratios{0.6, 0.3, 0.1};
  RandomStream r(22);
  const auto res = tacm_compose(s, t, ratios, cfg, q, r);
  REQUIRE(res.queue_replaced.size() == 2);
  CHECK(res.queue_replaced[0] != res.queue_replaced[1]);
  const auto flags = classify_mixed_cells(res.scene, ratios, cfg.tail_classes);
  CHECK(std::count(flags.begin(), flags.end(), true) == 2);
  for (std::size_t cell : res.queue_replaced) {
    const auto& mc = res.scene.cells[cell];
    CHECK(mc.provenance == Provenance::kQueue);
    CHECK(mc.end - mc.begin == 2);
    CHECK(res.scene.cloud.labels[mc.begin] == 2);
  }
  // target had no tail cuboids, nothing new was pushed
  CHECK(res.queue_pushed == 0);
  CHECK(q.size() == 2);
}

TEST_CASE("compose: target tail cuboids enter the queue") {
  auto s = unit_cloud(400, 23, three());
  auto t = unit_cloud(400, 24, three());
  for (auto& l : s.labels) l = 0;
  for (std::size_t i = 0; i < t.size(); ++i) t.labels[i] = t.positions[i].x() < 0.3 ? 2 : 0;
  TacmConfig cfg;
  TailCuboidQueue q(16);
  const std::vector<double> ratios{0.6, 0.3, 0.1};
  RandomStream r(25);
  const auto res = tacm_compose(s, t, ratios, cfg, q, r);
  CHECK(res.queue_pushed >= 1);
  CHECK(q.size() == res.queue_pushed);
  for (std::size_t k = 0; k < q.size(); ++k) {
    CHECK(oracle::brute_is_tail(q[k].labels, ratios, cfg.tail_classes));
  }
}

TEST_CASE("compose: attributes follow their points") {
  const auto s = unit_cloud(300, 26);
  const auto t = unit_cloud(300, 27);
  PointAttributes sa(300, 2), ta(300, 2);
  for (int i = 0; i < 300; ++i) {
    sa(i, 0) = 1;
    sa(i, 1) = i;
    ta(i, 0) = 2;
    ta(i, 1) = i;
  }
  TacmConfig cfg;
  TailCuboidQueue q(16);
  const std::vector<double> ratios(8, 0.125);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomStream r(seed);
    const auto res = tacm_compose(s, t, ratios, cfg, q, r, &sa, &ta);
    REQUIRE(static_cast<std::size_t>(res.scene.attributes.rows()) == res.scene.cloud.size());
    for (std::size_t i = 0; i < res.scene.cloud.size(); ++i) {
      const auto row = res.scene.attributes.row(static_cast<Eigen::Index>(i));
      if (res.scene.point_provenance[i] == Provenance::kQueue) continue;
      const auto& origin = row(0) == 1 ? s : t;
      CHECK(row(0) == (res.scene.point_provenance[i] == Provenance::kSource ? 1 : 2));
      CHECK(origin.labels[static_cast<std::size_t>(row(1))] == res.scene.cloud.labels[i]);
    }
  }
  PointAttributes wrong(5, 2);
  RandomStream r(0);
  CHECK(code_of([&] { (void)tacm_compose(s, t, ratios, cfg, q, r, &wrong, &ta); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("config validation") {
  TacmConfig c;
  CHECK_NOTHROW(c.validate());
  c.partitions = {0, 1, 1};
  CHECK_THROWS_AS(c.validate(), Error);
  c = TacmConfig{};
  c.mix_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TacmConfig{};
  c.min_tail_cuboids = 5;
  CHECK_THROWS_AS(c.validate(), Error);
}
