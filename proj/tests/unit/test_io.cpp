#include <doctest.h>

#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "doda/error.hpp"
#include "doda/io.hpp"
#include "doda/scenegen.hpp"
#include "support/oracles.hpp"

using namespace doda;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

// Positions representable in float32 so binary PLY must reproduce them bit for bit.
LabeledPointCloud float_cloud(std::size_t n, std::uint64_t seed) {
  RandomStream r(seed);
  auto c = oracle::random_cloud(n, toy_taxonomy(), r, Vec3(-5, -5, -1), Vec3(5, 5, 3), 0.05);
  for (auto& p : c.positions) {
    for (int a = 0; a < 3; ++a) p[a] = static_cast<double>(static_cast<float>(p[a]));
  }
  return c;
}

}  // namespace

TEST_CASE("format tags and extensions") {
  for (auto f : {FileFormat::kPlyAscii, FileFormat::kPlyBinaryLe, FileFormat::kXyzlText}) {
    CHECK(parse_file_format(to_string(f)) == f);
  }
  CHECK(code_of([] { (void)parse_file_format("obj"); }) == ErrorCode::kInvalidArgument);
  CHECK(format_for_path("a/b.ply") == FileFormat::kPlyBinaryLe);
  CHECK(format_for_path("a/b.xyzl") == FileFormat::kXyzlText);
  CHECK(format_for_path("b.txt") == FileFormat::kXyzlText);
}

TEST_CASE("xyzl line parses") {
  const auto dir = oracle::scratch_dir("io_line");
  write_text(dir / "one.xyzl", "0.5 1.0 2.0 3\n");
  const auto c = read_point_file(dir / "one.xyzl", FileFormat::kXyzlText, toy_taxonomy());
  REQUIRE(c.size() == 1);
  CHECK(c.positions[0] == Vec3(0.5, 1.0, 2.0));
  CHECK(c.labels[0] == 3);
}

TEST_CASE("empty inputs") {
  const auto dir = oracle::scratch_dir("io_empty");
  write_text(dir / "e.xyzl", "");
  CHECK(read_point_file(dir / "e.xyzl", FileFormat::kXyzlText, toy_taxonomy()).empty());
  const LabeledPointCloud empty(toy_taxonomy());
  for (auto f : {FileFormat::kPlyAscii, FileFormat::kPlyBinaryLe, FileFormat::kXyzlText}) {
    const auto p = dir / fmt::format("e_{}", to_string(f));
    write_point_file(empty, p, f);
    CHECK(read_point_file(p, f, toy_taxonomy()).empty());
  }
  CHECK(oracle::read_file(dir / "e_ply_ascii").find("element vertex 0\n") != std::string::npos);
}

TEST_CASE("ply header declares the point count") {
  const auto dir = oracle::scratch_dir("io_header");
  const auto c = float_cloud(123, 1);
  write_point_file(c, dir / "a.ply", FileFormat::kPlyBinaryLe);
  const auto text = oracle::read_file(dir / "a.ply");
  CHECK(text.rfind("ply\nformat binary_little_endian 1.0\n", 0) == 0);
  CHECK(text.find("element vertex 123\n") != std::string::npos);
  CHECK(text.find("property ushort label\n") != std::string::npos);
}

TEST_CASE("round trips on 10k-point clouds") {
  const auto dir = oracle::scratch_dir("io_roundtrip");
  const auto c = float_cloud(10000, 2);
  for (auto f : {FileFormat::kPlyAscii, FileFormat::kPlyBinaryLe, FileFormat::kXyzlText}) {
    CAPTURE(to_string(f));
    const auto p = dir / std::string(to_string(f));
    write_point_file(c, p, f);
    const auto back = read_point_file(p, f, toy_taxonomy());
    REQUIRE(back.size() == c.size());
    CHECK(back.labels == c.labels);
    double worst = 0;
    for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, (back.positions[i] - c.positions[i]).cwiseAbs().maxCoeff());
    if (f == FileFormat::kPlyBinaryLe) {
      CHECK(worst == 0.0);
    } else {
      CHECK(worst <= 1e-6);
    }
  }
}

TEST_CASE("binary ply stores positions as little-endian float32") {
  const auto dir = oracle::scratch_dir("io_bytes");
  LabeledPointCloud c(toy_taxonomy());
  c.push_back(Vec3(1.5, -2.25, 3.0), 4);
  write_point_file(c, dir / "p.ply", FileFormat::kPlyBinaryLe);
  const auto bytes = oracle::read_file(dir / "p.ply");
  const auto body = bytes.substr(bytes.find("end_header\n") + 11);
  REQUIRE(body.size() == 14);
  const unsigned char* u = reinterpret_cast<const unsigned char*>(body.data());
  float x;
  std::uint32_t bits = u[0] | (u[1] << 8) | (u[2] << 16) | (static_cast<std::uint32_t>(u[3]) << 24);
  std::memcpy(&x, &bits, 4);
  CHECK(x == 1.5f);
  CHECK((u[12] | (u[13] << 8)) == 4);
}

TEST_CASE("ignore labels survive every format") {
  const auto dir = oracle::scratch_dir("io_ignore");
  LabeledPointCloud c(toy_taxonomy());
  c.push_back(Vec3(0, 0, 0), kIgnoreLabel);
  c.push_back(Vec3(1, 0, 0), 2);
  for (auto f : {FileFormat::kPlyAscii, FileFormat::kPlyBinaryLe, FileFormat::kXyzlText}) {
    const auto p = dir / std::string(to_string(f));
    write_point_file(c, p, f);
    CHECK(read_point_file(p, f, toy_taxonomy()).labels == c.labels);
  }
}

TEST_CASE("ply without a label property reads as ignore") {
  const auto dir = oracle::scratch_dir("io_nolabel");
  write_text(dir / "n.ply",
             "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n"
             "property double z\nend_header\n1 2 3\n4 5 6\n");
  const auto c = read_point_file(dir / "n.ply", FileFormat::kPlyAscii, toy_taxonomy());
  REQUIRE(c.size() == 2);
  CHECK(c.labels == std::vector<Label>{kIgnoreLabel, kIgnoreLabel});
  CHECK(c.positions[1] == Vec3(4, 5, 6));
}

TEST_CASE("parse errors") {
  const auto dir = oracle::scratch_dir("io_errors");
  const auto tax = toy_taxonomy();
  write_text(dir / "bad.xyzl", "0 0 0 1\n0 zero 0 1\n");
  CHECK(code_of([&] { (void)read_point_file(dir / "bad.xyzl", FileFormat::kXyzlText, tax); }) ==
        ErrorCode::kParseError);
  write_text(dir / "few.xyzl", "0 0 1\n");
  CHECK(code_of([&] { (void)read_point_file(dir / "few.xyzl", FileFormat::kXyzlText, tax); }) ==
        ErrorCode::kParseError);
  write_text(dir / "range.xyzl", "0 0 0 8\n");
  CHECK(code_of([&] { (void)read_point_file(dir / "range.xyzl", FileFormat::kXyzlText, tax); }) ==
        ErrorCode::kUnknownLabel);
  // declared count larger than the body
  write_text(dir / "short.ply",
             "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
             "property float z\nproperty ushort label\nend_header\n0 0 0 1\n");
  CHECK(code_of([&] { (void)read_point_file(dir / "short.ply", FileFormat::kPlyAscii, tax); }) ==
        ErrorCode::kParseError);
  write_text(dir / "nomagic.ply", "plx\nend_header\n");
  CHECK(code_of([&] { (void)read_point_file(dir / "nomagic.ply", FileFormat::kPlyAscii, tax); }) ==
        ErrorCode::kParseError);
  // truncated binary body
  const auto c = float_cloud(10, 3);
  write_point_file(c, dir / "t.ply", FileFormat::kPlyBinaryLe);
  auto bytes = oracle::read_file(dir / "t.ply");
  write_text(dir / "t.ply", bytes.substr(0, bytes.size() - 5));
  CHECK(code_of([&] { (void)read_point_file(dir / "t.ply", FileFormat::kPlyBinaryLe, tax); }) ==
        ErrorCode::kParseError);
  CHECK(code_of([&] { (void)read_point_file(dir / "absent.ply", FileFormat::kPlyBinaryLe, tax); }) ==
        ErrorCode::kMissingFile);
}

TEST_CASE("write failure is an io error") {
  const auto c = float_cloud(3, 4);
  CHECK(code_of([&] { write_point_file(c, "/nonexistent_dir_x/y/z.ply", FileFormat::kPlyBinaryLe); }) ==
        ErrorCode::kIoError);
}

TEST_CASE("manifest round trip keeps order and resolves paths") {
  const auto dir = oracle::scratch_dir("io_manifest");
  fs::create_directories(dir / "scenes");
  DatasetManifest m{DomainRole::kTarget, "toy8", {}};
  for (int i = 0; i < 100; ++i) {
    const auto p = dir / "scenes" / fmt::format("s{:03d}.xyzl", i);
    write_text(p, "");
    m.entries.push_back({fmt::format("scene_{}", 99 - i), p});
  }
  write_manifest(m, dir / "m.txt");
  const auto text = oracle::read_file(dir / "m.txt");
  CHECK(text.rfind("role=target taxonomy=toy8\n", 0) == 0);
  CHECK(text.find("scene_99\tscenes/s000.xyzl\n") != std::string::npos);
  const auto back = load_manifest(dir / "m.txt");
  CHECK(back.role == DomainRole::kTarget);
  CHECK(back.taxonomy_name == "toy8");
  REQUIRE(back.entries.size() == 100);
  for (int i = 0; i < 100; ++i) {
    CHECK(back.entries[static_cast<std::size_t>(i)].scene_id == fmt::format("scene_{}", 99 - i));
    CHECK(fs::equivalent(back.entries[static_cast<std::size_t>(i)].path, m.entries[static_cast<std::size_t>(i)].path));
  }
}

TEST_CASE("manifest errors") {
  const auto dir = oracle::scratch_dir("io_manifest_err");
  write_text(dir / "a.xyzl", "");
  write_text(dir / "two.txt", "role=source taxonomy=toy8\nx\ta.xyzl\ny\ta.xyzl\n");
  CHECK(load_manifest(dir / "two.txt").entries.size() == 2);
  write_text(dir / "dup.txt", "role=source taxonomy=toy8\nx\ta.xyzl\nx\ta.xyzl\n");
  CHECK(code_of([&] { (void)load_manifest(dir / "dup.txt"); }) == ErrorCode::kDuplicateScene);
  write_text(dir / "miss.txt", "role=source taxonomy=toy8\nx\tnothere.xyzl\n");
  CHECK(code_of([&] { (void)load_manifest(dir / "miss.txt"); }) == ErrorCode::kMissingFile);
  write_text(dir / "hdr.txt", "role=sideways taxonomy=toy8\n");
  CHECK(code_of([&] { (void)load_manifest(dir / "hdr.txt"); }) == ErrorCode::kParseError);
  CHECK(code_of([&] { (void)load_manifest(dir / "none.txt"); }) == ErrorCode::kMissingFile);
}
