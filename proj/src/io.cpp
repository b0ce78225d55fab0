#include "doda/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace doda {

std::string_view to_string(FileFormat format) {
  switch (format) {
    case FileFormat::kPlyAscii: return "ply_ascii";
    case FileFormat::kPlyBinaryLe: return "ply_binary_le";
    case FileFormat::kXyzlText: return "xyzl_text";
  }
  return "unknown";
}

FileFormat parse_file_format(std::string_view tag) {
  if (tag == "ply_ascii") return FileFormat::kPlyAscii;
  if (tag == "ply_binary_le") return FileFormat::kPlyBinaryLe;
  if (tag == "xyzl_text") return FileFormat::kXyzlText;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown file format '{}'", tag));
}

FileFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ply") return FileFormat::kPlyBinaryLe;
  if (ext == ".xyzl" || ext == ".txt") return FileFormat::kXyzlText;
  throw Error(ErrorCode::kInvalidArgument, "cannot infer point format from " + path.string());
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIoError, "read failure on " + path.string());
  return data;
}

template <typename T>
T load_le(const char* bytes) {
  T value;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(&value, bytes, sizeof(T));
  } else {
    char tmp[sizeof(T)];
    std::reverse_copy(bytes, bytes + sizeof(T), tmp);
    std::memcpy(&value, tmp, sizeof(T));
  }
  return value;
}

template <typename T>
void store_le(std::string& out, T value) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &value, sizeof(T));
  if constexpr (std::endian::native != std::endian::little) std::reverse(tmp, tmp + sizeof(T));
  out.append(tmp, sizeof(T));
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::string_view where,
                             const std::string& what) {
  throw Error(ErrorCode::kParseError, fmt::format("{} ({}): {}", path.string(), where, what));
}

Label check_label(long long raw, const TaxonomyPtr& taxonomy, const std::filesystem::path& path,
                  std::string_view where) {
  const Label ignore = taxonomy ? taxonomy->ignore_index() : kIgnoreLabel;
  if (raw == static_cast<long long>(ignore) || raw == static_cast<long long>(kIgnoreLabel)) {
    return ignore;
  }
  const bool in_range = taxonomy ? (raw >= 0 && raw < static_cast<long long>(taxonomy->size()))
                                 : (raw >= 0 && raw < kIgnoreLabel);
  if (!in_range) {
    throw Error(ErrorCode::kUnknownLabel,
                fmt::format("{} ({}): label {} out of range", path.string(), where, raw));
  }
  return static_cast<Label>(raw);
}

// ---- PLY ----

enum class ScalarType { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

std::optional<ScalarType> scalar_type(std::string_view name) {
  if (name == "char" || name == "int8") return ScalarType::kI8;
  if (name == "uchar" || name == "uint8") return ScalarType::kU8;
  if (name == "short" || name == "int16") return ScalarType::kI16;
  if (name == "ushort" || name == "uint16") return ScalarType::kU16;
  if (name == "int" || name == "int32") return ScalarType::kI32;
  if (name == "uint" || name == "uint32") return ScalarType::kU32;
  if (name == "float" || name == "float32") return ScalarType::kF32;
  if (name == "double" || name == "float64") return ScalarType::kF64;
  return std::nullopt;
}

std::size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::kI8:
    case ScalarType::kU8: return 1;
    case ScalarType::kI16:
    case ScalarType::kU16: return 2;
    case ScalarType::kI32:
    case ScalarType::kU32:
    case ScalarType::kF32: return 4;
    case ScalarType::kF64: return 8;
  }
  return 0;
}

bool is_integral(ScalarType t) { return t != ScalarType::kF32 && t != ScalarType::kF64; }

double decode_scalar(ScalarType t, const char* p) {
  switch (t) {
    case ScalarType::kI8: return static_cast<double>(static_cast<std::int8_t>(*p));
    case ScalarType::kU8: return static_cast<double>(static_cast<std::uint8_t>(*p));
    case ScalarType::kI16: return load_le<std::int16_t>(p);
    case ScalarType::kU16: return load_le<std::uint16_t>(p);
    case ScalarType::kI32: return load_le<std::int32_t>(p);
    case ScalarType::kU32: return load_le<std::uint32_t>(p);
    case ScalarType::kF32: return static_cast<double>(load_le<float>(p));
    case ScalarType::kF64: return load_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  ScalarType type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;

  std::size_t stride() const {
    std::size_t s = 0;
    for (const auto& p : properties) s += scalar_size(p.type);
    return s;
  }
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
  std::size_t body_offset = 0;  // byte offset of the first body byte
  std::size_t body_line = 0;    // 1-based line number of the first body line
};

PlyHeader parse_ply_header(const std::string& data, const std::filesystem::path& path,
                           FileFormat expected) {
  PlyHeader header;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_format = false;
  while (true) {
    if (pos >= data.size()) parse_fail(path, fmt::format("line {}", line_no + 1), "missing end_header");
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) eol = data.size();
    std::string_view line(data.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    const std::string where = fmt::format("line {}", line_no);
    pos = eol + 1;
    const auto tokens = split_ws(line);
    if (line_no == 1) {
      if (tokens.size() != 1 || tokens[0] != "ply") parse_fail(path, where, "missing 'ply' magic");
      continue;
    }
    if (tokens.empty() || tokens[0] == "comment" || tokens[0] == "obj_info") continue;
    if (tokens[0] == "end_header") break;
    if (tokens[0] == "format") {
      if (tokens.size() != 3) parse_fail(path, where, "malformed format line");
      if (tokens[1] == "ascii") {
        header.binary = false;
      } else if (tokens[1] == "binary_little_endian") {
        header.binary = true;
      } else {
        parse_fail(path, where, fmt::format("unsupported PLY encoding '{}'", tokens[1]));
      }
      saw_format = true;
    } else if (tokens[0] == "element") {
      std::size_t count = 0;
      if (tokens.size() != 3 || !parse_number(tokens[2], count)) {
        parse_fail(path, where, "malformed element line");
      }
      header.elements.push_back({std::string(tokens[1]), count, {}});
    } else if (tokens[0] == "property") {
      if (header.elements.empty()) parse_fail(path, where, "property before element");
      if (tokens.size() >= 2 && tokens[1] == "list") {
        parse_fail(path, where, "list properties are not supported");
      }
      if (tokens.size() != 3) parse_fail(path, where, "malformed property line");
      const auto type = scalar_type(tokens[1]);
      if (!type) parse_fail(path, where, fmt::format("unknown property type '{}'", tokens[1]));
      header.elements.back().properties.push_back({std::string(tokens[2]), *type});
    } else {
      parse_fail(path, where, fmt::format("unexpected header keyword '{}'", tokens[0]));
    }
  }
  if (!saw_format) parse_fail(path, "header", "missing format line");
  const bool want_binary = expected == FileFormat::kPlyBinaryLe;
  if (header.binary != want_binary) {
    parse_fail(path, "header",
               fmt::format("file encoding does not match requested format {}", to_string(expected)));
  }
  header.body_offset = std::min(pos, data.size());
  header.body_line = line_no + 1;
  return header;
}

LabeledPointCloud read_ply(const std::string& data, const std::filesystem::path& path,
                           FileFormat format, TaxonomyPtr taxonomy) {
  const PlyHeader header = parse_ply_header(data, path, format);
  const Label ignore = taxonomy ? taxonomy->ignore_index() : kIgnoreLabel;
  LabeledPointCloud cloud(taxonomy);

  std::size_t offset = header.body_offset;
  std::size_t line_no = header.body_line;
  for (const PlyElement& element : header.elements) {
    const bool is_vertex = element.name == "vertex";
    int ix = -1, iy = -1, iz = -1, il = -1;
    for (std::size_t k = 0; k < element.properties.size(); ++k) {
      const auto& name = element.properties[k].name;
      if (name == "x") ix = static_cast<int>(k);
      if (name == "y") iy = static_cast<int>(k);
      if (name == "z") iz = static_cast<int>(k);
      if (name == "label") il = static_cast<int>(k);
    }
    if (is_vertex) {
      if (ix < 0 || iy < 0 || iz < 0) parse_fail(path, "header", "vertex element lacks x/y/z");
      if (il >= 0 && !is_integral(element.properties[static_cast<std::size_t>(il)].type)) {
        parse_fail(path, "header", "label property must be an integer type");
      }
      cloud.reserve(element.count);
    }
    std::vector<double> values(element.properties.size());
    for (std::size_t n = 0; n < element.count; ++n) {
      if (header.binary) {
        const std::size_t stride = element.stride();
        if (offset + stride > data.size()) {
          parse_fail(path, fmt::format("byte {}", offset),
                     fmt::format("truncated body: element '{}' declares {} rows, found {}",
                                 element.name, element.count, n));
        }
        std::size_t at = offset;
        for (std::size_t k = 0; k < element.properties.size(); ++k) {
          values[k] = decode_scalar(element.properties[k].type, data.data() + at);
          at += scalar_size(element.properties[k].type);
        }
        offset += stride;
      } else {
        if (offset >= data.size()) {
          parse_fail(path, fmt::format("line {}", line_no),
                     fmt::format("truncated body: element '{}' declares {} rows, found {}",
                                 element.name, element.count, n));
        }
        std::size_t eol = data.find('\n', offset);
        if (eol == std::string::npos) eol = data.size();
        const auto tokens = split_ws(std::string_view(data.data() + offset, eol - offset));
        const std::string where = fmt::format("line {}", line_no);
        if (tokens.size() != element.properties.size()) {
          parse_fail(path, where,
                     fmt::format("expected {} values, got {}", element.properties.size(),
                                 tokens.size()));
        }
        for (std::size_t k = 0; k < tokens.size(); ++k) {
          if (!parse_number(tokens[k], values[k])) {
            parse_fail(path, where, fmt::format("bad number '{}'", tokens[k]));
          }
        }
        offset = eol + 1;
        ++line_no;
      }
      if (!is_vertex) continue;
      const Vec3 p(values[static_cast<std::size_t>(ix)], values[static_cast<std::size_t>(iy)],
                   values[static_cast<std::size_t>(iz)]);
      if (!p.allFinite()) parse_fail(path, fmt::format("vertex {}", n), "non-finite coordinate");
      Label label = ignore;
      if (il >= 0) {
        label = check_label(static_cast<long long>(values[static_cast<std::size_t>(il)]), taxonomy,
                            path, fmt::format("vertex {}", n));
      }
      cloud.push_back(p, label);
    }
  }
  return cloud;
}

std::string format_ply(const LabeledPointCloud& cloud, bool binary) {
  std::string out = fmt::format(
      "ply\nformat {} 1.0\nelement vertex {}\nproperty float x\nproperty float y\n"
      "property float z\nproperty ushort label\nend_header\n",
      binary ? "binary_little_endian" : "ascii", cloud.size());
  const Label ignore = cloud.taxonomy ? cloud.taxonomy->ignore_index() : kIgnoreLabel;
  if (binary) out.reserve(out.size() + cloud.size() * 14);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const Label label = cloud.labels[i] == ignore ? kIgnoreLabel : cloud.labels[i];
    const float x = static_cast<float>(p.x());
    const float y = static_cast<float>(p.y());
    const float z = static_cast<float>(p.z());
    if (binary) {
      store_le(out, x);
      store_le(out, y);
      store_le(out, z);
      store_le(out, static_cast<std::uint16_t>(label));
    } else {
      fmt::format_to(std::back_inserter(out), "{} {} {} {}\n", x, y, z, label);
    }
  }
  return out;
}

// ---- xyzl text ----

LabeledPointCloud read_xyzl(const std::string& data, const std::filesystem::path& path,
                            TaxonomyPtr taxonomy) {
  LabeledPointCloud cloud(taxonomy);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) eol = data.size();
    const std::string_view line(data.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    const std::string where = fmt::format("line {}", line_no);
    if (tokens.size() != 4) {
      parse_fail(path, where, fmt::format("expected 'x y z label', got {} fields", tokens.size()));
    }
    Vec3 p;
    for (int a = 0; a < 3; ++a) {
      if (!parse_number(tokens[static_cast<std::size_t>(a)], p[a]) || !std::isfinite(p[a])) {
        parse_fail(path, where, fmt::format("bad coordinate '{}'", tokens[static_cast<std::size_t>(a)]));
      }
    }
    long long raw = 0;
    if (!parse_number(tokens[3], raw)) {
      parse_fail(path, where, fmt::format("bad label '{}'", tokens[3]));
    }
    cloud.push_back(p, check_label(raw, taxonomy, path, where));
  }
  return cloud;
}

std::string format_xyzl(const LabeledPointCloud& cloud) {
  std::string out;
  const Label ignore = cloud.taxonomy ? cloud.taxonomy->ignore_index() : kIgnoreLabel;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const Label label = cloud.labels[i] == ignore ? kIgnoreLabel : cloud.labels[i];
    fmt::format_to(std::back_inserter(out), "{} {} {} {}\n", p.x(), p.y(), p.z(), label);
  }
  return out;
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw Error(ErrorCode::kIoError, "write failure on " + path.string());
}

}  // namespace

LabeledPointCloud read_point_file(const std::filesystem::path& path, FileFormat format,
                                  TaxonomyPtr taxonomy) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingFile, path.string());
  const std::string data = slurp(path);
  if (format == FileFormat::kXyzlText) return read_xyzl(data, path, std::move(taxonomy));
  if (data.empty()) return LabeledPointCloud(std::move(taxonomy));
  return read_ply(data, path, format, std::move(taxonomy));
}

void write_point_file(const LabeledPointCloud& cloud, const std::filesystem::path& path,
                      FileFormat format) {
  if (cloud.labels.size() != cloud.positions.size()) {
    throw Error(ErrorCode::kDimensionError, "labels and positions differ in length");
  }
  switch (format) {
    case FileFormat::kPlyAscii: write_all(path, format_ply(cloud, false)); break;
    case FileFormat::kPlyBinaryLe: write_all(path, format_ply(cloud, true)); break;
    case FileFormat::kXyzlText: write_all(path, format_xyzl(cloud)); break;
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingFile, path.string());
  const std::string data = slurp(path);
  const auto dir = path.parent_path();
  DatasetManifest manifest;
  std::set<std::string> seen;
  std::istringstream lines(data);
  std::string line;
  std::size_t line_no = 0;
  bool header_done = false;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = fmt::format("line {}", line_no);
    if (!header_done) {
      bool have_role = false;
      for (const auto token : split_ws(line)) {
        const auto eq = token.find('=');
        if (eq == std::string_view::npos) parse_fail(path, where, "header token without '='");
        const auto key = token.substr(0, eq);
        const auto value = token.substr(eq + 1);
        if (key == "role") {
          if (value == "source") {
            manifest.role = DomainRole::kSource;
          } else if (value == "target") {
            manifest.role = DomainRole::kTarget;
          } else {
            parse_fail(path, where, fmt::format("unknown role '{}'", value));
          }
          have_role = true;
        } else if (key == "taxonomy") {
          manifest.taxonomy_name = std::string(value);
        } else {
          parse_fail(path, where, fmt::format("unknown header key '{}'", key));
        }
      }
      if (!have_role) parse_fail(path, where, "header must declare role=");
      header_done = true;
      continue;
    }
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      parse_fail(path, where, "expected 'scene_id<TAB>relative_path'");
    }
    std::string id = line.substr(0, tab);
    const std::filesystem::path rel = line.substr(tab + 1);
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::kDuplicateScene, fmt::format("{} ({}): scene id '{}' repeated",
                                                          path.string(), where, id));
    }
    const auto resolved = rel.is_absolute() ? rel : dir / rel;
    if (!std::filesystem::exists(resolved)) {
      throw Error(ErrorCode::kMissingFile,
                  fmt::format("{} ({}): {}", path.string(), where, resolved.string()));
    }
    manifest.entries.push_back({std::move(id), resolved});
  }
  if (!header_done) parse_fail(path, "line 1", "missing manifest header");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const auto dir = path.parent_path();
  std::string out = fmt::format("role={} taxonomy={}\n",
                                manifest.role == DomainRole::kSource ? "source" : "target",
                                manifest.taxonomy_name);
  for (const auto& e : manifest.entries) {
    const auto rel =
        std::filesystem::absolute(e.path).lexically_relative(std::filesystem::absolute(dir));
    out += fmt::format("{}\t{}\n", e.scene_id, rel.empty() ? e.path.string() : rel.generic_string());
  }
  write_all(path, out);
}

}  // namespace doda
