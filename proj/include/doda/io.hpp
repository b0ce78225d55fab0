#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "doda/core.hpp"

namespace doda {

enum class FileFormat { kPlyAscii, kPlyBinaryLe, kXyzlText };

std::string_view to_string(FileFormat format);
// Accepts "ply_ascii", "ply_binary_le", "xyzl_text".
FileFormat parse_file_format(std::string_view tag);
// Format implied by a file extension: .ply -> binary PLY, .xyzl/.txt -> text.
FileFormat format_for_path(const std::filesystem::path& path);

// PLY: vertex element with float/double x, y, z and an optional "label"
// property (ushort on write; any integer type on read). Points without a label
// property read as ignore. xyzl_text: one "x y z label" line per point.
LabeledPointCloud read_point_file(const std::filesystem::path& path, FileFormat format,
                                  TaxonomyPtr taxonomy);
void write_point_file(const LabeledPointCloud& cloud, const std::filesystem::path& path,
                      FileFormat format);

enum class DomainRole { kSource, kTarget };

struct ManifestEntry {
  std::string scene_id;
  std::filesystem::path path;  // resolved against the manifest directory
};

struct DatasetManifest {
  DomainRole role = DomainRole::kSource;
  std::string taxonomy_name;
  std::vector<ManifestEntry> entries;
};

// Header line "role=<source|target> taxonomy=<name>", then "scene_id<TAB>relative_path" lines.
DatasetManifest load_manifest(const std::filesystem::path& path);
// Writes entries with paths relative to the manifest's directory.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace doda
