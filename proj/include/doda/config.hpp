#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "doda/pseudo.hpp"
#include "doda/segmenter.hpp"
#include "doda/tacm.hpp"
#include "doda/training.hpp"
#include "doda/vss.hpp"

namespace doda {

// Flat "section.key=value" lines; '#' starts a comment. Later keys overwrite earlier ones.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(std::string_view text);
ConfigMap load_config_file(const std::filesystem::path& path);

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path source_manifest;
  std::filesystem::path target_manifest;
  std::filesystem::path out_dir = "doda_out";
  int threads = 1;

  VssConfig vss;
  TacmConfig tacm;
  PseudoLabelConfig pseudo;
  int pseudo_rounds = 1;  // pseudo-label generation passes, each followed by self-training
  FeatureConfig features;
  TrainConfig pretrain;
  TrainConfig selftrain;

  // Checks sub-configs; paths are checked by the pipeline when it loads them.
  void validate() const;
};

// Unknown keys and malformed values raise kParseError naming the key. Relative
// paths are resolved against `base_dir`.
PipelineConfig pipeline_config_from_map(const ConfigMap& map, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
// Every key with its current value, sorted; parses back to an equal config.
std::string format_pipeline_config(const PipelineConfig& config);

}  // namespace doda
