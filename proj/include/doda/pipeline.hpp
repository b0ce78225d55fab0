#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "doda/config.hpp"
#include "doda/io.hpp"
#include "doda/metrics.hpp"
#include "doda/scenegen.hpp"

namespace doda {

// Taxonomies known by name to manifests and checkpoints.
TaxonomyPtr taxonomy_by_name(const std::string& name);

struct NamedCloud {
  std::string id;
  LabeledPointCloud cloud;
};

std::vector<NamedCloud> load_scenes(const DatasetManifest& manifest);
std::vector<LabeledPointCloud> clouds_of(const std::vector<NamedCloud>& scenes);

// Runs fn(i) for i in [0, n) on up to `threads` workers; results must be written per index.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

std::vector<FeatureMatrix> extract_all_features(const std::vector<LabeledPointCloud>& scenes,
                                                const FeatureConfig& config, int threads);

ConfusionMatrix evaluate_model(const SegmenterModel& model, const std::vector<LabeledPointCloud>& scenes,
                               const std::vector<FeatureMatrix>& features);

// Each scene's labels replaced by pseudo labels from the model.
std::vector<LabeledPointCloud> pseudo_label_scenes(const SegmenterModel& model,
                                                   const std::vector<LabeledPointCloud>& scenes,
                                                   const std::vector<FeatureMatrix>& features,
                                                   const PseudoLabelConfig& config);

void write_loss_trace(const TrainResult& result, const std::filesystem::path& path);

struct RunReport {
  bool complete = false;
  std::string failed_stage;  // empty when complete
  std::string error;
  std::uint64_t seed = 0;
  std::size_t source_scenes = 0;
  std::size_t target_scenes = 0;
  std::optional<IouReport> source_only;
  std::optional<IouReport> vss_only;
  std::optional<IouReport> doda;
  std::size_t pseudo_retained = 0;
  std::size_t pseudo_total = 0;
  std::size_t pseudo_correct = 0;  // retained pseudo labels equal to the ground truth
  TaxonomyPtr taxonomy;

  std::string text() const;
};

// Source-only pretrain, VSS pretrain, pseudo labels, self-training with TACM,
// evaluation on the target ground truth. Writes outputs under config.out_dir,
// including report.txt. Stage failures are captured in the report, never thrown.
RunReport run_pipeline(const PipelineConfig& config);

struct ToyBenchmarkConfig {
  int sim_scenes = 20;
  int real_scenes = 20;
  double density = 150.0;
  VssConfig hidden;  // scan applied to the "real" scenes

  static ToyBenchmarkConfig defaults();
};

// Training settings used by the toy benchmark's generated pipeline.cfg.
PipelineConfig toy_pipeline_config();

// Writes sim/ and real/ scene files, source.manifest, target.manifest and a
// pipeline.cfg that points at them. Returns the config path.
std::filesystem::path make_toy_benchmark(const std::filesystem::path& out_dir, std::uint64_t seed,
                                         const ToyBenchmarkConfig& config);

}  // namespace doda
