#pragma once

#include <optional>
#include <vector>

#include "doda/core.hpp"
#include "doda/segmenter.hpp"
#include "doda/tacm.hpp"
#include "doda/vss.hpp"

namespace doda {

struct TrainConfig {
  double learning_rate = 0.1;
  int iterations = 100;
  int batch_size = 1;        // scenes per step
  double lambda = 0.5;       // weight of the source term in self-training
  double momentum = 0.0;
  // lr * (1 - it / iterations)^poly_power; 0 keeps the rate constant.
  double poly_power = 0.0;
  // Weight gradient multiplied by the inverse second-moment matrix of the step's features.
  bool precondition = true;
  // Random points per scene used for the loss; 0 keeps every point.
  std::size_t points_per_scene = 0;
  // Self-training only: features of mixed points are computed in their original
  // scene and carried through the mixing, instead of recomputed on the mixed cloud.
  bool scene_context_features = false;
  AugmentConfig augment;

  void validate() const;
};

struct TrainResult {
  SegmenterModel model;
  std::vector<double> loss;         // total objective per iteration
  std::vector<double> mixed_loss;   // self-training only: intermediate-scene term
  std::vector<double> source_loss;  // self-training only: source term (unweighted)
  std::vector<MixedScene> samples;  // first composed scenes, self-training only
};

// Plain (optionally momentum) gradient step, shared by both training stages.
class GradientStepper {
 public:
  explicit GradientStepper(const TrainConfig& config) : config_(config) {}
  void step(SegmenterModel& model, const ModelGradient& grad, const FeatureMatrix& features);
  double current_rate() const;

 private:
  TrainConfig config_;
  int steps_ = 0;
  Eigen::MatrixXd vel_w_;
  Eigen::VectorXd vel_b_;
};

struct Objective {
  double total = 0.0;
  double mixed_term = 0.0;
  double source_term = 0.0;
  ModelGradient grad;
};

// total = CE(mixed) + lambda * CE(source). An unsupervised mixed scene contributes 0.
Objective selftrain_objective(const SegmenterModel& model, const FeatureMatrix& mixed_features,
                              const std::vector<Label>& mixed_labels,
                              const FeatureMatrix& source_features,
                              const std::vector<Label>& source_labels, double lambda);

// Source-only training; `vss` enables virtual scans of each sampled scene.
TrainResult train_pretrain(SegmenterModel model, const std::vector<LabeledPointCloud>& sources,
                           const std::optional<VssConfig>& vss, const StructuralClasses& structural,
                           const FeatureConfig& features, const TrainConfig& config,
                           RandomStream& rng);

// Targets carry pseudo labels. The queue is updated in place.
TrainResult train_selftrain(SegmenterModel model, const std::vector<LabeledPointCloud>& sources,
                            const std::vector<LabeledPointCloud>& targets,
                            const std::vector<double>& ratios, const TacmConfig& tacm,
                            const std::optional<VssConfig>& vss, const StructuralClasses& structural,
                            const FeatureConfig& features, const TrainConfig& config,
                            TailCuboidQueue& queue, RandomStream& rng, std::size_t keep_samples = 3);

}  // namespace doda
