#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "doda/core.hpp"
#include "doda/pseudo.hpp"

namespace doda {

inline constexpr int kFeatureDim = 7;

// Feature order:
//   0 height above the cloud's z-minimum
//   1 height divided by the z-extent (0 for a flat cloud)
//   2 neighbor count within radius, the point included
//   3 z-extent of the neighborhood
//   4 x-y distance to the cloud's x-y bounding box boundary
//   5 fraction of neighbors within +-voxel of the point's z
//   6 constant 1
struct FeatureConfig {
  double voxel = 0.02;
  double radius = 0.15;

  void validate() const;
};

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

FeatureMatrix extract_features(const LabeledPointCloud& cloud, const FeatureConfig& config);
// Features of the points at `rows` only; neighborhoods still use the whole cloud.
FeatureMatrix extract_features(const LabeledPointCloud& cloud, const FeatureConfig& config,
                               const std::vector<std::size_t>& rows);

struct SegmenterModel {
  Eigen::MatrixXd weights;  // classes x features
  Eigen::VectorXd bias;     // classes
  TaxonomyPtr taxonomy;

  static SegmenterModel zeros(TaxonomyPtr taxonomy, int dim = kFeatureDim);
  int classes() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
  bool finite() const { return weights.allFinite() && bias.allFinite(); }
};

ScoreMatrix forward_logits(const SegmenterModel& model, const FeatureMatrix& features);
// Row-wise softmax of the logits, max-subtracted.
ScoreMatrix softmax_rows(const ScoreMatrix& logits);
ScoreMatrix forward_scores(const SegmenterModel& model, const FeatureMatrix& features);
std::vector<Label> predict(const SegmenterModel& model, const FeatureMatrix& features);

struct CrossEntropy {
  double loss = 0.0;
  ScoreMatrix grad;  // d loss / d logits; zero rows for ignored points
  std::size_t supervised = 0;
};

// Mean -log p over non-ignored rows (probabilities clamped at 1e-12).
CrossEntropy cross_entropy(const ScoreMatrix& scores, const std::vector<Label>& labels,
                           Label ignore = kIgnoreLabel);

struct ModelGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

// Chain rule through the linear layer: dW = G^T X, db = column sums of G.
ModelGradient backprop_linear(const ScoreMatrix& logit_grad, const FeatureMatrix& features);

// Text header ("doda-segmenter 1", dim, classes, taxonomy) then little-endian f64
// weights (row-major) and bias.
void save_checkpoint(const SegmenterModel& model, const std::filesystem::path& path);
SegmenterModel load_checkpoint(const std::filesystem::path& path, TaxonomyPtr taxonomy);

}  // namespace doda
