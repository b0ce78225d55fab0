#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "doda/core.hpp"

namespace doda {

// Rows are points, columns are classes; rows hold softmax probabilities.
using ScoreMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Throws kInvalidArgument when an entry leaves [0, 1] or a row does not sum to 1 within tol.
void validate_scores(const ScoreMatrix& scores, double tol = 1e-6);

enum class PseudoLabelMode { kGlobalThreshold, kPerClassFraction };

std::string_view to_string(PseudoLabelMode mode);
PseudoLabelMode parse_pseudo_label_mode(std::string_view name);

struct PseudoLabelConfig {
  PseudoLabelMode mode = PseudoLabelMode::kGlobalThreshold;
  double threshold = 0.7;  // T
  double fraction = 0.3;

  void validate() const;
};

// Row argmax with ties resolved to the lower class index.
std::vector<Label> argmax_labels(const ScoreMatrix& scores);

// A point keeps its argmax label iff its max score strictly exceeds the threshold
// (global T, or the predicted class's threshold); otherwise it gets `ignore`.
std::vector<Label> generate_pseudo_labels(const ScoreMatrix& scores, const PseudoLabelConfig& config,
                                          Label ignore = kIgnoreLabel);

// Nearest-rank thresholds: with n points predicted as class j, the top
// k = ceil(fraction * n) confidences lie strictly above threshold j. Absent classes get 1.0.
std::vector<double> per_class_thresholds(const ScoreMatrix& scores, double fraction);

// r_j = count(label == j) / count(label != ignore); zeros when nothing is labeled.
std::vector<double> class_ratio(const std::vector<Label>& labels, const ClassTaxonomy& taxonomy);

}  // namespace doda
