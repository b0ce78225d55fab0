#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "doda/core.hpp"

namespace doda {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 0) : n_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return n_; }
  // Points with ground truth g predicted as p.
  std::uint64_t at(std::size_t g, std::size_t p) const { return counts_[g * n_ + p]; }
  void add(std::size_t g, std::size_t p, std::uint64_t count = 1) { counts_[g * n_ + p] += count; }
  std::uint64_t total() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix& other) const = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

// Adds every point whose ground truth is not `ignore`. Predictions outside the
// class range (including ignore) raise kUnknownLabel.
void accumulate_confusion(ConfusionMatrix& matrix, const std::vector<Label>& predictions,
                          const std::vector<Label>& ground_truth, Label ignore = kIgnoreLabel);

struct IouReport {
  std::vector<std::optional<double>> per_class;  // nullopt when TP + FP + FN = 0
  double miou = 0.0;
};

IouReport compute_iou(const ConfusionMatrix& matrix);

// "class,iou" rows (empty IoU for undefined classes) and a final "mIoU" row.
std::string format_iou_csv(const IouReport& report, const ClassTaxonomy& taxonomy);

}  // namespace doda
