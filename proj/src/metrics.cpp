#include "doda/metrics.hpp"

#include <numeric>

#include <fmt/format.h>

namespace doda {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw Error(ErrorCode::kDimensionError, "confusion matrices differ in size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

void accumulate_confusion(ConfusionMatrix& matrix, const std::vector<Label>& predictions,
                          const std::vector<Label>& ground_truth, Label ignore) {
  if (predictions.size() != ground_truth.size()) {
    throw Error(ErrorCode::kDimensionError,
                fmt::format("{} predictions for {} ground-truth labels", predictions.size(),
                            ground_truth.size()));
  }
  const std::size_t n = matrix.classes();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Label g = ground_truth[i];
    if (g == ignore) continue;
    const Label p = predictions[i];
    if (g >= n || p >= n) {
      throw Error(ErrorCode::kUnknownLabel, fmt::format("label pair ({}, {}) outside {} classes", g, p, n));
    }
    matrix.add(g, p);
  }
}

IouReport compute_iou(const ConfusionMatrix& matrix) {
  const std::size_t n = matrix.classes();
  IouReport report;
  report.per_class.resize(n);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t j = 0; j < n; ++j) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += matrix.at(j, k);
      col += matrix.at(k, j);
    }
    const std::uint64_t tp = matrix.at(j, j);
    const std::uint64_t denom = row + col - tp;
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    report.per_class[j] = iou;
    sum += iou;
    ++defined;
  }
  if (defined == 0) throw Error(ErrorCode::kNoEvaluatedClasses, "no class has a nonzero IoU denominator");
  report.miou = sum / static_cast<double>(defined);
  return report;
}

std::string format_iou_csv(const IouReport& report, const ClassTaxonomy& taxonomy) {
  std::string out = "class,iou\n";
  for (std::size_t j = 0; j < report.per_class.size(); ++j) {
    const std::string name = j < taxonomy.size() ? taxonomy.class_names()[j] : fmt::format("class{}", j);
    if (report.per_class[j]) out += fmt::format("{},{:.6f}\n", name, *report.per_class[j]);
    else out += fmt::format("{},\n", name);
  }
  out += fmt::format("mIoU,{:.6f}\n", report.miou);
  return out;
}

}  // namespace doda
