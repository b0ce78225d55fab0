#include "doda/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <fmt/format.h>

namespace doda {

void validate_scores(const ScoreMatrix& scores, double tol) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const double v = scores(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, fmt::format("score ({}, {}) = {} outside [0, 1]", i, j, v));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("score row {} sums to {}", i, sum));
    }
  }
}

std::string_view to_string(PseudoLabelMode mode) {
  return mode == PseudoLabelMode::kGlobalThreshold ? "global_threshold" : "per_class_fraction";
}

PseudoLabelMode parse_pseudo_label_mode(std::string_view name) {
  if (name == "global_threshold") return PseudoLabelMode::kGlobalThreshold;
  if (name == "per_class_fraction") return PseudoLabelMode::kPerClassFraction;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown pseudo-label mode '{}'", name));
}

void PseudoLabelConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must lie in [0, 1]");
  }
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fraction must lie in (0, 1]");
  }
}

std::vector<Label> argmax_labels(const ScoreMatrix& scores) {
  std::vector<Label> out(static_cast<std::size_t>(scores.rows()), 0);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<Label>(best);
  }
  return out;
}

std::vector<double> per_class_thresholds(const ScoreMatrix& scores, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fraction must lie in (0, 1]");
  }
  const auto arg = argmax_labels(scores);
  std::vector<std::vector<double>> conf(static_cast<std::size_t>(scores.cols()));
  for (std::size_t i = 0; i < arg.size(); ++i) {
    conf[arg[i]].push_back(scores(static_cast<Eigen::Index>(i), arg[i]));
  }
  std::vector<double> thresholds(conf.size(), 1.0);
  for (std::size_t j = 0; j < conf.size(); ++j) {
    auto& c = conf[j];
    if (c.empty()) continue;
    std::sort(c.begin(), c.end(), std::greater<>());
    const double n = static_cast<double>(c.size());
    auto k = static_cast<std::size_t>(std::ceil(fraction * n - 1e-9));
    k = std::clamp<std::size_t>(k, 1, c.size());
    thresholds[j] = k == c.size() ? std::nextafter(c.back(), -std::numeric_limits<double>::infinity())
                                  : c[k];
  }
  return thresholds;
}

std::vector<Label> generate_pseudo_labels(const ScoreMatrix& scores, const PseudoLabelConfig& config,
                                          Label ignore) {
  config.validate();
  const auto arg = argmax_labels(scores);
  std::vector<double> per_class;
  if (config.mode == PseudoLabelMode::kPerClassFraction) {
    per_class = per_class_thresholds(scores, config.fraction);
  }
  std::vector<Label> out(arg.size(), ignore);
  for (std::size_t i = 0; i < arg.size(); ++i) {
    const double conf = scores(static_cast<Eigen::Index>(i), arg[i]);
    const double t = per_class.empty() ? config.threshold : per_class[arg[i]];
    if (conf > t) out[i] = arg[i];
  }
  return out;
}

std::vector<double> class_ratio(const std::vector<Label>& labels, const ClassTaxonomy& taxonomy) {
  std::vector<double> r(taxonomy.size(), 0.0);
  std::size_t total = 0;
  for (Label l : labels) {
    if (taxonomy.is_ignore(l)) continue;
    if (!taxonomy.is_valid_class(l)) {
      throw Error(ErrorCode::kUnknownLabel, fmt::format("label {} not in taxonomy '{}'", l, taxonomy.name()));
    }
    r[l] += 1.0;
    ++total;
  }
  if (total == 0) return r;
  for (double& v : r) v /= static_cast<double>(total);
  return r;
}

}  // namespace doda
