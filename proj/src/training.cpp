#include "doda/training.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <numeric>

#include <fmt/format.h>

namespace doda {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be > 0");
  if (iterations < 0) throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (!(lambda >= 0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  if (!(poly_power >= 0)) throw Error(ErrorCode::kInvalidArgument, "poly_power must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw Error(ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
}

double GradientStepper::current_rate() const {
  if (config_.poly_power <= 0 || config_.iterations <= 0) return config_.learning_rate;
  const double frac = std::max(0.0, 1.0 - static_cast<double>(steps_) / config_.iterations);
  return config_.learning_rate * std::pow(frac, config_.poly_power);
}

void GradientStepper::step(SegmenterModel& model, const ModelGradient& grad,
                           const FeatureMatrix& features) {
  Eigen::MatrixXd gw = grad.weights;
  if (config_.precondition && features.rows() > 0) {
    // Right-multiply by the inverse feature second-moment matrix (ridge-regularized).
    Eigen::MatrixXd m = features.transpose() * features / static_cast<double>(features.rows());
    m.diagonal().array() += 1e-6 * std::max(1.0, m.diagonal().maxCoeff());
    gw = m.ldlt().solve(gw.transpose()).transpose();
  }
  const double lr = current_rate();
  ++steps_;
  if (config_.momentum > 0) {
    if (vel_w_.size() == 0) {
      vel_w_ = Eigen::MatrixXd::Zero(gw.rows(), gw.cols());
      vel_b_ = Eigen::VectorXd::Zero(grad.bias.size());
    }
    vel_w_ = config_.momentum * vel_w_ + gw;
    vel_b_ = config_.momentum * vel_b_ + grad.bias;
    model.weights -= lr * vel_w_;
    model.bias -= lr * vel_b_;
  } else {
    model.weights -= lr * gw;
    model.bias -= lr * grad.bias;
  }
  if (!model.finite()) throw Error(ErrorCode::kDivergenceError, "model parameters became non-finite");
}

namespace {

void check_finite(double loss, int iteration) {
  if (!std::isfinite(loss)) {
    throw Error(ErrorCode::kDivergenceError, fmt::format("non-finite loss at iteration {}", iteration));
  }
}

struct Batch {
  FeatureMatrix features;
  std::vector<Label> labels;
};

std::vector<std::size_t> pick_rows(std::size_t n, std::size_t keep, RandomStream& rng) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (keep > 0 && keep < n) {
    for (std::size_t i = 0; i < keep; ++i) std::swap(rows[i], rows[i + rng.index(n - i)]);
    rows.resize(keep);
    std::sort(rows.begin(), rows.end());
  }
  return rows;
}

void append_rows(Batch& batch, const FeatureMatrix& f, const std::vector<Label>& labels,
                 const std::vector<std::size_t>& rows) {
  const Eigen::Index old = batch.features.rows();
  batch.features.conservativeResize(old + static_cast<Eigen::Index>(rows.size()), f.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    batch.features.row(old + static_cast<Eigen::Index>(k)) = f.row(static_cast<Eigen::Index>(rows[k]));
    batch.labels.push_back(labels[rows[k]]);
  }
}

// Features and labels of a random subset (or all) of the scene's points.
void append(Batch& batch, const LabeledPointCloud& scene, const FeatureConfig& features,
            std::size_t keep, RandomStream& rng) {
  const auto rows = pick_rows(scene.size(), keep, rng);
  const FeatureMatrix f = extract_features(scene, features, rows);
  std::vector<std::size_t> identity(rows.size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  std::vector<Label> labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) labels.push_back(scene.labels[r]);
  append_rows(batch, f, labels, identity);
}

LabeledPointCloud prepare_source(const LabeledPointCloud& scene, const std::optional<VssConfig>& vss,
                                 const StructuralClasses& structural, RandomStream& rng) {
  return vss ? virtual_scan(scene, *vss, structural, rng) : scene;
}

}  // namespace

Objective selftrain_objective(const SegmenterModel& model, const FeatureMatrix& mixed_features,
                              const std::vector<Label>& mixed_labels,
                              const FeatureMatrix& source_features,
                              const std::vector<Label>& source_labels, double lambda) {
  const Label ignore = model.taxonomy ? model.taxonomy->ignore_index() : kIgnoreLabel;
  Objective obj;
  const CrossEntropy src = cross_entropy(forward_scores(model, source_features), source_labels, ignore);
  obj.source_term = src.loss;
  obj.grad = backprop_linear(src.grad, source_features);
  obj.grad.weights *= lambda;
  obj.grad.bias *= lambda;

  bool supervised = false;
  for (Label l : mixed_labels) supervised = supervised || l != ignore;
  if (supervised) {
    const CrossEntropy mix = cross_entropy(forward_scores(model, mixed_features), mixed_labels, ignore);
    obj.mixed_term = mix.loss;
    const ModelGradient g = backprop_linear(mix.grad, mixed_features);
    obj.grad.weights += g.weights;
    obj.grad.bias += g.bias;
  }
  obj.total = obj.mixed_term + lambda * obj.source_term;
  return obj;
}

TrainResult train_pretrain(SegmenterModel model, const std::vector<LabeledPointCloud>& sources,
                           const std::optional<VssConfig>& vss, const StructuralClasses& structural,
                           const FeatureConfig& features, const TrainConfig& config,
                           RandomStream& rng) {
  config.validate();
  if (config.iterations > 0 && sources.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no source scenes to train on");
  }
  const Label ignore = model.taxonomy ? model.taxonomy->ignore_index() : kIgnoreLabel;
  GradientStepper stepper(config);
  TrainResult result;
  for (int it = 0; it < config.iterations; ++it) {
    Batch batch;
    batch.features.resize(0, model.dim());
    for (int b = 0; b < config.batch_size; ++b) {
      const LabeledPointCloud& scene = sources[rng.index(sources.size())];
      const LabeledPointCloud aug =
          standard_augment(prepare_source(scene, vss, structural, rng), config.augment, rng);
      append(batch, aug, features, config.points_per_scene, rng);
    }
    const CrossEntropy ce = cross_entropy(forward_scores(model, batch.features), batch.labels, ignore);
    check_finite(ce.loss, it);
    result.loss.push_back(ce.loss);
    stepper.step(model, backprop_linear(ce.grad, batch.features), batch.features);
  }
  result.model = std::move(model);
  return result;
}

TrainResult train_selftrain(SegmenterModel model, const std::vector<LabeledPointCloud>& sources,
                            const std::vector<LabeledPointCloud>& targets,
                            const std::vector<double>& ratios, const TacmConfig& tacm,
                            const std::optional<VssConfig>& vss, const StructuralClasses& structural,
                            const FeatureConfig& features, const TrainConfig& config,
                            TailCuboidQueue& queue, RandomStream& rng, std::size_t keep_samples) {
  config.validate();
  tacm.validate();
  if (config.iterations > 0 && (sources.empty() || targets.empty())) {
    throw Error(ErrorCode::kEmptyInput, "self-training needs source and target scenes");
  }
  GradientStepper stepper(config);
  TrainResult result;
  std::vector<std::optional<FeatureMatrix>> target_features(targets.size());
  for (int it = 0; it < config.iterations; ++it) {
    Batch mixed;
    Batch source;
    mixed.features.resize(0, model.dim());
    source.features.resize(0, model.dim());
    for (int b = 0; b < config.batch_size; ++b) {
      const LabeledPointCloud& target = targets[rng.index(targets.size())];
      const LabeledPointCloud& src_scene = sources[rng.index(sources.size())];
      const LabeledPointCloud scanned = prepare_source(src_scene, vss, structural, rng);
      ComposeResult composed;
      if (config.scene_context_features) {
        const std::size_t t = static_cast<std::size_t>(&target - targets.data());
        if (!target_features[t]) target_features[t] = extract_features(target, features);
        const LabeledPointCloud src_aug = standard_augment(scanned, config.augment, rng);
        const FeatureMatrix src_f = extract_features(src_aug, features);
        composed = tacm_compose(src_aug, target, ratios, tacm, queue, rng, &src_f, &*target_features[t]);
        const MixedScene& m = composed.scene;
        append_rows(mixed, m.attributes, m.cloud.labels, pick_rows(m.cloud.size(), config.points_per_scene, rng));
        append_rows(source, src_f, src_aug.labels, pick_rows(src_aug.size(), config.points_per_scene, rng));
      } else {
        composed = tacm_compose(scanned, target, ratios, tacm, queue, rng);
        const LabeledPointCloud mix_aug = standard_augment(composed.scene.cloud, config.augment, rng);
        const LabeledPointCloud src_aug = standard_augment(scanned, config.augment, rng);
        append(mixed, mix_aug, features, config.points_per_scene, rng);
        append(source, src_aug, features, config.points_per_scene, rng);
      }
      if (result.samples.size() < keep_samples) result.samples.push_back(std::move(composed.scene));
    }
    const Objective obj = selftrain_objective(model, mixed.features, mixed.labels, source.features,
                                              source.labels, config.lambda);
    check_finite(obj.total, it);
    result.loss.push_back(obj.total);
    result.mixed_loss.push_back(obj.mixed_term);
    result.source_loss.push_back(obj.source_term);
    FeatureMatrix all(mixed.features.rows() + source.features.rows(), model.dim());
    all << mixed.features, source.features;
    stepper.step(model, obj.grad, all);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace doda
