#include "doda/segmenter.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

namespace doda {

void FeatureConfig::validate() const {
  if (!(voxel > 0) || !(radius > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "feature voxel and radius must be > 0");
  }
}

namespace {

// Points bucketed into a dense grid of cubic cells (side >= radius), CSR layout.
class GridIndex {
 public:
  GridIndex(const std::vector<Vec3>& pts, double radius) {
    const Aabb box = aabb_of(pts);
    origin_ = box.min;
    const Vec3 ext = box.extent();
    // Cap the cell count so sparse, huge clouds stay cheap.
    cell_ = std::max(radius, ext.maxCoeff() / 1024.0);
    for (int a = 0; a < 3; ++a) dims_[a] = static_cast<int>(std::floor(ext[a] / cell_)) + 1;
    const std::size_t n_cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    if (n_cells > (std::size_t{1} << 24)) {
      cell_ *= std::cbrt(static_cast<double>(n_cells) / static_cast<double>(std::size_t{1} << 24)) * 1.01;
      for (int a = 0; a < 3; ++a) dims_[a] = static_cast<int>(std::floor(ext[a] / cell_)) + 1;
    }
    start_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] + 1, 0);
    std::vector<std::size_t> cell_of(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cell_of[i] = flat(coord(pts[i]));
      ++start_[cell_of[i] + 1];
    }
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    items_.resize(pts.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < pts.size(); ++i) items_[fill[cell_of[i]]++] = i;
  }

  template <typename Fn>
  void for_each_candidate(const Vec3& p, Fn&& fn) const {
    const Eigen::Vector3i c = coord(p);
    const int x0 = std::max(c.x() - 1, 0), x1 = std::min(c.x() + 1, dims_[0] - 1);
    const int y0 = std::max(c.y() - 1, 0), y1 = std::min(c.y() + 1, dims_[1] - 1);
    const int z0 = std::max(c.z() - 1, 0), z1 = std::min(c.z() + 1, dims_[2] - 1);
    for (int x = x0; x <= x1; ++x) {
      for (int y = y0; y <= y1; ++y) {
        for (int z = z0; z <= z1; ++z) {
          const std::size_t cell = flat(Eigen::Vector3i(x, y, z));
          for (std::size_t k = start_[cell]; k < start_[cell + 1]; ++k) fn(items_[k]);
        }
      }
    }
  }

 private:
  Eigen::Vector3i coord(const Vec3& p) const {
    Eigen::Vector3i c;
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp(static_cast<int>(std::floor((p[a] - origin_[a]) / cell_)), 0, dims_[a] - 1);
    }
    return c;
  }
  std::size_t flat(const Eigen::Vector3i& c) const {
    return (static_cast<std::size_t>(c.x()) * dims_[1] + c.y()) * dims_[2] + c.z();
  }

  Vec3 origin_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> items_;
};

}  // namespace

FeatureMatrix extract_features(const LabeledPointCloud& cloud, const FeatureConfig& config) {
  std::vector<std::size_t> all(cloud.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return extract_features(cloud, config, all);
}

FeatureMatrix extract_features(const LabeledPointCloud& cloud, const FeatureConfig& config,
                               const std::vector<std::size_t>& rows) {
  config.validate();
  if (cloud.empty()) throw Error(ErrorCode::kEmptyInput, "cannot extract features of an empty cloud");
  const Aabb box = aabb_of(cloud);
  const double z_extent = box.max.z() - box.min.z();
  const double r2 = config.radius * config.radius;
  const auto& pts = cloud.positions;
  const GridIndex grid(pts, config.radius);

  FeatureMatrix f(static_cast<Eigen::Index>(rows.size()), kFeatureDim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= pts.size()) throw Error(ErrorCode::kDimensionError, "feature row index out of range");
    const Vec3& p = pts[rows[i]];
    std::size_t count = 0;
    std::size_t planar = 0;
    double z_lo = p.z();
    double z_hi = p.z();
    grid.for_each_candidate(p, [&](std::size_t j) {
      if ((pts[j] - p).squaredNorm() > r2) return;
      ++count;
      z_lo = std::min(z_lo, pts[j].z());
      z_hi = std::max(z_hi, pts[j].z());
      if (std::abs(pts[j].z() - p.z()) <= config.voxel) ++planar;
    });
    const double height = p.z() - box.min.z();
    const double edge = std::min({p.x() - box.min.x(), box.max.x() - p.x(), p.y() - box.min.y(),
                                  box.max.y() - p.y()});
    const auto row = static_cast<Eigen::Index>(i);
    f(row, 0) = height;
    f(row, 1) = z_extent > 0 ? height / z_extent : 0.0;
    f(row, 2) = static_cast<double>(count);
    f(row, 3) = z_hi - z_lo;
    f(row, 4) = edge;
    f(row, 5) = static_cast<double>(planar) / static_cast<double>(count);
    f(row, 6) = 1.0;
  }
  return f;
}

SegmenterModel SegmenterModel::zeros(TaxonomyPtr taxonomy, int dim) {
  if (!taxonomy) throw Error(ErrorCode::kInvalidArgument, "model needs a taxonomy");
  SegmenterModel m;
  const auto c = static_cast<Eigen::Index>(taxonomy->size());
  m.weights = Eigen::MatrixXd::Zero(c, dim);
  m.bias = Eigen::VectorXd::Zero(c);
  m.taxonomy = std::move(taxonomy);
  return m;
}

ScoreMatrix forward_logits(const SegmenterModel& model, const FeatureMatrix& features) {
  if (features.cols() != model.weights.cols()) {
    throw Error(ErrorCode::kDimensionError,
                fmt::format("features have {} columns, model expects {}", features.cols(),
                            model.weights.cols()));
  }
  if (model.bias.size() != model.weights.rows()) {
    throw Error(ErrorCode::kDimensionError, "bias length differs from the class count");
  }
  ScoreMatrix logits = features * model.weights.transpose();
  logits.rowwise() += model.bias.transpose();
  return logits;
}

ScoreMatrix softmax_rows(const ScoreMatrix& logits) {
  ScoreMatrix s(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      s(i, j) = std::exp(logits(i, j) - m);
      sum += s(i, j);
    }
    s.row(i) /= sum;
  }
  return s;
}

ScoreMatrix forward_scores(const SegmenterModel& model, const FeatureMatrix& features) {
  return softmax_rows(forward_logits(model, features));
}

std::vector<Label> predict(const SegmenterModel& model, const FeatureMatrix& features) {
  return argmax_labels(forward_logits(model, features));
}

CrossEntropy cross_entropy(const ScoreMatrix& scores, const std::vector<Label>& labels, Label ignore) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw Error(ErrorCode::kDimensionError,
                fmt::format("{} score rows for {} labels", scores.rows(), labels.size()));
  }
  CrossEntropy ce;
  ce.grad = ScoreMatrix::Zero(scores.rows(), scores.cols());
  for (Label l : labels) {
    if (l == ignore) continue;
    if (l >= scores.cols()) {
      throw Error(ErrorCode::kUnknownLabel, fmt::format("label {} outside {} classes", l, scores.cols()));
    }
    ++ce.supervised;
  }
  if (ce.supervised == 0) throw Error(ErrorCode::kNoSupervision, "every point is ignored");
  const double inv_n = 1.0 / static_cast<double>(ce.supervised);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == ignore) continue;
    const auto row = static_cast<Eigen::Index>(i);
    ce.loss -= std::log(std::max(scores(row, labels[i]), 1e-12));
    ce.grad.row(row) = scores.row(row) * inv_n;
    ce.grad(row, labels[i]) -= inv_n;
  }
  ce.loss *= inv_n;
  return ce;
}

ModelGradient backprop_linear(const ScoreMatrix& logit_grad, const FeatureMatrix& features) {
  if (logit_grad.rows() != features.rows()) {
    throw Error(ErrorCode::kDimensionError, "gradient rows differ from feature rows");
  }
  ModelGradient g;
  g.weights = logit_grad.transpose() * features;
  g.bias = logit_grad.colwise().sum().transpose();
  return g;
}

namespace {

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  out.write(buf, 8);
}

double get_f64(std::istream& in, const std::filesystem::path& path) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw Error(ErrorCode::kParseError, fmt::format("{}: truncated checkpoint", path.string()));
  }
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const SegmenterModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
  const std::string tax = model.taxonomy ? model.taxonomy->name() : std::string("none");
  out << "doda-segmenter 1\n" << "dim " << model.dim() << "\n" << "classes " << model.classes()
      << "\n" << "taxonomy " << tax << "\n" << "end_header\n";
  for (Eigen::Index r = 0; r < model.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.weights.cols(); ++c) put_f64(out, model.weights(r, c));
  }
  for (Eigen::Index r = 0; r < model.bias.size(); ++r) put_f64(out, model.bias(r));
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("failed writing {}", path.string()));
}

SegmenterModel load_checkpoint(const std::filesystem::path& path, TaxonomyPtr taxonomy) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingFile, fmt::format("{} does not exist", path.string()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot read {}", path.string()));
  auto fail = [&](const std::string& what) {
    return Error(ErrorCode::kParseError, fmt::format("{}: {}", path.string(), what));
  };
  std::string line;
  if (!std::getline(in, line) || line != "doda-segmenter 1") throw fail("bad magic line");
  int dim = -1;
  int classes = -1;
  std::string tax_name;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dim") ls >> dim;
    else if (key == "classes") ls >> classes;
    else if (key == "taxonomy") ls >> tax_name;
    else throw fail("unknown header key '" + key + "'");
    if (ls.fail()) throw fail("malformed header line '" + line + "'");
  }
  if (line != "end_header") throw fail("missing end_header");
  if (dim <= 0 || classes <= 0) throw fail("missing dim or classes");
  if (taxonomy && (taxonomy->name() != tax_name || static_cast<int>(taxonomy->size()) != classes)) {
    throw Error(ErrorCode::kDimensionError,
                fmt::format("{}: checkpoint is for taxonomy '{}' with {} classes", path.string(),
                            tax_name, classes));
  }
  SegmenterModel m;
  m.taxonomy = std::move(taxonomy);
  m.weights.resize(classes, dim);
  m.bias.resize(classes);
  for (int r = 0; r < classes; ++r) {
    for (int c = 0; c < dim; ++c) m.weights(r, c) = get_f64(in, path);
  }
  for (int r = 0; r < classes; ++r) m.bias(r) = get_f64(in, path);
  return m;
}

}  // namespace doda
