#include "doda/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include <fmt/format.h>

namespace doda {

TaxonomyPtr taxonomy_by_name(const std::string& name) {
  if (name == toy_taxonomy()->name()) return toy_taxonomy();
  throw Error(ErrorCode::kUnknownLabel, fmt::format("unknown taxonomy '{}'", name));
}

std::vector<NamedCloud> load_scenes(const DatasetManifest& manifest) {
  const TaxonomyPtr tax = taxonomy_by_name(manifest.taxonomy_name);
  std::vector<NamedCloud> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    out.push_back({e.scene_id, read_point_file(e.path, format_for_path(e.path), tax)});
  }
  return out;
}

std::vector<LabeledPointCloud> clouds_of(const std::vector<NamedCloud>& scenes) {
  std::vector<LabeledPointCloud> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.cloud);
  return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<FeatureMatrix> extract_all_features(const std::vector<LabeledPointCloud>& scenes,
                                                const FeatureConfig& config, int threads) {
  std::vector<FeatureMatrix> out(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) { out[i] = extract_features(scenes[i], config); });
  return out;
}

ConfusionMatrix evaluate_model(const SegmenterModel& model, const std::vector<LabeledPointCloud>& scenes,
                               const std::vector<FeatureMatrix>& features) {
  ConfusionMatrix cm(static_cast<std::size_t>(model.classes()));
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    accumulate_confusion(cm, predict(model, features[i]), scenes[i].labels,
                         scenes[i].taxonomy->ignore_index());
  }
  return cm;
}

std::vector<LabeledPointCloud> pseudo_label_scenes(const SegmenterModel& model,
                                                   const std::vector<LabeledPointCloud>& scenes,
                                                   const std::vector<FeatureMatrix>& features,
                                                   const PseudoLabelConfig& config) {
  std::vector<LabeledPointCloud> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    LabeledPointCloud c = scenes[i];
    c.labels = generate_pseudo_labels(forward_scores(model, features[i]), config,
                                      scenes[i].taxonomy->ignore_index());
    out.push_back(std::move(c));
  }
  return out;
}

void write_loss_trace(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
  const bool split = !result.mixed_loss.empty();
  out << (split ? "iteration,loss,mixed_term,source_term\n" : "iteration,loss\n");
  for (std::size_t i = 0; i < result.loss.size(); ++i) {
    if (split) {
      out << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", i, result.loss[i], result.mixed_loss[i],
                         result.source_loss[i]);
    } else {
      out << fmt::format("{},{:.9g}\n", i, result.loss[i]);
    }
  }
}

std::string RunReport::text() const {
  std::string s = "doda run report\n";
  s += fmt::format("status={}\n", complete ? "complete" : "incomplete");
  if (!complete) {
    s += fmt::format("failed_stage={}\n", failed_stage);
    s += fmt::format("error={}\n", error);
  }
  s += fmt::format("seed={}\nsource_scenes={}\ntarget_scenes={}\n", seed, source_scenes, target_scenes);
  s += fmt::format("pseudo.retained={}/{}\n", pseudo_retained, pseudo_total);
  if (pseudo_retained > 0) {
    s += fmt::format("pseudo.accuracy={:.6f}\n",
                     static_cast<double>(pseudo_correct) / static_cast<double>(pseudo_retained));
  }
  const std::pair<const char*, const std::optional<IouReport>*> rows[] = {
      {"source_only", &source_only}, {"vss_only", &vss_only}, {"doda", &doda}};
  for (const auto& [name, rep] : rows) {
    s += rep->has_value() ? fmt::format("miou.{}={:.6f}\n", name, (*rep)->miou)
                          : fmt::format("miou.{}=not_run\n", name);
  }
  for (const auto& [name, rep] : rows) {
    if (!rep->has_value() || !taxonomy) continue;
    for (std::size_t j = 0; j < (*rep)->per_class.size(); ++j) {
      const auto& v = (*rep)->per_class[j];
      s += fmt::format("iou.{}.{}={}\n", name, taxonomy->class_names()[j],
                       v ? fmt::format("{:.6f}", *v) : std::string("undefined"));
    }
  }
  return s;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
  out << text;
}

IouReport evaluate_and_write(const SegmenterModel& model, const std::vector<LabeledPointCloud>& scenes,
                             const std::vector<FeatureMatrix>& features,
                             const std::filesystem::path& csv) {
  const IouReport rep = compute_iou(evaluate_model(model, scenes, features));
  write_text(csv, format_iou_csv(rep, *model.taxonomy));
  return rep;
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& config) {
  namespace fs = std::filesystem;
  RunReport report;
  report.seed = config.seed;
  std::string stage = "setup";
  const fs::path out = config.out_dir;
  try {
    config.validate();
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "pseudo");
    fs::create_directories(out / "mixed");
    fs::create_directories(out / "loss");
    fs::create_directories(out / "metrics");
    fs::remove(out / "INCOMPLETE");

    stage = "load";
    const DatasetManifest src_manifest = load_manifest(config.source_manifest);
    const DatasetManifest tgt_manifest = load_manifest(config.target_manifest);
    if (src_manifest.taxonomy_name != tgt_manifest.taxonomy_name) {
      throw Error(ErrorCode::kInvalidArgument, "source and target manifests use different taxonomies");
    }
    const auto src_named = load_scenes(src_manifest);
    const auto tgt_named = load_scenes(tgt_manifest);
    if (src_named.empty() || tgt_named.empty()) throw Error(ErrorCode::kEmptyInput, "empty manifest");
    const auto sources = clouds_of(src_named);
    const auto targets = clouds_of(tgt_named);
    const TaxonomyPtr tax = sources.front().taxonomy;
    report.taxonomy = tax;
    report.source_scenes = sources.size();
    report.target_scenes = targets.size();
    const auto target_features = extract_all_features(targets, config.features, config.threads);
    const StructuralClasses structural;
    const RandomStream root(config.seed);

    stage = "pretrain_source_only";
    {
      RandomStream rng = root.derive(1);
      const TrainResult r = train_pretrain(SegmenterModel::zeros(tax), sources, std::nullopt, structural,
                                           config.features, config.pretrain, rng);
      save_checkpoint(r.model, out / "checkpoints" / "source_only.ckpt");
      write_loss_trace(r, out / "loss" / "source_only.csv");
      stage = "evaluate_source_only";
      report.source_only = evaluate_and_write(r.model, targets, target_features,
                                              out / "metrics" / "source_only.csv");
    }

    stage = "pretrain_vss";
    RandomStream vss_rng = root.derive(2);
    TrainResult vss = train_pretrain(SegmenterModel::zeros(tax), sources, config.vss, structural,
                                     config.features, config.pretrain, vss_rng);
    save_checkpoint(vss.model, out / "checkpoints" / "vss_pretrain.ckpt");
    write_loss_trace(vss, out / "loss" / "vss_pretrain.csv");
    stage = "evaluate_vss";
    report.vss_only = evaluate_and_write(vss.model, targets, target_features, out / "metrics" / "vss_only.csv");

    SegmenterModel model = vss.model;
    RandomStream st_rng = root.derive(3);
    for (int round = 0; round < config.pseudo_rounds; ++round) {
      stage = "pseudo_label";
      const auto pseudo = pseudo_label_scenes(model, targets, target_features, config.pseudo);
      report.pseudo_retained = report.pseudo_total = report.pseudo_correct = 0;
      std::vector<Label> all_pseudo;
      for (std::size_t i = 0; i < pseudo.size(); ++i) {
        for (std::size_t k = 0; k < pseudo[i].size(); ++k) {
          ++report.pseudo_total;
          if (pseudo[i].labels[k] == tax->ignore_index()) continue;
          ++report.pseudo_retained;
          if (pseudo[i].labels[k] == targets[i].labels[k]) ++report.pseudo_correct;
        }
        all_pseudo.insert(all_pseudo.end(), pseudo[i].labels.begin(), pseudo[i].labels.end());
        if (round + 1 == config.pseudo_rounds) {
          write_point_file(pseudo[i], out / "pseudo" / (tgt_named[i].id + ".ply"), FileFormat::kPlyBinaryLe);
        }
      }
      const std::vector<double> ratios = class_ratio(all_pseudo, *tax);

      stage = "selftrain";
      TailCuboidQueue queue(config.tacm.queue_capacity);
      TrainResult st = train_selftrain(model, sources, pseudo, ratios, config.tacm, config.vss, structural,
                                       config.features, config.selftrain, queue, st_rng,
                                       round == 0 ? 3 : 0);
      model = std::move(st.model);
      write_loss_trace(st, out / "loss" / fmt::format("selftrain_round{}.csv", round));
      for (std::size_t k = 0; k < st.samples.size(); ++k) {
        write_point_file(st.samples[k].cloud, out / "mixed" / fmt::format("sample_{}.ply", k),
                         FileFormat::kPlyBinaryLe);
      }
    }
    save_checkpoint(model, out / "checkpoints" / "doda.ckpt");

    stage = "evaluate_doda";
    report.doda = evaluate_and_write(model, targets, target_features, out / "metrics" / "doda.csv");
    report.complete = true;
  } catch (const std::exception& e) {
    report.complete = false;
    report.failed_stage = stage;
    report.error = e.what();
  }
  try {
    if (!report.complete) {
      fs::create_directories(out);
      write_text(out / "INCOMPLETE", fmt::format("{}: {}\n", report.failed_stage, report.error));
    }
    write_text(out / "report.txt", report.text());
  } catch (const std::exception&) {
    // Report stays in memory; the caller prints it.
  }
  return report;
}

PipelineConfig toy_pipeline_config() {
  PipelineConfig pc;
  // At 1 cm the planarity feature separates clean, lightly and heavily jittered surfaces.
  pc.features.voxel = 0.01;
  pc.pseudo.mode = PseudoLabelMode::kPerClassFraction;
  for (TrainConfig* t : {&pc.pretrain, &pc.selftrain}) {
    t->iterations = 200;
    t->momentum = 0.9;
    t->poly_power = 0.9;
    t->points_per_scene = 3000;
    // These move points relative to the room frame the features are measured in.
    t->augment.rotate = false;
    t->augment.elastic = false;
    t->augment.jitter = false;
  }
  pc.pretrain.batch_size = 2;
  pc.selftrain.scene_context_features = true;
  return pc;
}

ToyBenchmarkConfig ToyBenchmarkConfig::defaults() {
  ToyBenchmarkConfig c;
  c.hidden.n_cameras = 2;
  c.hidden.fov.alpha_h = 120.0;
  c.hidden.fov.alpha_v = 70.0;
  c.hidden.jitter = 0.02;
  return c;
}

std::filesystem::path make_toy_benchmark(const std::filesystem::path& out_dir, std::uint64_t seed,
                                         const ToyBenchmarkConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "sim");
  fs::create_directories(out_dir / "real");
  const TaxonomyPtr tax = toy_taxonomy();
  const RandomStream root(seed);
  const StructuralClasses structural;
  constexpr std::size_t kTemplates = std::size(kAllTemplates);

  DatasetManifest sim{DomainRole::kSource, tax->name(), {}};
  for (int i = 0; i < config.sim_scenes; ++i) {
    RandomStream rng = root.derive(1000 + static_cast<std::uint64_t>(i));
    const SceneTemplate kind = kAllTemplates[static_cast<std::size_t>(i) % kTemplates];
    const LabeledPointCloud cloud = generate_scene(make_template(kind, rng, config.density), tax, rng);
    const std::string id = fmt::format("sim_{:03d}_{}", i, to_string(kind));
    const fs::path path = out_dir / "sim" / (id + ".ply");
    write_point_file(cloud, path, FileFormat::kPlyBinaryLe);
    sim.entries.push_back({id, path});
  }
  DatasetManifest real{DomainRole::kTarget, tax->name(), {}};
  for (int i = 0; i < config.real_scenes; ++i) {
    RandomStream rng = root.derive(2000 + static_cast<std::uint64_t>(i));
    const SceneTemplate kind = kAllTemplates[static_cast<std::size_t>(i) % kTemplates];
    const LabeledPointCloud clean = generate_scene(make_template(kind, rng, config.density), tax, rng);
    const LabeledPointCloud scanned = virtual_scan(clean, config.hidden, structural, rng);
    const std::string id = fmt::format("real_{:03d}_{}", i, to_string(kind));
    const fs::path path = out_dir / "real" / (id + ".ply");
    write_point_file(scanned, path, FileFormat::kPlyBinaryLe);
    real.entries.push_back({id, path});
  }
  write_manifest(sim, out_dir / "source.manifest");
  write_manifest(real, out_dir / "target.manifest");

  PipelineConfig pc = toy_pipeline_config();
  pc.seed = seed;
  pc.source_manifest = "source.manifest";
  pc.target_manifest = "target.manifest";
  pc.out_dir = "run";
  const fs::path cfg = out_dir / "pipeline.cfg";
  write_text(cfg, format_pipeline_config(pc));
  return cfg;
}

}  // namespace doda
