#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "doda/pipeline.hpp"

namespace fs = std::filesystem;
using namespace doda;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "pipeline config (key=value)");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  auto* o = cmd->add_option("--out", c.out, "output directory or file");
  if (out_required) o->required();
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig pc = c.config.empty() ? PipelineConfig{} : load_pipeline_config(c.config);
  if (c.seed) pc.seed = *c.seed;
  if (c.threads > 0) pc.threads = c.threads;
  if (!c.out.empty()) pc.out_dir = c.out;
  pc.validate();
  return pc;
}

std::vector<NamedCloud> scenes_of(const std::string& manifest) { return load_scenes(load_manifest(manifest)); }

void write_scenes(const std::vector<NamedCloud>& scenes, const fs::path& dir, DomainRole role) {
  fs::create_directories(dir);
  DatasetManifest m{role, scenes.empty() ? toy_taxonomy()->name() : scenes.front().cloud.taxonomy->name(), {}};
  for (const auto& s : scenes) {
    const fs::path p = dir / (s.id + ".ply");
    write_point_file(s.cloud, p, FileFormat::kPlyBinaryLe);
    m.entries.push_back({s.id, p});
  }
  write_manifest(m, dir / "manifest.txt");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain adaptation toolkit for labeled indoor point clouds"};
  app.require_subcommand(1);
  std::string stage = "cli";

  Common gen_c;
  std::string gen_template = "all";
  int gen_count = 6;
  double gen_density = 1250.0;
  auto* gen = app.add_subcommand("gen-scenes", "generate synthetic rooms from templates");
  add_common(gen, gen_c);
  gen->add_option("--template", gen_template, "template name or 'all'");
  gen->add_option("--count", gen_count, "number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--density", gen_density, "surface points per square meter");

  Common scan_c;
  std::string scan_manifest;
  auto* scan = app.add_subcommand("scan", "virtual scan (occlusion + jitter) of every scene");
  add_common(scan, scan_c);
  scan->add_option("--manifest", scan_manifest)->required();

  Common mix_c;
  std::string mix_source, mix_target;
  auto* mix = app.add_subcommand("mix", "compose one intermediate scene from a source and a target file");
  add_common(mix, mix_c);
  mix->add_option("--source", mix_source)->required();
  mix->add_option("--target", mix_target)->required();

  Common pl_c;
  std::string pl_ckpt, pl_manifest;
  auto* pl = app.add_subcommand("pseudo-label", "write pseudo-labeled copies of target scenes");
  add_common(pl, pl_c);
  pl->add_option("--checkpoint", pl_ckpt)->required();
  pl->add_option("--manifest", pl_manifest)->required();

  Common pre_c;
  bool pre_vss = true;
  auto* pre = app.add_subcommand("pretrain", "train on source scenes");
  add_common(pre, pre_c);
  pre->add_option("--vss", pre_vss, "virtual scans during training (true/false)");

  Common st_c;
  std::string st_ckpt, st_pseudo;
  auto* st = app.add_subcommand("selftrain", "self-train with cuboid mixing on pseudo-labeled targets");
  add_common(st, st_c);
  st->add_option("--checkpoint", st_ckpt)->required();
  st->add_option("--pseudo-manifest", st_pseudo)->required();

  Common ev_c;
  std::string ev_ckpt, ev_manifest;
  auto* ev = app.add_subcommand("evaluate", "per-class IoU and mIoU as CSV");
  add_common(ev, ev_c);
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--manifest", ev_manifest)->required();

  Common all_c;
  auto* all = app.add_subcommand("run-all", "full pipeline with ablations");
  add_common(all, all_c, false);

  Common toy_c;
  auto* toy = app.add_subcommand("make-toy-benchmark", "write the 20 sim / 20 real toy benchmark");
  add_common(toy, toy_c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      stage = "gen-scenes";
      const PipelineConfig pc = resolve(gen_c);
      const RandomStream root(pc.seed);
      std::vector<NamedCloud> scenes;
      for (int i = 0; i < gen_count; ++i) {
        const SceneTemplate kind = gen_template == "all"
                                       ? kAllTemplates[static_cast<std::size_t>(i) % std::size(kAllTemplates)]
                                       : parse_scene_template(gen_template);
        RandomStream rng = root.derive(static_cast<std::uint64_t>(i));
        scenes.push_back({fmt::format("scene_{:03d}_{}", i, to_string(kind)),
                          generate_scene(make_template(kind, rng, gen_density), toy_taxonomy(), rng)});
      }
      write_scenes(scenes, pc.out_dir, DomainRole::kSource);
    } else if (*scan) {
      stage = "scan";
      const PipelineConfig pc = resolve(scan_c);
      auto scenes = scenes_of(scan_manifest);
      const RandomStream root(pc.seed);
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        RandomStream rng = root.derive(i);
        scenes[i].cloud = virtual_scan(scenes[i].cloud, pc.vss, StructuralClasses{}, rng);
      }
      write_scenes(scenes, pc.out_dir, DomainRole::kTarget);
    } else if (*mix) {
      stage = "mix";
      const PipelineConfig pc = resolve(mix_c);
      const auto tax = toy_taxonomy();
      const auto src = read_point_file(mix_source, format_for_path(mix_source), tax);
      const auto tgt = read_point_file(mix_target, format_for_path(mix_target), tax);
      TailCuboidQueue queue(pc.tacm.queue_capacity);
      RandomStream rng(pc.seed);
      const auto r = tacm_compose(src, tgt, class_ratio(tgt.labels, *tax), pc.tacm, queue, rng);
      const fs::path out = pc.out_dir;
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      write_point_file(r.scene.cloud, out, format_for_path(out));
      std::cout << fmt::format("cells from source: {}, from queue: {}\n", r.mixed_from_source,
                               r.queue_replaced.size());
    } else if (*pl) {
      stage = "pseudo-label";
      const PipelineConfig pc = resolve(pl_c);
      auto scenes = scenes_of(pl_manifest);
      const auto tax = scenes.empty() ? toy_taxonomy() : scenes.front().cloud.taxonomy;
      const SegmenterModel model = load_checkpoint(pl_ckpt, tax);
      const auto clouds = clouds_of(scenes);
      const auto labeled = pseudo_label_scenes(model, clouds, extract_all_features(clouds, pc.features, pc.threads),
                                               pc.pseudo);
      for (std::size_t i = 0; i < scenes.size(); ++i) scenes[i].cloud = labeled[i];
      write_scenes(scenes, pc.out_dir, DomainRole::kTarget);
    } else if (*pre) {
      stage = "pretrain";
      const PipelineConfig pc = resolve(pre_c);
      const auto sources = clouds_of(scenes_of(pc.source_manifest.string()));
      if (sources.empty()) throw Error(ErrorCode::kEmptyInput, "empty source manifest");
      RandomStream rng(pc.seed);
      const auto r = train_pretrain(SegmenterModel::zeros(sources.front().taxonomy), sources,
                                    pre_vss ? std::optional<VssConfig>(pc.vss) : std::nullopt,
                                    StructuralClasses{}, pc.features, pc.pretrain, rng);
      fs::create_directories(pc.out_dir);
      save_checkpoint(r.model, pc.out_dir / "model.ckpt");
      write_loss_trace(r, pc.out_dir / "loss.csv");
    } else if (*st) {
      stage = "selftrain";
      const PipelineConfig pc = resolve(st_c);
      const auto sources = clouds_of(scenes_of(pc.source_manifest.string()));
      const auto targets = clouds_of(scenes_of(st_pseudo));
      if (sources.empty() || targets.empty()) throw Error(ErrorCode::kEmptyInput, "empty manifest");
      const auto tax = sources.front().taxonomy;
      std::vector<Label> all;
      for (const auto& t : targets) all.insert(all.end(), t.labels.begin(), t.labels.end());
      TailCuboidQueue queue(pc.tacm.queue_capacity);
      RandomStream rng(pc.seed);
      const auto r = train_selftrain(load_checkpoint(st_ckpt, tax), sources, targets, class_ratio(all, *tax),
                                     pc.tacm, pc.vss, StructuralClasses{}, pc.features, pc.selftrain, queue,
                                     rng);
      fs::create_directories(pc.out_dir);
      save_checkpoint(r.model, pc.out_dir / "model.ckpt");
      write_loss_trace(r, pc.out_dir / "loss.csv");
    } else if (*ev) {
      stage = "evaluate";
      const PipelineConfig pc = resolve(ev_c);
      const auto clouds = clouds_of(scenes_of(ev_manifest));
      if (clouds.empty()) throw Error(ErrorCode::kEmptyInput, "empty manifest");
      const SegmenterModel model = load_checkpoint(ev_ckpt, clouds.front().taxonomy);
      const auto rep =
          compute_iou(evaluate_model(model, clouds, extract_all_features(clouds, pc.features, pc.threads)));
      const std::string csv = format_iou_csv(rep, *model.taxonomy);
      const fs::path out = pc.out_dir;
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream(out) << csv;
      std::cout << csv;
    } else if (*all) {
      stage = "run-all";
      const PipelineConfig pc = resolve(all_c);
      const RunReport r = run_pipeline(pc);
      std::cout << r.text();
      if (!r.complete) {
        std::cerr << fmt::format("[{}] {}\n", r.failed_stage, r.error);
        return 1;
      }
    } else if (*toy) {
      stage = "make-toy-benchmark";
      const std::uint64_t seed = toy_c.seed.value_or(0);
      const fs::path cfg = make_toy_benchmark(toy_c.out, seed, ToyBenchmarkConfig::defaults());
      std::cout << cfg.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << fmt::format("[{}] {}\n", stage, e.what());
    return 1;
  }
  return 0;
}
