#include "doda/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace doda {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Error bad_value(const std::string& key, const std::string& value, std::string_view expected) {
  return Error(ErrorCode::kParseError, fmt::format("config key '{}': '{}' is not {}", key, value, expected));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw bad_value(key, value, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw bad_value(key, value, "a boolean");
}

// Typed accessor table: each key binds a setter and a printer.
struct Binding {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T, typename Access>
Binding number(Access access) {
  return {[access](PipelineConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_number<T>(k, v);
          },
          [access](const PipelineConfig& c) {
            return fmt::format("{}", access(const_cast<PipelineConfig&>(c)));
          }};
}

template <typename Access>
Binding boolean(Access access) {
  return {[access](PipelineConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_bool(k, v);
          },
          [access](const PipelineConfig& c) {
            return std::string(access(const_cast<PipelineConfig&>(c)) ? "true" : "false");
          }};
}

void add_train(std::map<std::string, Binding>& b, const std::string& prefix,
               TrainConfig PipelineConfig::*member) {
  auto tc = [member](PipelineConfig& c) -> TrainConfig& { return c.*member; };
  b[prefix + ".lr"] = number<double>([tc](PipelineConfig& c) -> double& { return tc(c).learning_rate; });
  b[prefix + ".iterations"] = number<int>([tc](PipelineConfig& c) -> int& { return tc(c).iterations; });
  b[prefix + ".batch_size"] = number<int>([tc](PipelineConfig& c) -> int& { return tc(c).batch_size; });
  b[prefix + ".lambda"] = number<double>([tc](PipelineConfig& c) -> double& { return tc(c).lambda; });
  b[prefix + ".poly_power"] = number<double>([tc](PipelineConfig& c) -> double& { return tc(c).poly_power; });
  b[prefix + ".momentum"] = number<double>([tc](PipelineConfig& c) -> double& { return tc(c).momentum; });
  b[prefix + ".points_per_scene"] =
      number<std::size_t>([tc](PipelineConfig& c) -> std::size_t& { return tc(c).points_per_scene; });
  b[prefix + ".scene_context_features"] =
      boolean([tc](PipelineConfig& c) -> bool& { return tc(c).scene_context_features; });
  b[prefix + ".precondition"] = boolean([tc](PipelineConfig& c) -> bool& { return tc(c).precondition; });
  b[prefix + ".augment.rotate"] = boolean([tc](PipelineConfig& c) -> bool& { return tc(c).augment.rotate; });
  b[prefix + ".augment.flip"] = boolean([tc](PipelineConfig& c) -> bool& { return tc(c).augment.flip; });
  b[prefix + ".augment.elastic"] = boolean([tc](PipelineConfig& c) -> bool& { return tc(c).augment.elastic; });
  b[prefix + ".augment.jitter"] = boolean([tc](PipelineConfig& c) -> bool& { return tc(c).augment.jitter; });
  b[prefix + ".augment.shuffle"] = boolean([tc](PipelineConfig& c) -> bool& { return tc(c).augment.shuffle; });
  b[prefix + ".augment.elastic_spacing"] =
      number<double>([tc](PipelineConfig& c) -> double& { return tc(c).augment.elastic_spacing; });
  b[prefix + ".augment.elastic_magnitude"] =
      number<double>([tc](PipelineConfig& c) -> double& { return tc(c).augment.elastic_magnitude; });
  b[prefix + ".augment.jitter_half_range"] =
      number<double>([tc](PipelineConfig& c) -> double& { return tc(c).augment.jitter_half_range; });
}

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> b;
    b["seed"] = number<std::uint64_t>([](PipelineConfig& c) -> std::uint64_t& { return c.seed; });
    b["threads"] = number<int>([](PipelineConfig& c) -> int& { return c.threads; });
    b["source_manifest"] = {[](PipelineConfig& c, const std::string&, const std::string& v) { c.source_manifest = v; },
                            [](const PipelineConfig& c) { return c.source_manifest.generic_string(); }};
    b["target_manifest"] = {[](PipelineConfig& c, const std::string&, const std::string& v) { c.target_manifest = v; },
                            [](const PipelineConfig& c) { return c.target_manifest.generic_string(); }};
    b["out_dir"] = {[](PipelineConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
                    [](const PipelineConfig& c) { return c.out_dir.generic_string(); }};

    b["vss.n_v"] = number<int>([](PipelineConfig& c) -> int& { return c.vss.n_cameras; });
    b["vss.alpha_h"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.fov.alpha_h; });
    b["vss.alpha_v"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.fov.alpha_v; });
    b["vss.mode"] = {[](PipelineConfig& c, const std::string&, const std::string& v) {
                       c.vss.fov.mode = parse_viewing_mode(v);
                     },
                     [](const PipelineConfig& c) { return std::string(to_string(c.vss.fov.mode)); }};
    b["vss.d_ref"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.fov.parallel_reference_distance; });
    b["vss.bev_cell"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.bev_cell; });
    b["vss.clearance"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.camera_clearance; });
    b["vss.theta_bin"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.theta_bin; });
    b["vss.eps_d"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.depth_tolerance; });
    b["vss.splat_radius"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.splat_radius; });
    b["vss.delta_p"] = number<double>([](PipelineConfig& c) -> double& { return c.vss.jitter; });

    b["tacm.nx"] = number<int>([](PipelineConfig& c) -> int& { return c.tacm.partitions[0]; });
    b["tacm.ny"] = number<int>([](PipelineConfig& c) -> int& { return c.tacm.partitions[1]; });
    b["tacm.nz"] = number<int>([](PipelineConfig& c) -> int& { return c.tacm.partitions[2]; });
    b["tacm.delta_phi"] = number<double>([](PipelineConfig& c) -> double& { return c.tacm.boundary_jitter; });
    b["tacm.rho_s"] = number<double>([](PipelineConfig& c) -> double& { return c.tacm.permute_prob; });
    b["tacm.rho_m"] = number<double>([](PipelineConfig& c) -> double& { return c.tacm.mix_prob; });
    b["tacm.queue_cap"] = number<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.tacm.queue_capacity; });
    b["tacm.n_tail_classes"] = number<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.tacm.tail_classes; });
    b["tacm.min_tail_cuboids"] = number<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.tacm.min_tail_cuboids; });

    b["pseudo.mode"] = {[](PipelineConfig& c, const std::string&, const std::string& v) {
                          c.pseudo.mode = parse_pseudo_label_mode(v);
                        },
                        [](const PipelineConfig& c) { return std::string(to_string(c.pseudo.mode)); }};
    b["pseudo.threshold"] = number<double>([](PipelineConfig& c) -> double& { return c.pseudo.threshold; });
    b["pseudo.fraction"] = number<double>([](PipelineConfig& c) -> double& { return c.pseudo.fraction; });
    b["pseudo.rounds"] = number<int>([](PipelineConfig& c) -> int& { return c.pseudo_rounds; });

    b["features.voxel"] = number<double>([](PipelineConfig& c) -> double& { return c.features.voxel; });
    b["features.radius"] = number<double>([](PipelineConfig& c) -> double& { return c.features.radius; });

    add_train(b, "pretrain", &PipelineConfig::pretrain);
    add_train(b, "selftrain", &PipelineConfig::selftrain);
    return b;
  }();
  return table;
}

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap map;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kParseError, fmt::format("config line {}: expected key=value", line_no));
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::kParseError, fmt::format("config line {}: empty key", line_no));
    map[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return map;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingFile, fmt::format("config {} does not exist", path.string()));
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot read {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void PipelineConfig::validate() const {
  if (threads < 1) throw Error(ErrorCode::kInvalidArgument, "threads must be >= 1");
  if (pseudo_rounds < 1) throw Error(ErrorCode::kInvalidArgument, "pseudo.rounds must be >= 1");
  vss.validate();
  tacm.validate();
  pseudo.validate();
  features.validate();
  pretrain.validate();
  selftrain.validate();
}

PipelineConfig pipeline_config_from_map(const ConfigMap& map, const std::filesystem::path& base_dir) {
  PipelineConfig config;
  const auto& table = bindings();
  for (const auto& [key, value] : map) {
    const auto it = table.find(key);
    if (it == table.end()) throw Error(ErrorCode::kParseError, fmt::format("unknown config key '{}'", key));
    try {
      it->second.set(config, key, value);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kParseError) throw;
      throw Error(ErrorCode::kParseError, fmt::format("config key '{}': {}", key, e.what()));
    }
  }
  for (auto* p : {&config.source_manifest, &config.target_manifest, &config.out_dir}) {
    if (!p->empty() && p->is_relative() && !base_dir.empty()) *p = base_dir / *p;
  }
  return config;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from_map(load_config_file(path), path.parent_path());
}

std::string format_pipeline_config(const PipelineConfig& config) {
  std::string out;
  for (const auto& [key, binding] : bindings()) out += fmt::format("{}={}\n", key, binding.get(config));
  return out;
}

}  // namespace doda
