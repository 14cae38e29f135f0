#include "reconeval/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "reconeval/error.hpp"

namespace reconeval {

namespace {

using Json = nlohmann::json;

std::string single(const std::string& key, const std::vector<std::string>& values) {
  if (values.size() != 1) throw InvalidArgument(key + ": expected exactly one value");
  return values.front();
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InvalidArgument(key + ": '" + text + "' is not a number");
  }
  if (used != text.size() || !std::isfinite(v)) throw InvalidArgument(key + ": '" + text + "' is not a finite number");
  return v;
}

long long parse_integer(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw InvalidArgument(key + ": '" + text + "' is not an integer");
  }
  if (used != text.size()) throw InvalidArgument(key + ": '" + text + "' is not an integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw InvalidArgument(key + ": '" + text + "' is not a boolean");
}

// Member accessors keep the key table declarative.
template <class T>
using Field = std::function<T&(PipelineConfig&)>;

template <class T>
ConfigKey make_key(std::string name, std::string help, Field<T> field) {
  ConfigKey k;
  k.name = name;
  k.help = std::move(help);
  k.get = [field](const PipelineConfig& c) -> Json {
    const T& v = field(const_cast<PipelineConfig&>(c));
    if constexpr (std::is_same_v<T, std::filesystem::path>) {
      return v.string();
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      return v ? Json(*v) : Json(nullptr);
    } else {
      return v;
    }
  };
  k.set = [field, name](PipelineConfig& c, const std::vector<std::string>& values) {
    T& dst = field(c);
    if constexpr (std::is_same_v<T, double>) {
      dst = parse_double(name, single(name, values));
    } else if constexpr (std::is_same_v<T, bool>) {
      dst = parse_bool(name, single(name, values));
    } else if constexpr (std::is_same_v<T, int>) {
      const long long v = parse_integer(name, single(name, values));
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw InvalidArgument(name + ": out of range");
      }
      dst = static_cast<int>(v);
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      const long long v = parse_integer(name, single(name, values));
      if (v < 0) throw InvalidArgument(name + ": must be non-negative");
      dst = static_cast<T>(v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      dst = single(name, values);
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      dst = single(name, values);
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      const std::string text = single(name, values);
      if (text.empty() || text == "auto") {
        dst.reset();
      } else {
        dst = parse_double(name, text);
      }
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      std::vector<double> out;
      for (const auto& v : values) {
        std::stringstream ss(v);
        for (std::string part; std::getline(ss, part, ',');) {
          if (!part.empty()) out.push_back(parse_double(name, part));
        }
      }
      dst = std::move(out);
    }
  };
  return k;
}

#define RECONEVAL_KEY(T, name, help, member) \
  make_key<T>(name, help, [](PipelineConfig& c) -> T& { return c.member; })

std::vector<ConfigKey> build_keys() {
  return {
      RECONEVAL_KEY(std::filesystem::path, "paths.reference", "clean reference cloud (PLY or XYZ)", paths.reference),
      RECONEVAL_KEY(std::filesystem::path, "paths.reconstructed", "reconstruction to evaluate", paths.reconstructed),
      RECONEVAL_KEY(std::filesystem::path, "paths.baseline", "anomaly-free reconstruction (enables anomaly detection)",
                    paths.baseline),
      RECONEVAL_KEY(std::filesystem::path, "paths.images", "directory of captured images", paths.images),
      RECONEVAL_KEY(std::filesystem::path, "paths.manifest", "capture manifest CSV", paths.manifest),

      RECONEVAL_KEY(bool, "align.enabled", "run align_full before measuring", align_enabled),
      RECONEVAL_KEY(double, "align.voxel_fraction", "voxel size / reference diagonal", align.voxel_fraction),
      RECONEVAL_KEY(double, "align.max_correspondence_fraction", "ICP gate / reference diagonal",
                    align.max_correspondence_fraction),
      RECONEVAL_KEY(int, "align.icp_max_iterations", "ICP iteration cap", align.icp_max_iterations),
      RECONEVAL_KEY(double, "align.icp_convergence_epsilon", "ICP relative RMS change to stop",
                    align.icp_convergence_epsilon),
      RECONEVAL_KEY(bool, "align.icp_estimate_scale", "let ICP refine scale", align.icp_estimate_scale),
      RECONEVAL_KEY(double, "align.min_eigenvalue_ratio", "PCA axis separation required", align.min_eigenvalue_ratio),
      RECONEVAL_KEY(double, "align.normal_radius_factor", "normal radius / voxel", align.global.normal_radius_factor),
      RECONEVAL_KEY(double, "align.feature_radius_factor", "descriptor radius / voxel",
                    align.global.feature_radius_factor),
      RECONEVAL_KEY(double, "align.inlier_threshold_factor", "RANSAC inlier distance / voxel",
                    align.global.inlier_threshold_factor),
      RECONEVAL_KEY(double, "align.min_inlier_fraction", "global registration acceptance",
                    align.global.min_inlier_fraction),
      RECONEVAL_KEY(int, "align.ransac_max_iterations", "global registration RANSAC cap",
                    align.global.max_iterations),
      RECONEVAL_KEY(double, "align.ransac_confidence", "RANSAC adaptive stop confidence", align.global.confidence),

      RECONEVAL_KEY(int, "render.n_views", "virtual cameras", render.n_views),
      RECONEVAL_KEY(double, "render.radius_factor", "camera distance / bounding radius", render.radius_factor),
      RECONEVAL_KEY(int, "render.width", "image width, px", render.width),
      RECONEVAL_KEY(int, "render.height", "image height, px", render.height),
      RECONEVAL_KEY(double, "render.focal_px", "focal length, px", render.focal_px),
      RECONEVAL_KEY(int, "render.point_radius_px", "splat radius, px", render.point_radius_px),

      RECONEVAL_KEY(std::size_t, "metrics.exact_threshold", "largest cloud solved by exact assignment",
                    metrics.wasserstein.exact_threshold),
      RECONEVAL_KEY(double, "metrics.sinkhorn_epsilon_fraction", "entropic regularization / joint diagonal",
                    metrics.wasserstein.sinkhorn_epsilon_fraction),
      RECONEVAL_KEY(std::size_t, "metrics.sinkhorn_max_points", "subsample size for Sinkhorn",
                    metrics.wasserstein.sinkhorn_max_points),
      RECONEVAL_KEY(int, "metrics.sinkhorn_max_iterations", "Sinkhorn iteration cap",
                    metrics.wasserstein.sinkhorn_max_iterations),
      RECONEVAL_KEY(double, "metrics.sinkhorn_tolerance", "marginal L1 error to stop",
                    metrics.wasserstein.sinkhorn_tolerance),
      RECONEVAL_KEY(std::string, "perceptual.backend", "proxy or external:<program>", perceptual_backend),

      RECONEVAL_KEY(std::optional<double>, "anomaly.threshold", "fixed delta-HD threshold, m (auto = default rule)",
                    anomaly.threshold),
      RECONEVAL_KEY(double, "anomaly.min_threshold", "floor of the default rule, m", anomaly.min_threshold),
      RECONEVAL_KEY(double, "anomaly.baseline_multiple", "HD_B multiple of the default rule",
                    anomaly.baseline_multiple),
      RECONEVAL_KEY(std::optional<double>, "anomaly.deviation_cutoff", "localization cutoff, m (auto = HD_B)",
                    anomaly.deviation_cutoff),
      RECONEVAL_KEY(std::optional<double>, "anomaly.cluster_radius", "clustering radius, m (auto = spacing rule)",
                    anomaly.cluster_radius),
      RECONEVAL_KEY(double, "anomaly.spacing_factor", "cluster radius / mean point spacing", anomaly.spacing_factor),
      RECONEVAL_KEY(std::size_t, "anomaly.min_cluster_points", "smallest reported cluster",
                    anomaly.min_cluster_points),

      RECONEVAL_KEY(double, "capture.yaw_bin", "yaw jump that starts a new group, rad", capture.yaw_bin),
      RECONEVAL_KEY(double, "capture.time_gap", "time gap that starts a new group, s", capture.time_gap),

      RECONEVAL_KEY(double, "bench.surface_density", "reference samples per square meter", bench.surface_density),
      RECONEVAL_KEY(std::vector<double>, "bench.noise_levels", "noise sigma per ladder step, m", bench.noise_levels),
      RECONEVAL_KEY(double, "bench.dropout_fraction", "fraction of points dropped", bench.dropout_fraction),
      RECONEVAL_KEY(double, "bench.outlier_fraction", "fraction of points replaced by outliers",
                    bench.outlier_fraction),
      RECONEVAL_KEY(double, "bench.outlier_scale", "outlier box dilation, m", bench.outlier_scale),
      RECONEVAL_KEY(bool, "bench.include_anomaly", "add a protruding-box row per step", bench.include_anomaly),
      RECONEVAL_KEY(double, "bench.protrusion", "box height above the face, m", bench.protrusion.protrusion),
      RECONEVAL_KEY(double, "bench.footprint", "box side length, m", bench.protrusion.footprint),
      RECONEVAL_KEY(double, "bench.embed_depth", "box depth into the block, m", bench.protrusion.embed_depth),

      RECONEVAL_KEY(bool, "report.timing", "record wall-clock latency", timing),
      RECONEVAL_KEY(std::uint64_t, "seed", "seed for every randomized stage", seed),
  };
}

#undef RECONEVAL_KEY

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw InvalidArgument(key + ": " + rule);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }
bool non_negative(double v) { return std::isfinite(v) && v >= 0.0; }
bool fraction(double v) { return std::isfinite(v) && v >= 0.0 && v < 1.0; }

}  // namespace

Intrinsics RenderSettings::intrinsics() const {
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.focal_px = focal_px;
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  return k;
}

void PipelineConfig::validate() const {
  require(positive(align.voxel_fraction) && align.voxel_fraction < 1.0, "align.voxel_fraction", "must be in (0, 1)");
  require(positive(align.max_correspondence_fraction), "align.max_correspondence_fraction", "must be > 0");
  require(align.icp_max_iterations >= 1, "align.icp_max_iterations", "must be >= 1");
  require(non_negative(align.icp_convergence_epsilon), "align.icp_convergence_epsilon", "must be >= 0");
  require(std::isfinite(align.min_eigenvalue_ratio) && align.min_eigenvalue_ratio >= 1.0,
          "align.min_eigenvalue_ratio", "must be >= 1");
  require(positive(align.global.normal_radius_factor), "align.normal_radius_factor", "must be > 0");
  require(positive(align.global.feature_radius_factor), "align.feature_radius_factor", "must be > 0");
  require(positive(align.global.inlier_threshold_factor), "align.inlier_threshold_factor", "must be > 0");
  require(fraction(align.global.min_inlier_fraction), "align.min_inlier_fraction", "must be in [0, 1)");
  require(align.global.max_iterations >= 1, "align.ransac_max_iterations", "must be >= 1");
  require(positive(align.global.confidence) && align.global.confidence < 1.0, "align.ransac_confidence",
          "must be in (0, 1)");

  require(render.n_views >= 1 && render.n_views <= 4096, "render.n_views", "must be in [1, 4096]");
  require(positive(render.radius_factor) && render.radius_factor > 1.0, "render.radius_factor", "must be > 1");
  require(render.width >= 8 && render.width <= 8192, "render.width", "must be in [8, 8192]");
  require(render.height >= 8 && render.height <= 8192, "render.height", "must be in [8, 8192]");
  require(positive(render.focal_px), "render.focal_px", "must be > 0");
  require(render.point_radius_px >= 0 && render.point_radius_px <= 32, "render.point_radius_px",
          "must be in [0, 32]");

  require(metrics.wasserstein.exact_threshold >= 1, "metrics.exact_threshold", "must be >= 1");
  require(positive(metrics.wasserstein.sinkhorn_epsilon_fraction), "metrics.sinkhorn_epsilon_fraction",
          "must be > 0");
  require(metrics.wasserstein.sinkhorn_max_points >= 1, "metrics.sinkhorn_max_points", "must be >= 1");
  require(metrics.wasserstein.sinkhorn_max_iterations >= 1, "metrics.sinkhorn_max_iterations", "must be >= 1");
  require(positive(metrics.wasserstein.sinkhorn_tolerance), "metrics.sinkhorn_tolerance", "must be > 0");
  require(!perceptual_backend.empty(), "perceptual.backend", "must not be empty");

  try {
    anomaly.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("anomaly: ") + e.what());
  }

  require(positive(capture.yaw_bin), "capture.yaw_bin", "must be > 0");
  require(positive(capture.time_gap), "capture.time_gap", "must be > 0");

  require(positive(bench.surface_density), "bench.surface_density", "must be > 0");
  require(!bench.noise_levels.empty(), "bench.noise_levels", "must list at least one level");
  for (double s : bench.noise_levels) require(non_negative(s), "bench.noise_levels", "levels must be >= 0");
  require(fraction(bench.dropout_fraction), "bench.dropout_fraction", "must be in [0, 1)");
  require(fraction(bench.outlier_fraction), "bench.outlier_fraction", "must be in [0, 1)");
  require(non_negative(bench.outlier_scale), "bench.outlier_scale", "must be >= 0");
  try {
    bench.protrusion.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("bench: ") + e.what());
  }
}

void PipelineConfig::propagate_seed() {
  align.global.seed = seed;
  metrics.wasserstein.seed = seed;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(PipelineConfig& config, const std::string& key, const std::vector<std::string>& values) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, values);
      return;
    }
  }
  throw InvalidArgument("unknown config key '" + key + "'");
}

void apply_assignment(PipelineConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("expected key=value, got '" + assignment + "'");
  set_config_value(config, assignment.substr(0, eq), {assignment.substr(eq + 1)});
}

void apply_config_file(PipelineConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open config file " + path.string());
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  for (const auto& item : items) {
    // Section headers come through as bare "++"/"--" markers.
    if (item.name == "++" || item.name == "--") continue;
    try {
      set_config_value(config, item.fullname(), item.inputs);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(path.string() + ": " + e.what());
    }
  }
}

Json config_to_json(const PipelineConfig& config) {
  Json out = Json::object();
  for (const auto& k : config_keys()) {
    Json* node = &out;
    std::stringstream ss(k.name);
    std::vector<std::string> parts;
    for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = k.get(config);
  }
  return out;
}

}  // namespace reconeval
