#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "reconeval/align.hpp"
#include "reconeval/anomaly.hpp"
#include "reconeval/pcmetrics.hpp"
#include "reconeval/synth.hpp"

namespace reconeval {

struct PathsConfig {
  std::filesystem::path reference;
  std::filesystem::path reconstructed;
  /// Anomaly-free reconstruction; enables anomaly detection in evaluate.
  std::filesystem::path baseline;
  std::filesystem::path images;
  std::filesystem::path manifest;
};

struct RenderSettings {
  int n_views = 32;
  double radius_factor = 2.0;
  int width = 320;
  int height = 320;
  double focal_px = 320.0;
  int point_radius_px = 1;
  Intrinsics intrinsics() const;
};

struct CaptureSettings {
  double yaw_bin = 0.5;
  double time_gap = 10.0;
};

struct BenchSettings {
  double surface_density = 32700.0;
  std::vector<double> noise_levels{0.001, 0.002, 0.003};
  double dropout_fraction = 0.0;
  double outlier_fraction = 0.0;
  double outlier_scale = 0.0;
  bool include_anomaly = true;
  ProtrusionSpec protrusion;
};

struct PipelineConfig {
  PathsConfig paths;
  bool align_enabled = true;
  AlignConfig align;
  RenderSettings render;
  PcMetricsConfig metrics;
  AnomalyConfig anomaly;
  CaptureSettings capture;
  BenchSettings bench;
  std::string perceptual_backend = "proxy";
  /// Record wall-clock latency. Off makes reports byte-reproducible.
  bool timing = true;
  std::uint64_t seed = 42;

  /// Range checks on every numeric field. Throws InvalidArgument naming the
  /// offending key.
  void validate() const;
  /// Seeds every randomized stage from `seed`.
  void propagate_seed();
};

/// One settable key, e.g. "align.voxel_fraction".
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(PipelineConfig&, const std::vector<std::string>&)> set;
  std::function<nlohmann::json(const PipelineConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

/// Sets one key from its textual value(s). Unknown keys and unparsable
/// values throw InvalidArgument.
void set_config_value(PipelineConfig& config, const std::string& key, const std::vector<std::string>& values);
/// "key=value" form used by --set; the value may be a comma-separated list.
void apply_assignment(PipelineConfig& config, const std::string& assignment);

/// Reads a TOML file ("[section]" tables, "key = value" pairs) onto the
/// config. Throws IoFailure or InvalidArgument.
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);

/// Every key with its resolved value, nested by section.
nlohmann::json config_to_json(const PipelineConfig& config);

}  // namespace reconeval
