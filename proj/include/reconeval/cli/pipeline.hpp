#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "reconeval/align.hpp"
#include "reconeval/anomaly.hpp"
#include "reconeval/cli/config.hpp"
#include "reconeval/cli/manifest.hpp"
#include "reconeval/imgmetrics.hpp"
#include "reconeval/pcmetrics.hpp"

namespace reconeval {

inline constexpr const char* kToolVersion = "0.1.0";

struct AnomalySection {
  AnomalyReport report;
  AlignmentResult baseline_alignment;
};

struct EvaluationReport {
  ImageMetricSet image_metrics;
  PointCloudMetricSet pc_metrics;
  std::size_t n_reference_points = 0;
  std::size_t n_reconstructed_points = 0;
  bool alignment_performed = false;
  AlignmentResult alignment;
  std::optional<AnomalySection> anomaly;
  /// Captured images listed / readable; both 0 without a manifest.
  std::size_t n_images_taken = 0;
  std::size_t n_images_used = 0;
  std::optional<CaptureSummary> capture;
  /// Wall clock of the whole evaluation; unset when timing is off.
  std::optional<double> evaluation_latency_seconds;
  nlohmann::json config;
};

/// Fails fast on out-of-range settings and missing input files, naming the
/// config key.
void validate_for_evaluate(const PipelineConfig& config);

/// Aligns `reconstructed` (and `baseline`, if given) to the reference, then
/// renders, measures and optionally runs anomaly detection with the
/// reconstruction as the anomalous cloud. Errors come back as StageError.
EvaluationReport evaluate_clouds(const PointCloud& reference, const PointCloud& reconstructed,
                                 const PointCloud* baseline, const PipelineConfig& config);

/// Loads the inputs named in the config, evaluates and times the run.
EvaluationReport run_evaluate(const PipelineConfig& config);

/// Rounds to 6 significant digits; non-finite values become the strings
/// "inf", "-inf" or "nan".
nlohmann::json report_number(double v);
nlohmann::json alignment_to_json(const AlignmentResult& a, bool performed);
nlohmann::json anomaly_to_json(const AnomalyReport& r);
nlohmann::json report_to_json(const EvaluationReport& report);

/// Sorted keys, two-space indent, trailing newline.
std::string dump_report(const nlohmann::json& report);
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct BenchRow {
  std::string label;
  double psnr_db = 0.0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  double lpips = 0.0;
  double hd = 0.0;
  double wd = 0.0;
  std::optional<double> latency_s;
  std::optional<double> hd_b;
  std::optional<double> hd_a;
  std::optional<double> delta_hd;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  /// One report per row, same order.
  std::vector<nlohmann::json> reports;
};

/// Generates the reference from the bench settings, then for each noise
/// level evaluates a degraded copy and, when enabled, a degraded copy with
/// the protruding box (anomaly detection against the clean copy).
BenchResult run_synth_bench(const PipelineConfig& config);

inline constexpr const char* kBenchCsvHeader = "label,psnr_db,ssim_mean,ssim_std,lpips,hd,wd,latency_s,hd_b,hd_a,delta_hd";

std::string bench_csv(const std::vector<BenchRow>& rows);

/// bench.csv plus reports/<label>.json under `dir`.
void write_bench(const BenchResult& result, const std::filesystem::path& dir);

}  // namespace reconeval
