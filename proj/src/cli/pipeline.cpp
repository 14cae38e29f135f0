#include "reconeval/cli/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "reconeval/core/io.hpp"
#include "reconeval/error.hpp"
#include "reconeval/render.hpp"
#include "reconeval/synth.hpp"

namespace reconeval {

namespace {

using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

template <class F>
auto run_stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require_file(const std::filesystem::path& p, const std::string& key) {
  if (p.empty()) throw InvalidArgument(key + ": required");
  if (!std::filesystem::is_regular_file(p)) throw InvalidArgument(key + ": file does not exist: " + p.string());
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string label_for(double sigma) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "sigma_%g", sigma);
  return buf;
}

}  // namespace

void validate_for_evaluate(const PipelineConfig& config) {
  config.validate();
  require_file(config.paths.reference, "paths.reference");
  require_file(config.paths.reconstructed, "paths.reconstructed");
  if (!config.paths.baseline.empty()) require_file(config.paths.baseline, "paths.baseline");
  if (!config.paths.images.empty() && config.paths.manifest.empty()) {
    throw InvalidArgument("paths.manifest: required when paths.images is set");
  }
  if (!config.paths.manifest.empty()) {
    require_file(config.paths.manifest, "paths.manifest");
    if (!config.paths.images.empty() && !std::filesystem::is_directory(config.paths.images)) {
      throw InvalidArgument("paths.images: directory does not exist: " + config.paths.images.string());
    }
  }
}

EvaluationReport evaluate_clouds(const PointCloud& reference, const PointCloud& reconstructed,
                                 const PointCloud* baseline, const PipelineConfig& input_config) {
  PipelineConfig config = input_config;
  config.propagate_seed();
  run_stage("config", [&] {
    config.validate();
    return 0;
  });

  EvaluationReport r;
  r.config = config_to_json(config);
  r.n_reference_points = reference.size();
  r.n_reconstructed_points = reconstructed.size();
  const auto backend = run_stage("perceptual backend", [&] { return make_perceptual_backend(config.perceptual_backend); });

  PointCloud aligned = reconstructed;
  r.alignment_performed = config.align_enabled;
  if (config.align_enabled) {
    r.alignment = run_stage("align", [&] { return align_full(reference, reconstructed, config.align); });
    aligned = r.alignment.transform.apply(reconstructed);
  }

  const auto pairs = run_stage("render", [&] {
    const auto rig = make_camera_rig(reference, config.render.n_views, config.render.radius_factor,
                                     config.render.intrinsics());
    SplatConfig splat;
    splat.point_radius_px = config.render.point_radius_px;
    return render_pair(reference, aligned, rig, splat);
  });
  r.image_metrics = run_stage("image metrics", [&] { return aggregate_image_metrics(pairs, *backend); });
  r.pc_metrics = run_stage("pointcloud metrics", [&] { return compute_pc_metrics(reference, aligned, config.metrics); });

  if (baseline) {
    AnomalySection section;
    PointCloud baseline_aligned = *baseline;
    if (config.align_enabled) {
      section.baseline_alignment =
          run_stage("align baseline", [&] { return align_full(reference, *baseline, config.align); });
      baseline_aligned = section.baseline_alignment.transform.apply(*baseline);
    }
    section.report =
        run_stage("anomaly", [&] { return detect_anomaly(reference, baseline_aligned, aligned, config.anomaly); });
    r.anomaly = std::move(section);
  }
  return r;
}

EvaluationReport run_evaluate(const PipelineConfig& config) {
  validate_for_evaluate(config);
  const auto t0 = Clock::now();
  const PointCloud reference = run_stage("load reference", [&] { return load_pointcloud(config.paths.reference); });
  const PointCloud reconstructed =
      run_stage("load reconstructed", [&] { return load_pointcloud(config.paths.reconstructed); });
  std::optional<PointCloud> baseline;
  if (!config.paths.baseline.empty()) {
    baseline = run_stage("load baseline", [&] { return load_pointcloud(config.paths.baseline); });
  }
  std::optional<CaptureSummary> capture;
  if (!config.paths.manifest.empty()) {
    capture = run_stage("capture", [&] {
      const auto dir = config.paths.images.empty() ? config.paths.manifest.parent_path() : config.paths.images;
      return summarize_capture(load_manifest(config.paths.manifest), dir, config.capture.yaw_bin,
                               config.capture.time_gap);
    });
  }
  EvaluationReport r = evaluate_clouds(reference, reconstructed, baseline ? &*baseline : nullptr, config);
  if (capture) {
    r.n_images_taken = capture->n_taken;
    r.n_images_used = capture->n_used;
    r.capture = std::move(capture);
  }
  if (config.timing) r.evaluation_latency_seconds = seconds_since(t0);
  return r;
}

Json report_number(double v) {
  if (!std::isfinite(v)) return format_number(v);
  return std::strtod(format_number(v).c_str(), nullptr);
}

Json alignment_to_json(const AlignmentResult& a, bool performed) {
  Json rot = Json::array(), trans = Json::array(), trace = Json::array();
  for (int i = 0; i < 3; ++i) {
    Json row = Json::array();
    for (int j = 0; j < 3; ++j) row.push_back(report_number(a.transform.rotation()(i, j)));
    rot.push_back(row);
    trans.push_back(report_number(a.transform.translation()[i]));
  }
  for (double v : a.rms_trace) trace.push_back(report_number(v));
  return {{"performed", performed},
          {"scale", report_number(a.transform.scale())},
          {"rotation", rot},
          {"translation", trans},
          {"rms_residual", report_number(a.rms_residual)},
          {"inlier_fraction", report_number(a.inlier_fraction)},
          {"iterations_used", a.iterations_used},
          {"rms_trace", trace},
          {"coarse_method", a.coarse_method}};
}

Json anomaly_to_json(const AnomalyReport& r) {
  Json regions = Json::array();
  for (const auto& g : r.regions) {
    regions.push_back({{"centroid", {report_number(g.centroid.x()), report_number(g.centroid.y()),
                                     report_number(g.centroid.z())}},
                       {"point_count", g.point_count},
                       {"max_deviation", report_number(g.max_deviation)}});
  }
  return {{"hd_baseline", report_number(r.hd_baseline)},
          {"hd_anomalous", report_number(r.hd_anomalous)},
          {"delta_hd", report_number(r.delta_hd)},
          {"detected", r.detected},
          {"threshold", report_number(r.threshold)},
          {"threshold_rule", r.threshold_rule},
          {"chamfer_baseline", report_number(r.chamfer_baseline)},
          {"chamfer_anomalous", report_number(r.chamfer_anomalous)},
          {"deviation_cutoff", report_number(r.deviation_cutoff)},
          {"cluster_radius", report_number(r.cluster_radius)},
          {"regions", regions}};
}

Json report_to_json(const EvaluationReport& report) {
  const auto& im = report.image_metrics;
  const auto& pc = report.pc_metrics;
  Json out = {
      {"tool_version", kToolVersion},
      {"config", report.config},
      {"evaluation_latency_seconds",
       report.evaluation_latency_seconds ? report_number(*report.evaluation_latency_seconds) : Json(nullptr)},
      {"latency_scope", "evaluation only: load, align, render, metrics, anomaly; excludes reconstruction"},
      {"n_images_taken", report.n_images_taken},
      {"n_images_used", report.n_images_used},
      {"image_metrics",
       {{"psnr_db", report_number(im.psnr_db)},
        {"pooled_mse", report_number(im.pooled_mse)},
        {"ssim_mean", report_number(im.ssim_mean)},
        {"ssim_std", report_number(im.ssim_std)},
        {"perceptual_mean", report_number(im.perceptual_mean)},
        {"perceptual_std", report_number(im.perceptual_std)},
        {"perceptual_backend", im.perceptual_backend},
        {"n_views", im.n_views}}},
      {"pc_metrics",
       {{"hausdorff", report_number(pc.hausdorff)},
        {"chamfer_mean", report_number(pc.chamfer_mean)},
        {"wasserstein", report_number(pc.wasserstein)},
        {"wasserstein_method", to_string(pc.wasserstein_detail.method)},
        {"wasserstein_points", {pc.wasserstein_detail.points_a, pc.wasserstein_detail.points_b}},
        {"wasserstein_iterations", pc.wasserstein_detail.iterations},
        {"wasserstein_epsilon", report_number(pc.wasserstein_detail.epsilon)},
        {"n_reference_points", report.n_reference_points},
        {"n_reconstructed_points", report.n_reconstructed_points}}},
      {"alignment", alignment_to_json(report.alignment, report.alignment_performed)},
  };
  if (report.capture) {
    out["capture"] = {{"n_groups", report.capture->n_groups}, {"skipped", report.capture->skipped}};
  }
  if (report.anomaly) {
    Json a = anomaly_to_json(report.anomaly->report);
    a["baseline_alignment"] = alignment_to_json(report.anomaly->baseline_alignment, report.alignment_performed);
    out["anomaly"] = std::move(a);
  }
  return out;
}

std::string dump_report(const Json& report) { return report.dump(2) + "\n"; }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << text;
  if (!out) throw IoFailure("failed writing " + path.string());
}

BenchResult run_synth_bench(const PipelineConfig& input_config) {
  PipelineConfig config = input_config;
  config.propagate_seed();
  run_stage("config", [&] {
    config.validate();
    return 0;
  });
  const BenchSettings& b = config.bench;

  SceneSpec scene;
  scene.surface_sample_density = b.surface_density;
  scene.seed = config.seed;
  const PointCloud reference = run_stage("synth reference", [&] { return generate_reference(scene); });
  const AnomalyBox box = run_stage("synth anomaly box", [&] { return protrusion_box(scene, b.protrusion); });

  BenchResult result;
  auto add_row = [&](const std::string& label, double sigma, std::uint64_t degrade_seed, const PointCloud& recon,
                     const PointCloud* baseline) {
    const auto t0 = Clock::now();
    const EvaluationReport rep = evaluate_clouds(reference, recon, baseline, config);
    const double elapsed = seconds_since(t0);
    BenchRow row;
    row.label = label;
    row.psnr_db = rep.image_metrics.psnr_db;
    row.ssim_mean = rep.image_metrics.ssim_mean;
    row.ssim_std = rep.image_metrics.ssim_std;
    row.lpips = rep.image_metrics.perceptual_mean;
    row.hd = rep.pc_metrics.hausdorff;
    row.wd = rep.pc_metrics.wasserstein;
    if (config.timing) row.latency_s = elapsed;
    if (rep.anomaly) {
      row.hd_b = rep.anomaly->report.hd_baseline;
      row.hd_a = rep.anomaly->report.hd_anomalous;
      row.delta_hd = rep.anomaly->report.delta_hd;
    }
    Json j = report_to_json(rep);
    if (config.timing) j["evaluation_latency_seconds"] = report_number(elapsed);
    j["bench"] = {{"label", label},
                  {"noise_sigma", report_number(sigma)},
                  {"with_anomaly", baseline != nullptr},
                  {"degrade_seed", degrade_seed}};
    result.rows.push_back(std::move(row));
    result.reports.push_back(std::move(j));
  };

  for (std::size_t i = 0; i < b.noise_levels.size(); ++i) {
    const double sigma = b.noise_levels[i];
    DegradeSpec d;
    d.noise_sigma = sigma;
    d.dropout_fraction = b.dropout_fraction;
    d.outlier_fraction = b.outlier_fraction;
    d.outlier_scale = b.outlier_scale;
    d.seed = config.seed + 1000 * (i + 1);
    const PointCloud clean = run_stage("synth degrade", [&] { return degrade(reference, d); });
    add_row(label_for(sigma), sigma, d.seed, clean, nullptr);
    if (b.include_anomaly) {
      DegradeSpec da = d;
      da.seed = d.seed + 1;
      const PointCloud anomalous = run_stage("synth anomaly", [&] {
        return degrade(inject_anomaly(reference, box.center, box.extents, config.seed), da);
      });
      add_row(label_for(sigma) + "_anomaly", sigma, da.seed, anomalous, &clean);
    }
  }
  return result;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = std::string(kBenchCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += r.label + "," + format_number(r.psnr_db) + "," + format_number(r.ssim_mean) + "," +
           format_number(r.ssim_std) + "," + format_number(r.lpips) + "," + format_number(r.hd) + "," +
           format_number(r.wd) + "," + optional_number(r.latency_s) + "," + optional_number(r.hd_b) + "," +
           optional_number(r.hd_a) + "," + optional_number(r.delta_hd) + "\n";
  }
  return out;
}

void write_bench(const BenchResult& result, const std::filesystem::path& dir) {
  write_text_file(dir / "bench.csv", bench_csv(result.rows));
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    write_text_file(dir / "reports" / (result.rows[i].label + ".json"), dump_report(result.reports[i]));
  }
}

}  // namespace reconeval
