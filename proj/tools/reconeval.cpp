// Command-line front end: evaluate, detect-anomaly, synth, bench,
// sweep-ransac, render-views.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <random>

#include <Eigen/Geometry>

#include "CLI11.hpp"
#include "reconeval/cli/config.hpp"
#include "reconeval/cli/pipeline.hpp"
#include "reconeval/core/io.hpp"
#include "reconeval/error.hpp"
#include "reconeval/features.hpp"
#include "reconeval/render.hpp"
#include "reconeval/synth.hpp"

namespace fs = std::filesystem;
using namespace reconeval;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;

// Options shared by the subcommands that run the pipeline. Precedence is
// flag > config file > default.
struct CommonOptions {
  std::string config_file;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;
  bool no_timing = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "TOML config file")->check(CLI::ExistingFile);
    app->add_option("--set", assignments, "override a config key, key=value (repeatable)");
    app->add_option("--seed", seed, "seed for every randomized stage");
    app->add_flag("--no-timing", no_timing, "omit wall-clock latency (byte-reproducible output)");
  }

  PipelineConfig resolve(const std::map<std::string, std::string>& flags) const {
    PipelineConfig c;
    if (!config_file.empty()) apply_config_file(c, config_file);
    for (const auto& [key, value] : flags) {
      if (!value.empty()) set_config_value(c, key, {value});
    }
    for (const auto& a : assignments) apply_assignment(c, a);
    if (seed) c.seed = *seed;
    if (no_timing) c.timing = false;
    return c;
  }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Sim3Transform random_similarity(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  const double scale = std::exp(std::log(0.5) + u(rng) * std::log(4.0));
  return {scale, q.normalized().toRotationMatrix(), Point3(g(rng), g(rng), g(rng))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction evaluation toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "align, render and measure a reconstruction against a reference");
  CommonOptions eval_common;
  eval_common.attach(evaluate);
  std::string e_reference, e_reconstructed, e_baseline, e_images, e_manifest, e_out;
  evaluate->add_option("--reference", e_reference, "reference cloud");
  evaluate->add_option("--reconstructed", e_reconstructed, "reconstructed cloud");
  evaluate->add_option("--baseline", e_baseline, "anomaly-free reconstruction; enables anomaly detection");
  evaluate->add_option("--images", e_images, "directory of captured images");
  evaluate->add_option("--manifest", e_manifest, "capture manifest CSV (path,timestamp,yaw[,x,y,z])");
  evaluate->add_option("--out", e_out, "report JSON path")->required();

  // detect-anomaly
  auto* detect = app.add_subcommand("detect-anomaly", "align two reconstructions and compare them against a reference");
  CommonOptions detect_common;
  detect_common.attach(detect);
  std::string d_reference, d_baseline, d_anomalous, d_out, d_points;
  std::optional<double> d_threshold;
  detect->add_option("--reference", d_reference, "clean reference cloud")->required();
  detect->add_option("--baseline", d_baseline, "reconstruction without the anomaly")->required();
  detect->add_option("--anomalous", d_anomalous, "reconstruction with the anomaly")->required();
  detect->add_option("--threshold", d_threshold, "fixed delta-HD threshold, m");
  detect->add_option("--points", d_points, "write localized points to this PLY");
  detect->add_option("--out", d_out, "report JSON path")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic reference, a degraded copy and an anomalous copy");
  std::string s_out;
  double s_noise = 0.003, s_dropout = 0.0, s_outliers = 0.0, s_outlier_scale = 0.05, s_protrusion = 0.04,
         s_density = SceneSpec{}.surface_sample_density;
  std::uint64_t s_seed = 42;
  bool s_perturb = false;
  synth->add_option("--out-dir", s_out, "output directory")->required();
  synth->add_option("--noise", s_noise, "Gaussian noise sigma, m");
  synth->add_option("--dropout", s_dropout, "fraction of points dropped");
  synth->add_option("--outliers", s_outliers, "fraction of points replaced by outliers");
  synth->add_option("--outlier-scale", s_outlier_scale, "outlier box dilation, m");
  synth->add_option("--protrusion", s_protrusion, "height of the anomaly box above the face, m");
  synth->add_option("--density", s_density, "reference samples per square meter");
  synth->add_option("--seed", s_seed, "seed");
  synth->add_flag("--perturb", s_perturb, "move both reconstructions by a random similarity transform");

  // bench
  auto* bench = app.add_subcommand("bench", "synthetic noise ladder with and without an anomaly");
  CommonOptions bench_common;
  bench_common.attach(bench);
  std::string b_out;
  bench->add_option("--out-dir", b_out, "output directory (bench.csv, reports/)")->required();

  // sweep-ransac
  auto* sweep = app.add_subcommand("sweep-ransac", "inlier count and time against RANSAC budget for an image pair");
  std::string r_a, r_b, r_out;
  std::vector<int> r_budgets{0, 10, 100, 1000};
  int r_repeats = 20;
  double r_inlier_px = 3.0;
  std::size_t r_max_features = 2000;
  bool r_preprocess = false;
  std::uint64_t r_seed = 42;
  sweep->add_option("--image-a", r_a, "first image (PGM or PNG)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--image-b", r_b, "second image (PGM or PNG)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--budgets", r_budgets, "iteration budgets")->delimiter(',');
  sweep->add_option("--repeats", r_repeats, "runs per budget")->check(CLI::PositiveNumber);
  sweep->add_option("--inlier-px", r_inlier_px, "symmetric transfer error bound, px")->check(CLI::PositiveNumber);
  sweep->add_option("--max-features", r_max_features, "keypoints kept per image");
  sweep->add_flag("--preprocess", r_preprocess, "sharpen and brighten before detection");
  sweep->add_option("--seed", r_seed, "base seed");
  sweep->add_option("--out", r_out, "CSV path")->required();

  // render-views
  auto* render = app.add_subcommand("render-views", "splat a cloud from a ring of virtual cameras");
  std::string v_cloud, v_rig_from, v_out;
  RenderSettings v_settings;
  render->add_option("--cloud", v_cloud, "cloud to render")->required()->check(CLI::ExistingFile);
  render->add_option("--rig-from", v_rig_from, "place cameras around this cloud instead")->check(CLI::ExistingFile);
  render->add_option("--out-dir", v_out, "output directory")->required();
  render->add_option("--views", v_settings.n_views, "number of views");
  render->add_option("--width", v_settings.width, "image width, px");
  render->add_option("--height", v_settings.height, "image height, px");
  render->add_option("--focal", v_settings.focal_px, "focal length, px");
  render->add_option("--radius-factor", v_settings.radius_factor, "camera distance / bounding radius");
  render->add_option("--point-radius", v_settings.point_radius_px, "splat radius, px");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*evaluate) {
      PipelineConfig c = eval_common.resolve({{"paths.reference", e_reference},
                                              {"paths.reconstructed", e_reconstructed},
                                              {"paths.baseline", e_baseline},
                                              {"paths.images", e_images},
                                              {"paths.manifest", e_manifest}});
      validate_for_evaluate(c);
      const EvaluationReport report = run_evaluate(c);
      write_text_file(e_out, dump_report(report_to_json(report)));
      std::printf("hausdorff %.6g  chamfer %.6g  wasserstein %.6g  psnr %.6g dB  ssim %.6g\n",
                  report.pc_metrics.hausdorff, report.pc_metrics.chamfer_mean, report.pc_metrics.wasserstein,
                  report.image_metrics.psnr_db, report.image_metrics.ssim_mean);
      if (report.anomaly) {
        std::printf("delta_hd %.6g  detected %s\n", report.anomaly->report.delta_hd,
                    report.anomaly->report.detected ? "yes" : "no");
      }
    } else if (*detect) {
      PipelineConfig c = detect_common.resolve({});
      if (d_threshold) c.anomaly.threshold = d_threshold;
      c.propagate_seed();
      c.validate();
      const PointCloud ref = load_pointcloud(d_reference), base = load_pointcloud(d_baseline),
                       anom = load_pointcloud(d_anomalous);
      AlignmentResult ab, aa;
      PointCloud base_aligned = base, anom_aligned = anom;
      if (c.align_enabled) {
        try {
          ab = align_full(ref, base, c.align);
          aa = align_full(ref, anom, c.align);
        } catch (const Error& e) {
          throw StageError("align", e.what());
        }
        base_aligned = ab.transform.apply(base);
        anom_aligned = aa.transform.apply(anom);
      }
      const AnomalyReport r = detect_anomaly(ref, base_aligned, anom_aligned, c.anomaly);
      nlohmann::json j = {{"tool_version", kToolVersion},
                          {"config", config_to_json(c)},
                          {"anomaly", anomaly_to_json(r)},
                          {"baseline_alignment", alignment_to_json(ab, c.align_enabled)},
                          {"anomalous_alignment", alignment_to_json(aa, c.align_enabled)}};
      write_text_file(d_out, dump_report(j));
      if (!d_points.empty()) save_anomaly_points(anom_aligned, deviation_field(ref, anom_aligned), r.regions, d_points);
      std::printf("hd_b %.6g  hd_a %.6g  delta_hd %.6g  threshold %.6g  detected %s  regions %zu\n", r.hd_baseline,
                  r.hd_anomalous, r.delta_hd, r.threshold, r.detected ? "yes" : "no", r.regions.size());
    } else if (*synth) {
      SceneSpec scene;
      scene.surface_sample_density = s_density;
      scene.seed = s_seed;
      const PointCloud ref = generate_reference(scene);
      DegradeSpec d;
      d.noise_sigma = s_noise;
      d.dropout_fraction = s_dropout;
      d.outlier_fraction = s_outliers;
      d.outlier_scale = s_outlier_scale;
      d.seed = s_seed + 1;
      PointCloud baseline = degrade(ref, d);
      ProtrusionSpec p;
      p.protrusion = s_protrusion;
      const AnomalyBox box = protrusion_box(scene, p);
      d.seed = s_seed + 2;
      PointCloud anomalous = degrade(inject_anomaly(ref, box.center, box.extents, s_seed), d);
      nlohmann::json truth = {{"box_center", {box.center.x(), box.center.y(), box.center.z()}},
                              {"box_extents", {box.extents.x(), box.extents.y(), box.extents.z()}}};
      if (s_perturb) {
        const Sim3Transform t = random_similarity(s_seed + 3);
        baseline = t.apply(baseline);
        anomalous = t.apply(anomalous);
        AlignmentResult applied;
        applied.transform = t;
        truth["perturbation"] = alignment_to_json(applied, true);
      }
      fs::create_directories(s_out);
      save_pointcloud(ref, fs::path(s_out) / "reference.ply");
      save_pointcloud(baseline, fs::path(s_out) / "baseline.ply");
      save_pointcloud(anomalous, fs::path(s_out) / "anomalous.ply");
      write_text_file(fs::path(s_out) / "truth.json", dump_report(truth));
      std::printf("reference %zu points, baseline %zu, anomalous %zu\n", ref.size(), baseline.size(),
                  anomalous.size());
    } else if (*bench) {
      const PipelineConfig c = bench_common.resolve({});
      const BenchResult result = run_synth_bench(c);
      write_bench(result, b_out);
      std::cout << bench_csv(result.rows);
    } else if (*sweep) {
      GrayImage a = load_image(r_a), b = load_image(r_b);
      if (r_preprocess) {
        a = preprocess(a, PreprocessConfig{});
        b = preprocess(b, PreprocessConfig{});
      }
      const FeatureSet fa = detect_features(a, r_max_features), fb = detect_features(b, r_max_features);
      const auto rows = ransac_sweep(fa, fb, r_budgets, r_repeats, r_inlier_px, r_seed);
      write_sweep_csv(rows, r_out);
      std::printf("features %zu / %zu\nbudget  median_inliers  median_seconds\n", fa.size(), fb.size());
      for (int budget : r_budgets) {
        std::vector<double> inl, sec;
        for (const auto& row : rows) {
          if (row.budget != budget) continue;
          inl.push_back(static_cast<double>(row.inlier_count));
          sec.push_back(row.elapsed_seconds);
        }
        std::printf("%6d  %14g  %14.6g\n", budget, median(inl), median(sec));
      }
    } else if (*render) {
      PipelineConfig check;
      check.render = v_settings;
      check.validate();
      const PointCloud cloud = load_pointcloud(v_cloud);
      const PointCloud rig_cloud = v_rig_from.empty() ? cloud : load_pointcloud(v_rig_from);
      const auto rig = make_camera_rig(rig_cloud, v_settings.n_views, v_settings.radius_factor, v_settings.intrinsics());
      SplatConfig splat;
      splat.point_radius_px = v_settings.point_radius_px;
      fs::create_directories(v_out);
      for (std::size_t i = 0; i < rig.views.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.png", i);
        save_image(render_view(cloud, rig.views[i], splat), fs::path(v_out) / name);
      }
      std::printf("wrote %zu views to %s\n", rig.views.size(), v_out.c_str());
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const StageError& e) {
    std::cerr << "error in stage '" << e.stage() << "': " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
