#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "reconeval/cli/config.hpp"
#include "reconeval/cli/manifest.hpp"
#include "reconeval/cli/pipeline.hpp"
#include "reconeval/core/io.hpp"
#include "reconeval/error.hpp"
#include "reconeval/synth.hpp"
#include "schema_check.hpp"
#include "support.hpp"

namespace reconeval {
namespace {

using Json = nlohmann::json;

const testing::SchemaChecker& schema() {
  static const testing::SchemaChecker checker = [] {
    std::ifstream in(RECONEVAL_SCHEMA_PATH);
    return testing::SchemaChecker(Json::parse(in));
  }();
  return checker;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small, fast settings for end-to-end runs.
PipelineConfig quick_config() {
  PipelineConfig c;
  c.render.n_views = 6;
  c.render.width = c.render.height = 96;
  c.render.focal_px = 96;
  c.bench.surface_density = 4000.0;
  c.metrics.wasserstein.sinkhorn_max_points = 256;
  c.timing = false;
  return c;
}

PointCloud small_reference() {
  SceneSpec s;
  s.surface_sample_density = 4000.0;
  return generate_reference(s);
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

TEST(Config, EchoListsEveryKeyWithDefaults) {
  const Json j = config_to_json(PipelineConfig{});
  EXPECT_EQ(j["align"]["voxel_fraction"], 0.02);
  EXPECT_EQ(j["render"]["n_views"], 32);
  EXPECT_TRUE(j["anomaly"]["threshold"].is_null());
  EXPECT_EQ(j["anomaly"]["min_threshold"], 0.01);
  EXPECT_EQ(j["bench"]["noise_levels"], Json::array({0.001, 0.002, 0.003}));
  EXPECT_EQ(j["report"]["timing"], true);
  EXPECT_EQ(j["seed"], 42);
  std::size_t leaves = 0;
  for (const auto& [section, body] : j.items()) leaves += body.is_object() ? body.size() : 1;
  EXPECT_EQ(leaves, config_keys().size());
}

TEST(Config, SetValuesByKey) {
  PipelineConfig c;
  set_config_value(c, "align.voxel_fraction", {"0.03"});
  set_config_value(c, "align.icp_estimate_scale", {"false"});
  set_config_value(c, "render.n_views", {"12"});
  set_config_value(c, "bench.noise_levels", {"0.004", "0.005"});
  set_config_value(c, "anomaly.threshold", {"0.02"});
  apply_assignment(c, "perceptual.backend=external:/bin/true");
  apply_assignment(c, "bench.dropout_fraction=0.1");
  EXPECT_EQ(c.align.voxel_fraction, 0.03);
  EXPECT_FALSE(c.align.icp_estimate_scale);
  EXPECT_EQ(c.render.n_views, 12);
  EXPECT_EQ(c.bench.noise_levels, (std::vector<double>{0.004, 0.005}));
  EXPECT_EQ(c.anomaly.threshold, 0.02);
  EXPECT_EQ(c.perceptual_backend, "external:/bin/true");
  EXPECT_EQ(c.bench.dropout_fraction, 0.1);
  apply_assignment(c, "bench.noise_levels=0.1,0.2,0.3");
  EXPECT_EQ(c.bench.noise_levels.size(), 3u);
  apply_assignment(c, "anomaly.threshold=auto");
  EXPECT_FALSE(c.anomaly.threshold);
}

TEST(Config, BadKeysAndValuesNameTheKey) {
  PipelineConfig c;
  EXPECT_NE(error_of([&] { set_config_value(c, "align.nope", {"1"}); }).find("align.nope"), std::string::npos);
  EXPECT_NE(error_of([&] { set_config_value(c, "render.n_views", {"many"}); }).find("render.n_views"),
            std::string::npos);
  EXPECT_THROW(set_config_value(c, "render.n_views", {"1.5"}), InvalidArgument);
  EXPECT_THROW(set_config_value(c, "align.enabled", {"maybe"}), InvalidArgument);
  EXPECT_THROW(set_config_value(c, "seed", {"-3"}), InvalidArgument);
  EXPECT_THROW(apply_assignment(c, "no_equals_sign"), InvalidArgument);
}

TEST(Config, ValidateNamesOffendingKey) {
  const std::vector<std::pair<std::string, std::string>> bad = {
      {"render.n_views", "0"},          {"render.point_radius_px", "40"}, {"align.voxel_fraction", "0"},
      {"align.ransac_confidence", "1"}, {"metrics.sinkhorn_tolerance", "0"}, {"bench.dropout_fraction", "1"},
      {"capture.yaw_bin", "0"},         {"bench.noise_levels", "-0.1"},
  };
  for (const auto& [key, value] : bad) {
    PipelineConfig c;
    set_config_value(c, key, {value});
    EXPECT_NE(error_of([&] { c.validate(); }).find(key), std::string::npos) << key;
  }
  PipelineConfig c;
  c.anomaly.min_cluster_points = 0;
  EXPECT_NE(error_of([&] { c.validate(); }).find("min_cluster_points"), std::string::npos);
  EXPECT_NO_THROW(PipelineConfig{}.validate());
}

TEST(Config, TomlFileThenOverrides) {
  testing::TempDir dir;
  std::ofstream(dir / "c.toml") << "# comment\nseed = 9\n\n[render]\nn_views = 8\nwidth = 200\n\n"
                                   "[bench]\nnoise_levels = [0.002, 0.004]\ninclude_anomaly = false\n\n"
                                   "[paths]\nreference = \"ref.ply\"\n\n[anomaly]\nthreshold = 0.03\n";
  PipelineConfig c;
  apply_config_file(c, dir / "c.toml");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.render.n_views, 8);
  EXPECT_EQ(c.render.width, 200);
  EXPECT_EQ(c.bench.noise_levels, (std::vector<double>{0.002, 0.004}));
  EXPECT_FALSE(c.bench.include_anomaly);
  EXPECT_EQ(c.paths.reference, "ref.ply");
  EXPECT_EQ(c.anomaly.threshold, 0.03);
  apply_assignment(c, "render.n_views=4");
  EXPECT_EQ(c.render.n_views, 4);

  std::ofstream(dir / "bad.toml") << "[render]\nviews = 8\n";
  EXPECT_NE(error_of([&] { apply_config_file(c, dir / "bad.toml"); }).find("render.views"), std::string::npos);
  EXPECT_THROW(apply_config_file(c, dir / "missing.toml"), IoFailure);
}

TEST(Manifest, LoadsWithAndWithoutPositions) {
  testing::TempDir dir;
  std::ofstream(dir / "m.csv") << "path,timestamp,yaw,x,y,z\n"
                                  "a.png,0.0,0.5,1,2,3\n"
                                  "\n# skipped\n"
                                  "b.png, 1.5 , -3.0\n";
  const auto m = load_manifest(dir / "m.csv");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].path, "a.png");
  ASSERT_TRUE(m[0].position);
  EXPECT_EQ(*m[0].position, Point3(1, 2, 3));
  EXPECT_EQ(m[1].timestamp, 1.5);
  EXPECT_EQ(m[1].yaw, -3.0);
  EXPECT_FALSE(m[1].position);

  std::ofstream(dir / "yaw.csv") << "a.png,0,3.2\n";
  EXPECT_THROW(load_manifest(dir / "yaw.csv"), MalformedFile);
  std::ofstream(dir / "cols.csv") << "a.png,0\n";
  EXPECT_THROW(load_manifest(dir / "cols.csv"), MalformedFile);
  std::ofstream(dir / "num.csv") << "a.png,soon,0\n";
  EXPECT_THROW(load_manifest(dir / "num.csv"), MalformedFile);
  EXPECT_THROW(load_manifest(dir / "none.csv"), IoFailure);
}

CaptureManifest manifest_of(const std::vector<double>& times, const std::vector<double>& yaws) {
  CaptureManifest m;
  for (std::size_t i = 0; i < times.size(); ++i) m.push_back({std::to_string(i) + ".png", times[i], yaws[i], {}});
  return m;
}

using Groups = std::vector<std::vector<std::size_t>>;

TEST(GroupImages, Examples) {
  EXPECT_EQ(group_images(manifest_of({0}, {0}), 0.5, 10), (Groups{{0}}));
  EXPECT_EQ(group_images(manifest_of({0, 1, 2, 3}, {0, 0.1, 0.12, 3.0}), 0.5, 10), (Groups{{0, 1, 2}, {3}}));
  std::vector<double> t(60), y(60, 1.0);
  for (int i = 0; i < 60; ++i) t[i] = i;
  EXPECT_EQ(group_images(manifest_of(t, y), 0.5, 10).size(), 1u);
  EXPECT_EQ(group_images(manifest_of({0, 1, 20, 21}, {0, 0, 0, 0}), 0.5, 10), (Groups{{0, 1}, {2, 3}}));
  // Sorted by time first; the yaw jump across +-pi is small.
  EXPECT_EQ(group_images(manifest_of({2, 0, 1}, {-3.1, 3.0, 3.1}), 0.5, 10), (Groups{{1, 2, 0}}));
}

TEST(GroupImages, PartitionProperty) {
  std::mt19937_64 rng(90);
  std::uniform_real_distribution<double> time(0, 100), yaw(-std::numbers::pi, std::numbers::pi);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> t(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = std::floor(time(rng));
      y[i] = yaw(rng);
    }
    const auto m = manifest_of(t, y);
    const auto groups = group_images(m, 0.3 + 0.1 * (trial % 5), 5.0);
    std::vector<std::size_t> flat;
    for (const auto& g : groups) {
      ASSERT_FALSE(g.empty());
      flat.insert(flat.end(), g.begin(), g.end());
    }
    ASSERT_EQ(flat.size(), n);
    EXPECT_EQ(std::set<std::size_t>(flat.begin(), flat.end()).size(), n);
    for (std::size_t k = 1; k < flat.size(); ++k) {
      EXPECT_LE(t[flat[k - 1]], t[flat[k]]);
      if (t[flat[k - 1]] == t[flat[k]]) {
        EXPECT_LT(flat[k - 1], flat[k]);
      }
    }
  }
}

TEST(Capture, CountsUnreadableImages) {
  testing::TempDir dir;
  save_image(GrayImage(8, 8, 10), dir / "a.png");
  save_image(GrayImage(8, 8, 20), dir / "b.pgm");
  std::ofstream(dir / "broken.png") << "not an image";
  std::ofstream(dir / "m.csv") << "a.png,0,0\nb.pgm,1,0\nbroken.png,2,0\nmissing.png,3,0\nc.png,100,0\n";
  save_image(GrayImage(8, 8, 30), dir / "c.png");
  const auto s = summarize_capture(load_manifest(dir / "m.csv"), dir.path(), 0.5, 10);
  EXPECT_EQ(s.n_taken, 5u);
  EXPECT_EQ(s.n_used, 3u);
  EXPECT_EQ(s.n_groups, 2u);
  ASSERT_EQ(s.skipped.size(), 2u);
  EXPECT_EQ(s.skipped[0].rfind("broken.png", 0), 0u);
}

TEST(Report, NumberFormatting) {
  EXPECT_EQ(report_number(0.0123456789).dump(), "0.0123457");
  EXPECT_EQ(report_number(123456789.0).dump(), "123457000.0");
  EXPECT_EQ(report_number(-0.0).dump(), "0.0");
  EXPECT_EQ(report_number(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(report_number(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(report_number(std::nan("")), "nan");
  const Json j = {{"zeta", 1}, {"alpha", {{"y", 2}, {"b", 3}}}};
  EXPECT_EQ(dump_report(j), "{\n  \"alpha\": {\n    \"b\": 3,\n    \"y\": 2\n  },\n  \"zeta\": 1\n}\n");
}

TEST(Evaluate, SelfEvaluationIsPerfect) {
  const PointCloud ref = small_reference();
  const EvaluationReport r = evaluate_clouds(ref, ref, nullptr, quick_config());
  EXPECT_EQ(r.pc_metrics.hausdorff, 0.0);
  EXPECT_EQ(r.pc_metrics.chamfer_mean, 0.0);
  EXPECT_EQ(r.pc_metrics.wasserstein, 0.0);
  EXPECT_EQ(r.image_metrics.ssim_mean, 1.0);
  EXPECT_TRUE(std::isinf(r.image_metrics.psnr_db));
  const Json j = report_to_json(r);
  EXPECT_EQ(j["image_metrics"]["psnr_db"], "inf");
  EXPECT_TRUE(j["evaluation_latency_seconds"].is_null());
  EXPECT_EQ(schema().check(j), std::vector<std::string>{});
}

TEST(Evaluate, DegradedFromFilesWithCapture) {
  testing::TempDir dir;
  const PointCloud ref = small_reference();
  DegradeSpec d;
  d.noise_sigma = 0.003;
  save_pointcloud(ref, dir / "ref.ply");
  save_pointcloud(degrade(ref, d), dir / "rec.ply");
  save_image(GrayImage(16, 16, 1), dir / "img0.png");
  save_image(GrayImage(16, 16, 2), dir / "img1.png");
  std::ofstream(dir / "manifest.csv") << "path,timestamp,yaw\nimg0.png,0,0\nimg1.png,1,0.1\nlost.png,2,0.2\n";

  PipelineConfig c = quick_config();
  c.timing = true;
  c.paths.reference = dir / "ref.ply";
  c.paths.reconstructed = dir / "rec.ply";
  c.paths.manifest = dir / "manifest.csv";
  const EvaluationReport r = run_evaluate(c);
  EXPECT_GT(r.pc_metrics.hausdorff, 0.0);
  EXPECT_GE(r.pc_metrics.hausdorff, r.pc_metrics.chamfer_mean);
  EXPECT_DOUBLE_EQ(r.pc_metrics.chamfer_mean,
                   testing::brute_chamfer_mean(ref, r.alignment.transform.apply(load_pointcloud(dir / "rec.ply"))));
  EXPECT_LT(r.image_metrics.ssim_mean, 1.0);
  EXPECT_EQ(r.image_metrics.n_views, 6u);
  ASSERT_TRUE(r.evaluation_latency_seconds);
  EXPECT_GT(*r.evaluation_latency_seconds, 0.0);
  EXPECT_EQ(r.n_images_taken, 3u);
  EXPECT_EQ(r.n_images_used, 2u);
  const Json j = report_to_json(r);
  EXPECT_EQ(schema().check(j), std::vector<std::string>{});
  EXPECT_EQ(j["config"]["paths"]["reconstructed"], (dir / "rec.ply").string());
}

TEST(Evaluate, ValidationAndStageErrors) {
  testing::TempDir dir;
  save_pointcloud(small_reference(), dir / "ref.ply");
  PipelineConfig c = quick_config();
  c.paths.reference = dir / "ref.ply";
  EXPECT_NE(error_of([&] { run_evaluate(c); }).find("paths.reconstructed"), std::string::npos);
  c.paths.reconstructed = dir / "nope.ply";
  EXPECT_THROW(run_evaluate(c), InvalidArgument);

  std::ofstream(dir / "bad.ply") << "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n";
  c.paths.reconstructed = dir / "bad.ply";
  try {
    run_evaluate(c);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "load reconstructed");
  }

  c.paths.reconstructed = dir / "ref.ply";
  c.perceptual_backend = "lpips";
  try {
    run_evaluate(c);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "perceptual backend");
  }
}

TEST(Evaluate, AnomalySectionWithBaseline) {
  const PointCloud ref = small_reference();
  SceneSpec s;
  s.surface_sample_density = 4000.0;
  const AnomalyBox box = protrusion_box(s, ProtrusionSpec{});
  DegradeSpec d;
  d.noise_sigma = 0.001;
  const PointCloud base = degrade(ref, d);
  d.seed = 43;
  const PointCloud anomalous = degrade(inject_anomaly(ref, box.center, box.extents), d);
  const EvaluationReport r = evaluate_clouds(ref, anomalous, &base, quick_config());
  ASSERT_TRUE(r.anomaly);
  EXPECT_TRUE(r.anomaly->report.detected);
  EXPECT_EQ(r.anomaly->report.delta_hd, r.anomaly->report.hd_anomalous - r.anomaly->report.hd_baseline);
  const Json j = report_to_json(r);
  EXPECT_EQ(schema().check(j), std::vector<std::string>{});
  EXPECT_EQ(j["anomaly"]["detected"], true);
}

TEST(Bench, RowsCsvAndDeterminism) {
  PipelineConfig c = quick_config();
  c.bench.noise_levels = {0.001, 0.003};
  const BenchResult a = run_synth_bench(c);
  ASSERT_EQ(a.rows.size(), 4u);
  ASSERT_EQ(a.reports.size(), 4u);
  EXPECT_EQ(a.rows[0].label, "sigma_0.001");
  EXPECT_EQ(a.rows[1].label, "sigma_0.001_anomaly");
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const bool anomalous = i % 2 == 1;
    EXPECT_EQ(a.rows[i].delta_hd.has_value(), anomalous);
    if (anomalous) {
      EXPECT_GT(*a.rows[i].delta_hd, 0.0);
    }
    EXPECT_FALSE(a.rows[i].latency_s);
    EXPECT_EQ(schema().check(a.reports[i]), std::vector<std::string>{}) << a.rows[i].label;
  }
  const std::string csv = bench_csv(a.rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,psnr_db,ssim_mean,ssim_std,lpips,hd,wd,latency_s,hd_b,hd_a,delta_hd");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

  testing::TempDir d1, d2;
  write_bench(a, d1.path());
  write_bench(run_synth_bench(c), d2.path());
  EXPECT_EQ(read_file(d1 / "bench.csv"), read_file(d2 / "bench.csv"));
  for (const auto& row : a.rows) {
    const auto name = "reports/" + row.label + ".json";
    EXPECT_EQ(read_file(d1 / name), read_file(d2 / name)) << name;
  }

  c.timing = true;
  c.bench.noise_levels = {0.002};
  c.bench.include_anomaly = false;
  const BenchResult timed = run_synth_bench(c);
  ASSERT_EQ(timed.rows.size(), 1u);
  ASSERT_TRUE(timed.rows[0].latency_s);
  EXPECT_GT(*timed.rows[0].latency_s, 0.0);
  EXPECT_TRUE(timed.reports[0]["evaluation_latency_seconds"].is_number());
}

TEST(Schema, CheckerRejectsBrokenReports) {
  const PointCloud ref = small_reference();
  const Json good = report_to_json(evaluate_clouds(ref, ref, nullptr, quick_config()));
  ASSERT_TRUE(schema().check(good).empty());
  Json missing = good;
  missing["pc_metrics"].erase("hausdorff");
  EXPECT_FALSE(schema().check(missing).empty());
  Json extra = good;
  extra["surprise"] = 1;
  EXPECT_FALSE(schema().check(extra).empty());
  Json negative = good;
  negative["evaluation_latency_seconds"] = 0.0;
  EXPECT_FALSE(schema().check(negative).empty());
  Json wrong = good;
  wrong["pc_metrics"]["wasserstein_method"] = "guess";
  EXPECT_FALSE(schema().check(wrong).empty());
}

}  // namespace
}  // namespace reconeval
