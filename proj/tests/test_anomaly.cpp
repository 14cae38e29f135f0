#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "reconeval/anomaly.hpp"
#include "reconeval/core/io.hpp"
#include "reconeval/error.hpp"
#include "reconeval/pcmetrics.hpp"
#include "reconeval/synth.hpp"
#include "support.hpp"

namespace reconeval {
namespace {

// Coarser than the default scene so brute-force oracles stay cheap.
SceneSpec small_scene() {
  SceneSpec s;
  s.surface_sample_density = 8000.0;
  return s;
}

const PointCloud& small_reference() {
  static const PointCloud ref = generate_reference(small_scene());
  return ref;
}

PointCloud noisy(const PointCloud& cloud, double sigma, std::uint64_t seed) {
  DegradeSpec d;
  d.noise_sigma = sigma;
  d.seed = seed;
  return degrade(cloud, d);
}

PointCloud with_protrusion(const PointCloud& cloud, double protrusion, double x_center = 0.1) {
  ProtrusionSpec p;
  p.protrusion = protrusion;
  p.x_center = x_center;
  const AnomalyBox box = protrusion_box(small_scene(), p);
  return inject_anomaly(cloud, box.center, box.extents);
}

// Connected components of the "within radius" graph by breadth-first search
// over all pairs, as sets of cloud indices.
std::set<std::set<std::size_t>> brute_clusters(const PointCloud& cloud, const std::vector<double>& field,
                                               double cutoff, double radius, std::size_t min_points) {
  std::vector<std::size_t> sel;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field[i] > cutoff) sel.push_back(i);
  }
  std::vector<bool> seen(sel.size(), false);
  std::set<std::set<std::size_t>> out;
  for (std::size_t s = 0; s < sel.size(); ++s) {
    if (seen[s]) continue;
    std::set<std::size_t> comp;
    std::vector<std::size_t> queue{s};
    seen[s] = true;
    while (!queue.empty()) {
      const std::size_t cur = queue.back();
      queue.pop_back();
      comp.insert(sel[cur]);
      for (std::size_t t = 0; t < sel.size(); ++t) {
        if (!seen[t] && (cloud.points[sel[cur]] - cloud.points[sel[t]]).norm() <= radius) {
          seen[t] = true;
          queue.push_back(t);
        }
      }
    }
    if (comp.size() >= min_points) out.insert(comp);
  }
  return out;
}

TEST(DetectAnomaly, IdenticalReconstructionsNeverDetect) {
  const PointCloud recon = noisy(small_reference(), 0.002, 1);
  for (double t : {1e-9, 0.001, 0.01}) {
    const AnomalyReport r = detect_anomaly(small_reference(), recon, recon, t);
    EXPECT_EQ(r.delta_hd, 0.0);
    EXPECT_FALSE(r.detected);
    EXPECT_EQ(r.threshold, t);
    EXPECT_EQ(r.threshold_rule, "fixed");
  }
}

TEST(DetectAnomaly, DeltaIsExactDifference) {
  const PointCloud base = noisy(small_reference(), 0.002, 2);
  const PointCloud anomalous = noisy(with_protrusion(small_reference(), 0.03), 0.002, 3);
  const AnomalyReport r = detect_anomaly(small_reference(), base, anomalous);
  EXPECT_EQ(r.delta_hd, r.hd_anomalous - r.hd_baseline);
  EXPECT_EQ(r.detected, r.delta_hd > r.threshold);
  EXPECT_EQ(r.threshold, std::max(0.01, 2.0 * r.hd_baseline));
  EXPECT_EQ(r.threshold_rule, "default");
  EXPECT_DOUBLE_EQ(r.chamfer_baseline, testing::brute_chamfer_mean(small_reference(), base));
}

TEST(DetectAnomaly, ProtrudingBoxMatchesBruteForce) {
  const PointCloud base = noisy(small_reference(), 0.001, 4);
  const PointCloud anomalous = noisy(with_protrusion(small_reference(), 0.04), 0.001, 5);
  const AnomalyReport r = detect_anomaly(small_reference(), base, anomalous, 0.01);
  EXPECT_EQ(r.hd_baseline, testing::brute_hausdorff(small_reference(), base));
  EXPECT_EQ(r.hd_anomalous, testing::brute_hausdorff(small_reference(), anomalous));
  EXPECT_GE(r.delta_hd, 0.03);
  EXPECT_LE(r.delta_hd, 0.05);
  EXPECT_TRUE(r.detected);
  ASSERT_FALSE(r.regions.empty());
}

TEST(DetectAnomaly, DeltaGrowsWithProtrusion) {
  const PointCloud base = noisy(small_reference(), 0.001, 6);
  double last = -1.0;
  for (double depth : {0.01, 0.02, 0.04}) {
    const AnomalyReport r = detect_anomaly(small_reference(), base, noisy(with_protrusion(small_reference(), depth), 0.001, 7));
    EXPECT_GE(r.delta_hd, last) << depth;
    last = r.delta_hd;
  }
}

TEST(DetectAnomaly, CleanRedrawsAreNotFlagged) {
  // Baseline and "anomalous" come from the same noise model; only the seed
  // differs.
  std::vector<double> hd_b, delta;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const AnomalyReport r = detect_anomaly(small_reference(), noisy(small_reference(), 0.002, 100 + seed),
                                           noisy(small_reference(), 0.002, 200 + seed));
    EXPECT_FALSE(r.detected) << seed;
    hd_b.push_back(r.hd_baseline);
    delta.push_back(std::abs(r.delta_hd));
  }
  double mean = 0.0, mean_abs_delta = 0.0;
  for (std::size_t i = 0; i < hd_b.size(); ++i) {
    mean += hd_b[i] / 20.0;
    mean_abs_delta += delta[i] / 20.0;
  }
  double var = 0.0;
  for (double h : hd_b) var += (h - mean) * (h - mean) / 20.0;
  EXPECT_LT(mean_abs_delta, 3.0 * std::sqrt(var));
}

TEST(DetectAnomaly, RejectsBadInput) {
  AnomalyConfig bad;
  bad.cluster_radius = 0.0;
  EXPECT_THROW(detect_anomaly(small_reference(), small_reference(), small_reference(), bad), InvalidArgument);
  EXPECT_THROW(detect_anomaly(small_reference(), PointCloud{}, small_reference()), EmptyCloud);
  EXPECT_THROW(detect_anomaly(small_reference(), small_reference(), small_reference(), -1.0), InvalidArgument);
}

TEST(DeviationField, IdenticalIsZero) {
  const auto f = deviation_field(small_reference(), small_reference());
  ASSERT_EQ(f.size(), small_reference().size());
  for (double d : f) EXPECT_EQ(d, 0.0);
}

TEST(DeviationField, SingleDisplacedPoint) {
  std::mt19937_64 rng(80);
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud ref = testing::random_cloud(rng, 60);
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ref.size(); ++i)
      for (std::size_t j = i + 1; j < ref.size(); ++j) min_gap = std::min(min_gap, (ref.points[i] - ref.points[j]).norm());
    // Moving by less than half the closest gap keeps the original as the
    // nearest reference point.
    const double d = 0.4 * min_gap;
    const std::size_t k = static_cast<std::size_t>(trial * 5);
    PointCloud moved = ref;
    moved.points[k] += d * testing::random_rotation(rng).col(0);
    const auto f = deviation_field(ref, moved);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i == k) {
        EXPECT_NEAR(f[i], d, 1e-15);
      } else {
        EXPECT_EQ(f[i], 0.0);
      }
    }
  }
}

TEST(DeviationField, MaxIsDirectedHausdorff) {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud a = testing::random_cloud(rng, 150), b = testing::random_cloud(rng, 90);
    const auto f = deviation_field(a, b);
    EXPECT_EQ(*std::max_element(f.begin(), f.end()), directed_hausdorff(b, a).distance);
  }
}

TEST(LocalizeAnomaly, ZeroFieldIsEmpty) {
  const std::vector<double> zero(small_reference().size(), 0.0);
  EXPECT_TRUE(localize_anomaly(small_reference(), zero, 0.0, 0.05).empty());
}

TEST(LocalizeAnomaly, MatchesBruteForceSingleLinkage) {
  std::mt19937_64 rng(82);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 15; ++trial) {
    const PointCloud cloud = testing::random_cloud(rng, 300);
    std::vector<double> field(cloud.size());
    for (auto& f : field) f = u(rng);
    const double cutoff = 0.3 + 0.1 * (trial % 4), radius = 0.05 + 0.02 * (trial % 5);
    const std::size_t min_points = 1 + trial % 12;
    const auto regions = localize_anomaly(cloud, field, cutoff, radius, min_points);
    std::set<std::set<std::size_t>> got;
    for (const auto& r : regions) got.insert(std::set<std::size_t>(r.indices.begin(), r.indices.end()));
    EXPECT_EQ(got, brute_clusters(cloud, field, cutoff, radius, min_points)) << trial;

    std::set<std::size_t> all;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto& r = regions[i];
      EXPECT_EQ(r.point_count, r.indices.size());
      EXPECT_TRUE(std::is_sorted(r.indices.begin(), r.indices.end()));
      Point3 c = Point3::Zero();
      bool attained = false;
      for (std::size_t idx : r.indices) {
        EXPECT_TRUE(all.insert(idx).second) << "index in two regions";
        c += cloud.points[idx];
        attained = attained || field[idx] == r.max_deviation;
      }
      EXPECT_TRUE(attained);
      EXPECT_LT((c / static_cast<double>(r.indices.size()) - r.centroid).norm(), 1e-12);
      if (i > 0) {
        EXPECT_GE(regions[i - 1].max_deviation, r.max_deviation);
      }
    }
  }
}

TEST(LocalizeAnomaly, SingleBoxGivesOneRegionInsideBox) {
  ProtrusionSpec p;
  const AnomalyBox box = protrusion_box(small_scene(), p);
  const PointCloud anomalous = inject_anomaly(small_reference(), box.center, box.extents);
  const AnomalyReport r = detect_anomaly(small_reference(), small_reference(), anomalous, 0.01);
  ASSERT_EQ(r.regions.size(), 1u);
  const Point3 off = (r.regions[0].centroid - box.center).cwiseAbs();
  const Point3 limit = 0.5 * box.extents + Point3::Constant(r.cluster_radius);
  EXPECT_TRUE((off.array() <= limit.array()).all());
  // The clean face under the box is still in the reference, so the top of
  // the box sits 0.04 above it, give or take the lateral sample offset.
  EXPECT_GE(r.regions[0].max_deviation, 0.04 - 1e-9);
  EXPECT_LE(r.regions[0].max_deviation, 0.04 + mean_point_spacing(small_reference()));
}

TEST(LocalizeAnomaly, OppositeEndBoxesGiveTwoRegions) {
  // 0.04 m boxes on the -x and +x end faces.
  const double end = 0.5 * small_scene().object_extents.x();
  PointCloud anomalous = small_reference();
  for (double sign : {-1.0, 1.0}) {
    const Point3 center(sign * (end + 0.02 - 0.0025), 0.0, 0.0);
    anomalous = inject_anomaly(anomalous, center, Point3(0.045, 0.1, 0.1));
  }
  const AnomalyReport r = detect_anomaly(small_reference(), small_reference(), anomalous, 0.01);
  ASSERT_EQ(r.regions.size(), 2u);
  EXPECT_LT(r.regions[0].centroid.x() * r.regions[1].centroid.x(), 0.0);
  EXPECT_GT(std::abs(r.regions[0].centroid.x()), end);
  EXPECT_GT(std::abs(r.regions[1].centroid.x()), end);
}

TEST(LocalizeAnomaly, SmallClustersAreDropped) {
  PointCloud cloud;
  std::vector<double> field;
  for (int i = 0; i < 9; ++i) {
    cloud.points.emplace_back(0.001 * i, 0, 0);
    field.push_back(1.0);
  }
  EXPECT_TRUE(localize_anomaly(cloud, field, 0.5, 0.01).empty());
  EXPECT_EQ(localize_anomaly(cloud, field, 0.5, 0.01, 9).size(), 1u);
  EXPECT_THROW(localize_anomaly(cloud, std::vector<double>(3, 0.0), 0.5, 0.01), InvalidArgument);
}

TEST(SaveAnomalyPoints, IntensityIsNormalizedDeviation) {
  const AnomalyBox box = protrusion_box(small_scene(), ProtrusionSpec{});
  const PointCloud anomalous = inject_anomaly(small_reference(), box.center, box.extents);
  const auto field = deviation_field(small_reference(), anomalous);
  const auto regions = localize_anomaly(anomalous, field, 0.005, 0.05);
  testing::TempDir dir;
  save_anomaly_points(anomalous, field, regions, dir / "a.ply");
  const PointCloud back = load_pointcloud(dir / "a.ply");
  ASSERT_TRUE(back.intensity);
  ASSERT_EQ(back.size(), regions.at(0).point_count);
  EXPECT_NEAR(*std::max_element(back.intensity->begin(), back.intensity->end()), 1.0, 1e-6);
  for (double v : *back.intensity) EXPECT_GT(v, 0.0);
}

}  // namespace
}  // namespace reconeval
