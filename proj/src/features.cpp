#include "reconeval/features.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "reconeval/error.hpp"

namespace reconeval {

namespace {

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

// Box blur of odd size with replicated borders, in double precision.
std::vector<double> box_blur(const std::vector<double>& img, int w, int h, int size) {
  const int r = size / 2;
  std::vector<double> out(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) s += img[clamp_index(y + dy, h) * w + clamp_index(x + dx, w)];
      }
      out[y * w + x] = s / (size * size);
    }
  }
  return out;
}

struct PatternEntry {
  std::int8_t x1, y1, x2, y2;
};

constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// 256 point-pair tests inside a 31x31 patch, generated at compile time from
// seed 7 so the table is identical everywhere.
constexpr std::array<PatternEntry, 256> make_pattern() {
  std::array<PatternEntry, 256> p{};
  std::uint64_t state = 7;
  for (auto& e : p) {
    const auto coord = [&state] { return static_cast<std::int8_t>(static_cast<int>(splitmix64(state) % 31) - 15); };
    e.x1 = coord();
    e.y1 = coord();
    e.x2 = coord();
    e.y2 = coord();
    if (e.x1 == e.x2 && e.y1 == e.y2) e.x2 = static_cast<std::int8_t>(e.x2 == 15 ? 14 : e.x2 + 1);
  }
  return p;
}

constexpr std::array<PatternEntry, 256> kPattern = make_pattern();
constexpr int kPatchHalf = 15;
constexpr int kSmoothRadius = 2;

}  // namespace

void PreprocessConfig::validate() const {
  if (!(sharpen_amount >= 0.0) || !std::isfinite(sharpen_amount)) throw InvalidArgument("sharpen_amount must be >= 0");
  if (brightness_offset < -255 || brightness_offset > 255) throw InvalidArgument("brightness_offset must be in [-255, 255]");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
}

GrayImage preprocess(const GrayImage& image, const PreprocessConfig& config) {
  config.validate();
  const int w = image.width, h = image.height;
  std::vector<double> v(image.data.begin(), image.data.end());
  if (config.gamma != 1.0) {
    for (double& x : v) x = 255.0 * std::pow(x / 255.0, 1.0 / config.gamma);
  }
  for (double& x : v) x = std::clamp(x + config.brightness_offset, 0.0, 255.0);
  if (config.sharpen_amount > 0.0 && w > 0 && h > 0) {
    const std::vector<double> blur = box_blur(v, w, h, 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = std::clamp(v[i] + config.sharpen_amount * (v[i] - blur[i]), 0.0, 255.0);
    }
  }
  GrayImage out(w, h);
  for (std::size_t i = 0; i < v.size(); ++i) out.data[i] = static_cast<std::uint8_t>(std::lround(v[i]));
  return out;
}

std::vector<double> harris_response(const GrayImage& image, double k) {
  const int w = image.width, h = image.height;
  const auto px = [&](int x, int y) { return static_cast<double>(image.at(clamp_index(x, w), clamp_index(y, h))); };
  std::vector<double> ixx(image.pixel_count()), iyy(image.pixel_count()), ixy(image.pixel_count());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1) - px(x - 1, y - 1) -
                         2 * px(x - 1, y) - px(x - 1, y + 1)) / 8.0;
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1) - px(x - 1, y - 1) -
                         2 * px(x, y - 1) - px(x + 1, y - 1)) / 8.0;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  }
  std::vector<double> r(image.pixel_count());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double a = 0, b = 0, c = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t j = static_cast<std::size_t>(clamp_index(y + dy, h)) * w + clamp_index(x + dx, w);
          a += ixx[j];
          b += iyy[j];
          c += ixy[j];
        }
      }
      r[static_cast<std::size_t>(y) * w + x] = a * b - c * c - k * (a + b) * (a + b);
    }
  }
  return r;
}

FeatureSet detect_features(const GrayImage& image, const DetectorConfig& config) {
  FeatureSet out;
  const int w = image.width, h = image.height;
  if (w < 1 || h < 1) return out;
  const std::vector<double> r = harris_response(image, config.harris_k);
  const int margin = kPatchHalf + kSmoothRadius;
  const int nr = config.nms_radius;

  std::vector<Keypoint> candidates;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double v = r[i];
      if (!(v > config.min_response)) continue;
      bool is_max = true;
      // Strict maximum, except that equal values earlier in raster order win.
      for (int dy = -nr; dy <= nr && is_max; ++dy) {
        for (int dx = -nr; dx <= nr; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if ((dx == 0 && dy == 0) || xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const double o = r[static_cast<std::size_t>(yy) * w + xx];
          if (o > v || (o == v && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({static_cast<double>(x), static_cast<double>(y), v});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  if (candidates.size() > config.max_features) candidates.resize(config.max_features);

  std::vector<double> img(image.data.begin(), image.data.end());
  const std::vector<double> smooth = box_blur(img, w, h, 2 * kSmoothRadius + 1);
  for (const auto& kp : candidates) {
    const int x = static_cast<int>(kp.u), y = static_cast<int>(kp.v);
    BinaryDescriptor d{};
    for (int bit = 0; bit < 256; ++bit) {
      const auto& e = kPattern[bit];
      const double a = smooth[static_cast<std::size_t>(y + e.y1) * w + (x + e.x1)];
      const double b = smooth[static_cast<std::size_t>(y + e.y2) * w + (x + e.x2)];
      if (a < b) d[bit / 64] |= std::uint64_t{1} << (bit % 64);
    }
    out.keypoints.push_back(kp);
    out.descriptors.push_back(d);
  }
  return out;
}

FeatureSet detect_features(const GrayImage& image, std::size_t max_features) {
  DetectorConfig config;
  config.max_features = max_features;
  return detect_features(image, config);
}

int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

std::vector<FeatureMatch> match_descriptors(const FeatureSet& a, const FeatureSet& b, double ratio) {
  std::vector<FeatureMatch> out;
  if (a.size() == 0 || b.size() == 0) return out;
  std::vector<std::size_t> back(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) {
    int best = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const int d = hamming_distance(a.descriptors[i], b.descriptors[j]);
      if (d < best) {
        best = d;
        back[j] = i;
      }
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    int best = std::numeric_limits<int>::max(), second = std::numeric_limits<int>::max();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const int d = hamming_distance(a.descriptors[i], b.descriptors[j]);
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    if (back[best_j] != i) continue;
    if (second != std::numeric_limits<int>::max() && !(best < ratio * second)) continue;
    out.push_back({i, best_j, best});
  }
  return out;
}

namespace {

Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

bool project(const Eigen::Matrix3d& h, const Eigen::Vector2d& p, Eigen::Vector2d& out) {
  const Eigen::Vector3d q = h * Eigen::Vector3d(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) < 1e-12) return false;
  out = q.head<2>() / q.z();
  return out.allFinite();
}

}  // namespace

std::optional<Eigen::Matrix3d> fit_homography(const std::vector<Eigen::Vector2d>& from,
                                              const std::vector<Eigen::Vector2d>& to) {
  if (from.size() != to.size() || from.size() < 4) return std::nullopt;
  const Eigen::Matrix3d ta = normalizing_transform(from), tb = normalizing_transform(to);
  const Eigen::Index n = static_cast<Eigen::Index>(from.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ta * Eigen::Vector3d(from[i].x(), from[i].y(), 1.0);
    const Eigen::Vector3d q = tb * Eigen::Vector3d(to[i].x(), to[i].y(), 1.0);
    a.row(2 * i) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
    a.row(2 * i + 1) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  Eigen::Matrix3d h = tb.inverse() * hn * ta;
  if (!h.allFinite() || std::abs(h.determinant()) < 1e-12 * std::pow(h.norm(), 3)) return std::nullopt;
  if (std::abs(h(2, 2)) > 1e-12) h /= h(2, 2);
  return h;
}

double symmetric_transfer_error(const Eigen::Matrix3d& h, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  Eigen::Vector2d fa, bb;
  const Eigen::Matrix3d inv = h.inverse();
  if (!inv.allFinite() || !project(h, a, fa) || !project(inv, b, bb)) {
    return std::numeric_limits<double>::infinity();
  }
  return std::sqrt((fa - b).squaredNorm() + (bb - a).squaredNorm());
}

namespace {

std::vector<std::size_t> inliers_of(const Eigen::Matrix3d& h, const std::vector<Eigen::Vector2d>& pa,
                                    const std::vector<Eigen::Vector2d>& pb, double inlier_px) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (symmetric_transfer_error(h, pa[i], pb[i]) < inlier_px) out.push_back(i);
  }
  return out;
}

bool collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector2d u = b - a, v = c - a;
  return std::abs(u.x() * v.y() - u.y() * v.x()) < 1e-6;
}

}  // namespace

MatchResult match_and_verify(const FeatureSet& a, const FeatureSet& b, int max_ransac_iters, double inlier_px,
                             std::uint64_t seed) {
  if (max_ransac_iters < 0) throw InvalidArgument("max_ransac_iters must be >= 0");
  if (!(inlier_px > 0.0)) throw InvalidArgument("inlier_px must be positive");
  MatchResult result;
  result.matches = match_descriptors(a, b);
  const std::size_t m = result.matches.size();
  if (m < 4) throw DegenerateGeometry("only " + std::to_string(m) + " candidate matches; need 4");

  std::vector<Eigen::Vector2d> pa, pb;
  for (const auto& mt : result.matches) {
    pa.emplace_back(a.keypoints[mt.index_a].u, a.keypoints[mt.index_a].v);
    pb.emplace_back(b.keypoints[mt.index_b].u, b.keypoints[mt.index_b].v);
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::vector<std::size_t> best_inliers;
  std::optional<Eigen::Matrix3d> best;
  for (int it = 0; it < max_ransac_iters; ++it) {
    result.iterations_run = it + 1;
    std::array<std::size_t, 4> s{};
    for (int k = 0; k < 4; ++k) s[k] = pick(rng);
    bool distinct = true;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) distinct = distinct && s[i] != s[j];
    if (!distinct) continue;
    bool degenerate = false;
    for (int i = 0; i < 4 && !degenerate; ++i) {
      degenerate = collinear(pa[s[(i + 1) % 4]], pa[s[(i + 2) % 4]], pa[s[(i + 3) % 4]]) ||
                   collinear(pb[s[(i + 1) % 4]], pb[s[(i + 2) % 4]], pb[s[(i + 3) % 4]]);
    }
    if (degenerate) continue;
    const auto h = fit_homography({pa[s[0]], pa[s[1]], pa[s[2]], pa[s[3]]}, {pb[s[0]], pb[s[1]], pb[s[2]], pb[s[3]]});
    if (!h) continue;
    auto inl = inliers_of(*h, pa, pb, inlier_px);
    if (inl.size() > best_inliers.size()) {
      best_inliers = std::move(inl);
      best = h;
    }
  }

  // Refit on the consensus set until it stops changing.
  for (int round = 0; round < 10 && best && best_inliers.size() >= 4; ++round) {
    std::vector<Eigen::Vector2d> fa, fb;
    for (std::size_t i : best_inliers) {
      fa.push_back(pa[i]);
      fb.push_back(pb[i]);
    }
    const auto refit = fit_homography(fa, fb);
    if (!refit) break;
    auto inl = inliers_of(*refit, pa, pb, inlier_px);
    if (inl.size() < best_inliers.size()) break;
    const bool same = inl == best_inliers;
    best = refit;
    best_inliers = std::move(inl);
    if (same) break;
  }
  result.model = best;
  result.inliers = std::move(best_inliers);
  return result;
}

std::vector<SweepRow> ransac_sweep(const FeatureSet& a, const FeatureSet& b, const std::vector<int>& budgets,
                                   int repeats, double inlier_px, std::uint64_t base_seed) {
  std::vector<SweepRow> rows;
  for (int rep = 0; rep < repeats; ++rep) {
    for (int budget : budgets) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(budget) + 1000003ULL * static_cast<std::uint64_t>(rep);
      const auto t0 = std::chrono::steady_clock::now();
      const MatchResult r = match_and_verify(a, b, budget, inlier_px, seed);
      const auto t1 = std::chrono::steady_clock::now();
      rows.push_back({budget, rep, r.inliers.size(), std::chrono::duration<double>(t1 - t0).count()});
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << "budget,inlier_count,elapsed_seconds\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9f", r.elapsed_seconds);
    out << r.budget << ',' << r.inlier_count << ',' << buf << '\n';
  }
  if (!out) throw IoFailure("write failed for " + path.string());
}

}  // namespace reconeval
