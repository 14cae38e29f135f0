#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "reconeval/error.hpp"
#include "reconeval/imgmetrics.hpp"
#include "support.hpp"

namespace reconeval {
namespace {

GrayImage random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> u(0, 255);
  GrayImage img(w, h);
  for (auto& p : img.data) p = static_cast<std::uint8_t>(u(rng));
  return img;
}

GrayImage smooth_base(int w, int h) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y) = static_cast<std::uint8_t>(128 + 60 * std::sin(x * 0.21) * std::cos(y * 0.13) + 30 * ((x / 9 + y / 7) % 2));
    }
  }
  return img;
}

GrayImage add_uniform_noise(const GrayImage& img, int amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(-amplitude, amplitude);
  GrayImage out = img;
  for (auto& p : out.data) p = static_cast<std::uint8_t>(std::clamp(p + u(rng), 0, 255));
  return out;
}

GrayImage checkerboard(int size, int cell) {
  GrayImage img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) img.at(x, y) = ((x / cell + y / cell) % 2) ? 230 : 25;
  }
  return img;
}

GrayImage box_blur(const GrayImage& img) {
  GrayImage out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int s = 0, n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) continue;
          s += img.at(xx, yy);
          ++n;
        }
      }
      out.at(x, y) = static_cast<std::uint8_t>(s / n);
    }
  }
  return out;
}

GrayImage invert(const GrayImage& img) {
  GrayImage out = img;
  for (auto& p : out.data) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

// Floating-point two-pass SSIM straight from the formula.
double oracle_ssim(const GrayImage& a, const GrayImage& b) {
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0.0;
  int windows = 0;
  for (int y = 0; y + 8 <= a.height; y += 4) {
    for (int x = 0; x + 8 <= a.width; x += 4) {
      double ma = 0, mb = 0;
      for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) {
          ma += a.at(x + i, y + j);
          mb += b.at(x + i, y + j);
        }
      ma /= 64;
      mb /= 64;
      double va = 0, vb = 0, cov = 0;
      for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) {
          const double da = a.at(x + i, y + j) - ma, db = b.at(x + i, y + j) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= 64;
      vb /= 64;
      cov /= 64;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  }
  return total / windows;
}

TEST(Psnr, ClosedForms) {
  const GrayImage zeros(16, 16, 0), full(16, 16, 255), ones(16, 16, 1);
  EXPECT_TRUE(std::isinf(psnr(zeros, zeros)));
  EXPECT_GT(psnr(zeros, zeros), 0);
  EXPECT_DOUBLE_EQ(psnr(zeros, full), 0.0);
  EXPECT_NEAR(psnr(zeros, ones), 48.13, 0.01);
  EXPECT_DOUBLE_EQ(psnr(zeros, ones), 20.0 * std::log10(255.0));
}

TEST(Psnr, SymmetricAndChecksSize) {
  std::mt19937_64 rng(60);
  for (int i = 0; i < 20; ++i) {
    const GrayImage a = random_image(rng, 20, 13), b = random_image(rng, 20, 13);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
  }
  EXPECT_THROW(psnr(GrayImage(4, 4), GrayImage(4, 5)), DimensionMismatch);
  EXPECT_THROW(ssim(GrayImage(16, 16), GrayImage(17, 16)), DimensionMismatch);
  StructuralProxyBackend proxy;
  EXPECT_THROW(perceptual_distance(GrayImage(16, 16), GrayImage(16, 8), proxy), DimensionMismatch);
}

TEST(Ssim, ClosedForms) {
  std::mt19937_64 rng(61);
  const GrayImage a = random_image(rng, 32, 24);
  EXPECT_EQ(ssim(a, a).mean, 1.0);
  const GrayImage c(16, 16, 100);
  EXPECT_EQ(ssim(c, c).mean, 1.0);
  EXPECT_LT(ssim(checkerboard(32, 4), invert(checkerboard(32, 4))).mean, 0.0);
  EXPECT_EQ(ssim(a, a).per_window.size(), 7u * 5u);
  EXPECT_THROW(ssim(GrayImage(7, 20), GrayImage(7, 20)), TooSmall);
}

TEST(Ssim, MatchesFloatingPointOracle) {
  std::mt19937_64 rng(62);
  std::uniform_int_distribution<int> dim(8, 40);
  for (int i = 0; i < 30; ++i) {
    const int w = dim(rng), h = dim(rng);
    const GrayImage a = random_image(rng, w, h);
    const GrayImage b = i % 2 ? random_image(rng, w, h) : add_uniform_noise(a, 20, i);
    const double s = ssim(a, b).mean;
    EXPECT_NEAR(s, oracle_ssim(a, b), 1e-12);
    EXPECT_NEAR(s, ssim(b, a).mean, 1e-12);
    EXPECT_LE(s, 1.0);
  }
}

TEST(NoiseLadder, PsnrAndProxyStrictlyMonotone) {
  const GrayImage base = smooth_base(96, 80);
  StructuralProxyBackend proxy;
  double last_psnr = std::numeric_limits<double>::infinity(), last_proxy = 0.0;
  for (int amplitude : {2, 8, 32}) {
    const GrayImage noisy = add_uniform_noise(base, amplitude, 7);
    const double p = psnr(base, noisy), d = proxy.distance(base, noisy);
    EXPECT_LT(p, last_psnr) << amplitude;
    EXPECT_GT(d, last_proxy) << amplitude;
    last_psnr = p;
    last_proxy = d;
  }
}

TEST(Proxy, RangeSymmetryAndOrdering) {
  StructuralProxyBackend proxy;
  std::mt19937_64 rng(63);
  for (int i = 0; i < 20; ++i) {
    const GrayImage a = random_image(rng, 40, 40), b = random_image(rng, 40, 40);
    const double d = proxy.distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_NEAR(d, proxy.distance(b, a), 1e-6);
    EXPECT_EQ(proxy.distance(a, a), 0.0);
  }
  const GrayImage cb = checkerboard(64, 4);
  const double blurred = proxy.distance(cb, box_blur(cb));
  const double inverse = proxy.distance(cb, invert(cb));
  EXPECT_GT(blurred, 0.0);
  EXPECT_LT(blurred, inverse);
  EXPECT_EQ(proxy.name(), "proxy");
}

TEST(Proxy, UsesOnlyScalesOfAtLeastEightPixels) {
  // 12x12: only the full scale qualifies, so the proxy is (1 - ssim) / 2.
  std::mt19937_64 rng(64);
  const GrayImage a = random_image(rng, 12, 12), b = random_image(rng, 12, 12);
  EXPECT_DOUBLE_EQ(StructuralProxyBackend().distance(a, b), (1.0 - ssim(a, b).mean) / 2.0);
  EXPECT_THROW(StructuralProxyBackend().distance(GrayImage(4, 4), GrayImage(4, 4)), TooSmall);
}

TEST(ExternalBackend, RunsProgramAndReportsFailures) {
  testing::TempDir dir;
  const auto write_script = [&](const std::string& name, const std::string& body) {
    const auto p = dir / name;
    std::ofstream(p) << "#!/bin/sh\n" << body << "\n";
    std::filesystem::permissions(p, std::filesystem::perms::owner_all);
    return p.string();
  };
  // Succeeds only if both image paths arrive and are non-empty.
  const auto ok = write_script("ok.sh", "test -s \"$1\" && test -s \"$2\" && echo 0.25");
  const auto bad = write_script("bad.sh", "exit 3");
  const auto junk = write_script("junk.sh", "echo hello");
  const GrayImage a(16, 16, 10), b(16, 16, 20);
  const auto backend = make_perceptual_backend("external:" + ok);
  EXPECT_EQ(backend->name(), "external:" + ok);
  EXPECT_DOUBLE_EQ(perceptual_distance(a, b, *backend), 0.25);
  EXPECT_THROW(perceptual_distance(a, b, *make_perceptual_backend("external:" + bad)), BackendFailure);
  EXPECT_THROW(perceptual_distance(a, b, *make_perceptual_backend("external:" + junk)), BackendFailure);
  EXPECT_THROW(perceptual_distance(a, b, *make_perceptual_backend("external:/nonexistent/prog")), BackendFailure);
  EXPECT_THROW(make_perceptual_backend("lpips"), InvalidArgument);
  EXPECT_EQ(make_perceptual_backend("proxy")->name(), "proxy");
}

TEST(Aggregate, IdenticalPairs) {
  std::mt19937_64 rng(65);
  std::vector<std::pair<GrayImage, GrayImage>> pairs;
  for (int i = 0; i < 4; ++i) {
    const GrayImage a = random_image(rng, 32, 32);
    pairs.emplace_back(a, a);
  }
  const auto m = aggregate_image_metrics(pairs, StructuralProxyBackend());
  EXPECT_TRUE(std::isinf(m.psnr_db));
  EXPECT_EQ(m.ssim_mean, 1.0);
  EXPECT_EQ(m.ssim_std, 0.0);
  EXPECT_EQ(m.perceptual_mean, 0.0);
  EXPECT_EQ(m.perceptual_std, 0.0);
  EXPECT_EQ(m.n_views, 4u);
  EXPECT_EQ(m.perceptual_backend, "proxy");
}

TEST(Aggregate, PooledMse) {
  const GrayImage base(16, 16, 100);
  GrayImage mse1(16, 16, 101);  // MSE 1
  GrayImage mse3 = base;        // MSE 3: three of every four pixels off by 2
  for (std::size_t i = 0; i < mse3.data.size(); ++i) {
    if (i % 4 != 0) mse3.data[i] = 102;
  }
  ASSERT_DOUBLE_EQ(mse(base, mse1), 1.0);
  ASSERT_DOUBLE_EQ(mse(base, mse3), 3.0);
  const auto m = aggregate_image_metrics({{base, mse1}, {base, mse3}}, StructuralProxyBackend());
  EXPECT_DOUBLE_EQ(m.pooled_mse, 2.0);
  EXPECT_DOUBLE_EQ(m.psnr_db, 10.0 * std::log10(255.0 * 255.0 / 2.0));
  EXPECT_GT(m.ssim_std, 0.0);

  const auto single = aggregate_image_metrics({{base, mse3}}, StructuralProxyBackend());
  EXPECT_EQ(single.ssim_std, 0.0);
  EXPECT_EQ(single.perceptual_std, 0.0);
  EXPECT_THROW(aggregate_image_metrics({}, StructuralProxyBackend()), EmptyInput);
}

}  // namespace
}  // namespace reconeval
