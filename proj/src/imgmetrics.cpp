#include "reconeval/imgmetrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <sys/wait.h>
#include <unistd.h>

#include "reconeval/core/io.hpp"
#include "reconeval/error.hpp"

namespace reconeval {

namespace {

void require_same_size(const GrayImage& a, const GrayImage& b) {
  if (!a.same_size(b)) {
    throw DimensionMismatch("image sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                            " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

double sum_squared_difference(const GrayImage& a, const GrayImage& b) {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const int d = static_cast<int>(a.data[i]) - static_cast<int>(b.data[i]);
    sum += static_cast<std::uint64_t>(d * d);
  }
  return static_cast<double>(sum);
}

double psnr_from_mse(double m) {
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

void mean_and_std(const std::vector<double>& v, double& mean, double& sd) {
  double s = 0.0;
  for (double x : v) s += x;
  mean = s / static_cast<double>(v.size());
  double q = 0.0;
  for (double x : v) q += (x - mean) * (x - mean);
  sd = std::sqrt(q / static_cast<double>(v.size()));
}

}  // namespace

double mse(const GrayImage& a, const GrayImage& b) {
  require_same_size(a, b);
  if (a.data.empty()) return 0.0;
  return sum_squared_difference(a, b) / static_cast<double>(a.data.size());
}

double psnr(const GrayImage& a, const GrayImage& b) { return psnr_from_mse(mse(a, b)); }

SsimResult ssim(const GrayImage& a, const GrayImage& b) {
  require_same_size(a, b);
  constexpr int kWin = 8, kStride = 4;
  if (a.width < kWin || a.height < kWin) throw TooSmall("SSIM needs images of at least 8x8");
  constexpr double c1 = (0.01 * 255) * (0.01 * 255);
  constexpr double c2 = (0.03 * 255) * (0.03 * 255);
  constexpr double n = kWin * kWin;

  SsimResult out;
  for (int y = 0; y + kWin <= a.height; y += kStride) {
    for (int x = 0; x + kWin <= a.width; x += kStride) {
      // Integer moments keep identical windows bit-exact at 1.0 and the
      // result symmetric in a and b.
      std::int64_t sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int j = y; j < y + kWin; ++j) {
        for (int i = x; i < x + kWin; ++i) {
          const std::int64_t pa = a.at(i, j), pb = b.at(i, j);
          sa += pa;
          sb += pb;
          saa += pa * pa;
          sbb += pb * pb;
          sab += pa * pb;
        }
      }
      const double mu_a = sa / n, mu_b = sb / n;
      const double var_a = static_cast<double>(64 * saa - sa * sa) / (n * n);
      const double var_b = static_cast<double>(64 * sbb - sb * sb) / (n * n);
      const double cov = static_cast<double>(64 * sab - sa * sb) / (n * n);
      const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      out.per_window.push_back(num / den);
    }
  }
  double s = 0.0;
  for (double v : out.per_window) s += v;
  out.mean = s / static_cast<double>(out.per_window.size());
  return out;
}

GrayImage downsample2(const GrayImage& image) {
  GrayImage out(image.width / 2, image.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const int sum = image.at(2 * x, 2 * y) + image.at(2 * x + 1, 2 * y) + image.at(2 * x, 2 * y + 1) +
                      image.at(2 * x + 1, 2 * y + 1);
      out.at(x, y) = static_cast<std::uint8_t>((sum + 2) / 4);
    }
  }
  return out;
}

double StructuralProxyBackend::distance(const GrayImage& a, const GrayImage& b) const {
  require_same_size(a, b);
  GrayImage sa = a, sb = b;
  double total = 0.0;
  int scales = 0;
  for (int level = 0; level < 3; ++level) {
    if (sa.width < 8 || sa.height < 8) break;
    total += (1.0 - ssim(sa, sb).mean) / 2.0;
    ++scales;
    sa = downsample2(sa);
    sb = downsample2(sb);
  }
  if (scales == 0) throw TooSmall("perceptual proxy needs images of at least 8x8");
  return std::clamp(total / scales, 0.0, 1.0);
}

double ExternalCommandBackend::distance(const GrayImage& a, const GrayImage& b) const {
  require_same_size(a, b);
  namespace fs = std::filesystem;
  std::string tmpl = (fs::temp_directory_path() / "reconeval_lpips_XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw BackendFailure("cannot create temporary directory");
  const fs::path dir(tmpl);
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{dir};

  const fs::path pa = dir / "a.pgm", pb = dir / "b.pgm";
  save_image(a, pa);
  save_image(b, pb);
  const std::string cmd = "'" + program_ + "' '" + pa.string() + "' '" + pb.string() + "' 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw BackendFailure("cannot start " + program_);
  std::string output;
  std::array<char, 256> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) output += buf.data();
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw BackendFailure(program_ + " exited with failure");
  }
  char* end = nullptr;
  const double value = std::strtod(output.c_str(), &end);
  if (end == output.c_str() || !std::isfinite(value) || value < 0.0) {
    throw BackendFailure(program_ + " did not print a non-negative number");
  }
  return value;
}

std::unique_ptr<PerceptualBackend> make_perceptual_backend(const std::string& spec) {
  if (spec == "proxy") return std::make_unique<StructuralProxyBackend>();
  const std::string prefix = "external:";
  if (spec.rfind(prefix, 0) == 0 && spec.size() > prefix.size()) {
    return std::make_unique<ExternalCommandBackend>(spec.substr(prefix.size()));
  }
  throw InvalidArgument("unknown perceptual backend '" + spec + "' (expected proxy or external:<path>)");
}

double perceptual_distance(const GrayImage& a, const GrayImage& b, const PerceptualBackend& backend) {
  require_same_size(a, b);
  return backend.distance(a, b);
}

ImageMetricSet aggregate_image_metrics(const std::vector<std::pair<GrayImage, GrayImage>>& pairs,
                                       const PerceptualBackend& backend) {
  if (pairs.empty()) throw EmptyInput("no image pairs to aggregate");
  double sq = 0.0, pixels = 0.0;
  std::vector<double> ssims, perceptual;
  for (const auto& [a, b] : pairs) {
    require_same_size(a, b);
    sq += sum_squared_difference(a, b);
    pixels += static_cast<double>(a.data.size());
    ssims.push_back(ssim(a, b).mean);
    perceptual.push_back(perceptual_distance(a, b, backend));
  }
  ImageMetricSet m;
  m.n_views = pairs.size();
  m.pooled_mse = pixels > 0.0 ? sq / pixels : 0.0;
  m.psnr_db = psnr_from_mse(m.pooled_mse);
  mean_and_std(ssims, m.ssim_mean, m.ssim_std);
  mean_and_std(perceptual, m.perceptual_mean, m.perceptual_std);
  m.perceptual_backend = backend.name();
  return m;
}

}  // namespace reconeval
