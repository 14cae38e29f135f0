#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "reconeval/core/types.hpp"

namespace reconeval {

struct SsimResult {
  double mean = 1.0;
  std::vector<double> per_window;
};

/// Mean squared error between equal-size images.
double mse(const GrayImage& a, const GrayImage& b);
/// 10 log10(255^2 / MSE); +infinity for identical images.
double psnr(const GrayImage& a, const GrayImage& b);
/// 8x8 windows at stride 4, uniform weights, C1 = (0.01*255)^2, C2 = (0.03*255)^2.
SsimResult ssim(const GrayImage& a, const GrayImage& b);

/// 2x2 box average (rounded), dropping an odd last row/column.
GrayImage downsample2(const GrayImage& image);

class PerceptualBackend {
 public:
  virtual ~PerceptualBackend() = default;
  virtual double distance(const GrayImage& a, const GrayImage& b) const = 0;
  virtual std::string name() const = 0;
};

/// Non-learned stand-in for LPIPS: mean over up to three dyadic scales of
/// (1 - SSIM) / 2. Scales smaller than 8x8 are skipped.
class StructuralProxyBackend final : public PerceptualBackend {
 public:
  double distance(const GrayImage& a, const GrayImage& b) const override;
  std::string name() const override { return "proxy"; }
};

/// Runs `<program> <a.pgm> <b.pgm>` and reads one number from its stdout.
class ExternalCommandBackend final : public PerceptualBackend {
 public:
  explicit ExternalCommandBackend(std::string program) : program_(std::move(program)) {}
  double distance(const GrayImage& a, const GrayImage& b) const override;
  std::string name() const override { return "external:" + program_; }

 private:
  std::string program_;
};

/// "proxy" or "external:<path>".
std::unique_ptr<PerceptualBackend> make_perceptual_backend(const std::string& spec);

double perceptual_distance(const GrayImage& a, const GrayImage& b, const PerceptualBackend& backend);

struct ImageMetricSet {
  double psnr_db = 0.0;
  double pooled_mse = 0.0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  double perceptual_mean = 0.0;
  double perceptual_std = 0.0;
  std::size_t n_views = 0;
  std::string perceptual_backend;
};

ImageMetricSet aggregate_image_metrics(const std::vector<std::pair<GrayImage, GrayImage>>& pairs,
                                       const PerceptualBackend& backend);

}  // namespace reconeval
