#pragma once

#include "hrf/image.hpp"

#include <string>
#include <vector>

namespace hrf {

constexpr double kPsnrCap = 99.0;

/// 10 log10(255^2 / MSE) on the 0-255 scale, capped for identical images.
double psnr(const Image& a, const Image& b, const Image* mask = nullptr);

/// Mean absolute error on the 0-255 scale.
double mae(const Image& a, const Image& b, const Image* mask = nullptr);

/// Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5) and
/// the usual constants for 8-bit data. Windows are evaluated where they fit.
double ssim(const Image& a, const Image& b);

/// Intersection over union of two binary masks (values >= threshold are set).
double mask_iou(const Image& a, const Image& b, double threshold = 0.5);

struct ImageMetrics {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
  double masked_psnr = 0.0;
  double masked_mae = 0.0;
  bool has_mask = false;
};

struct MetricReport {
  std::vector<ImageMetrics> images;
  ImageMetrics mean;
};

ImageMetrics compare_images(const std::string& name, const Image& rendered, const Image& truth,
                            const Image* mask = nullptr);
MetricReport summarize(std::vector<ImageMetrics> images);

}  // namespace hrf
