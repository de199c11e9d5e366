#include "hrf/metrics.hpp"

#include <cmath>

namespace hrf {

namespace {

void check_pair(const Image& a, const Image& b, const Image* mask) {
  if (!a.same_size(b))
    throw ImageError("metrics: image sizes differ (" + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                     "x" + std::to_string(a.channels()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + "x" + std::to_string(b.channels()) + ")");
  if (mask && (mask->width() != a.width() || mask->height() != a.height()))
    throw ImageError("metrics: mask size differs from the images");
}

// Sum of squared (or absolute) 0-255 errors and the number of samples counted.
template <typename F>
std::pair<double, double> accumulate_error(const Image& a, const Image& b, const Image* mask, F f) {
  double sum = 0.0, count = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (mask && mask->at(x, y, 0) < 0.5f) continue;
      for (int c = 0; c < a.channels(); ++c) {
        sum += f(255.0 * (static_cast<double>(a.at(x, y, c)) - static_cast<double>(b.at(x, y, c))));
        count += 1.0;
      }
    }
  return {sum, count};
}

std::vector<double> gaussian_window() {
  std::vector<double> w(11);
  double total = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double psnr(const Image& a, const Image& b, const Image* mask) {
  check_pair(a, b, mask);
  const auto [sse, n] = accumulate_error(a, b, mask, [](double e) { return e * e; });
  if (n == 0.0 || sse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / (sse / n)));
}

double mae(const Image& a, const Image& b, const Image* mask) {
  check_pair(a, b, mask);
  const auto [sae, n] = accumulate_error(a, b, mask, [](double e) { return std::abs(e); });
  return n == 0.0 ? 0.0 : sae / n;
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b, nullptr);
  const int w = a.width(), h = a.height();
  if (w < 11 || h < 11) throw ImageError("ssim: images must be at least 11x11");
  const double c1 = std::pow(0.01 * 255.0, 2), c2 = std::pow(0.03 * 255.0, 2);
  const auto g = gaussian_window();
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double channel = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + 11 <= h; ++y0)
      for (int x0 = 0; x0 + 11 <= w; ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < 11; ++dy)
          for (int dx = 0; dx < 11; ++dx) {
            const double wt = g[dy] * g[dx];
            const double va = 255.0 * a.at(x0 + dx, y0 + dy, c), vb = 255.0 * b.at(x0 + dx, y0 + dy, c);
            ma += wt * va;
            mb += wt * vb;
            saa += wt * va * va;
            sbb += wt * vb * vb;
            sab += wt * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        channel += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
    total += channel / windows;
  }
  return total / a.channels();
}

double mask_iou(const Image& a, const Image& b, double threshold) {
  if (a.width() != b.width() || a.height() != b.height()) throw ImageError("mask_iou: mask sizes differ");
  double inter = 0, uni = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const bool pa = a.at(x, y, 0) >= threshold, pb = b.at(x, y, 0) >= threshold;
      inter += pa && pb;
      uni += pa || pb;
    }
  return uni == 0 ? 1.0 : inter / uni;
}

ImageMetrics compare_images(const std::string& name, const Image& rendered, const Image& truth, const Image* mask) {
  ImageMetrics m;
  m.name = name;
  m.psnr = psnr(rendered, truth);
  m.ssim = ssim(rendered, truth);
  m.mae = mae(rendered, truth);
  if (mask) {
    m.has_mask = true;
    m.masked_psnr = psnr(rendered, truth, mask);
    m.masked_mae = mae(rendered, truth, mask);
  }
  return m;
}

MetricReport summarize(std::vector<ImageMetrics> images) {
  MetricReport r;
  r.mean.name = "mean";
  r.mean.has_mask = !images.empty();
  for (const auto& m : images) {
    r.mean.psnr += m.psnr;
    r.mean.ssim += m.ssim;
    r.mean.mae += m.mae;
    r.mean.masked_psnr += m.masked_psnr;
    r.mean.masked_mae += m.masked_mae;
    r.mean.has_mask = r.mean.has_mask && m.has_mask;
  }
  if (!images.empty()) {
    const double n = static_cast<double>(images.size());
    r.mean.psnr /= n;
    r.mean.ssim /= n;
    r.mean.mae /= n;
    r.mean.masked_psnr /= n;
    r.mean.masked_mae /= n;
  }
  r.images = std::move(images);
  return r;
}

}  // namespace hrf
