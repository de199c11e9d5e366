#include "hrf/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace hrf;

namespace {

Image pattern(int w, int h) {
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = static_cast<float>(0.5 + 0.4 * std::sin(0.4 * x) * std::cos(0.3 * y));
      img.at(x, y, 1) = static_cast<float>((x + y) % 7) / 7.0f;
      img.at(x, y, 2) = static_cast<float>(x) / w;
    }
  return img;
}

}  // namespace

TEST_CASE("identical images") {
  const Image a = pattern(32, 24);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(ssim(a, a) == doctest::Approx(1.0));
  CHECK(mae(a, a) == 0.0);
}

TEST_CASE("constant offset") {
  Image a(20, 20, 3, 100.0f / 255.0f), b(20, 20, 3, 101.0f / 255.0f);
  CHECK(mae(a, b) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(psnr(a, b) == doctest::Approx(48.13).epsilon(0.01 / 48.13));
  CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-4));
}

TEST_CASE("psnr and mae against a direct loop") {
  const Image a = pattern(16, 16);
  Image b = a;
  Image mask(16, 16, 1, 0.0f);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      b.at(x, y, 1) = std::clamp(b.at(x, y, 1) + 0.01f * ((x * 3 + y) % 5 - 2), 0.0f, 1.0f);
      if (x > 4 && y < 10) mask.at(x, y, 0) = 1.0f;
    }
  double se = 0.0, ae = 0.0, mse_in = 0.0, ae_in = 0.0;
  int n_in = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) {
        const double d = 255.0 * (static_cast<double>(a.at(x, y, c)) - b.at(x, y, c));
        se += d * d;
        ae += std::abs(d);
        if (mask.at(x, y, 0) > 0.5f) {
          mse_in += d * d;
          ae_in += std::abs(d);
          ++n_in;
        }
      }
  const int n = 16 * 16 * 3;
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / (se / n))));
  CHECK(mae(a, b) == doctest::Approx(ae / n));
  CHECK(psnr(a, b, &mask) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / (mse_in / n_in))));
  CHECK(mae(a, b, &mask) == doctest::Approx(ae_in / n_in));
  CHECK_THROWS_AS(psnr(a, Image(15, 16, 3)), ImageError);
}

TEST_CASE("ssim") {
  SUBCASE("constant images") {
    const double ma = 0.3 * 255.0, mb = 0.6 * 255.0;
    const double c1 = std::pow(0.01 * 255.0, 2);
    const double expected = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    const Image a(16, 16, 3, 0.3f), b(16, 16, 3, 0.6f);
    CHECK(ssim(a, b) == doctest::Approx(expected).epsilon(1e-5));
  }
  SUBCASE("negative image is anti-correlated") {
    const Image a = pattern(40, 40);
    Image neg = a;
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x)
        for (int c = 0; c < 3; ++c) neg.at(x, y, c) = 1.0f - a.at(x, y, c);
    const double s = ssim(a, neg);
    CHECK(s < 0.0);
    CHECK(s >= -1.0);
  }
  CHECK_THROWS_AS(ssim(Image(8, 8, 3), Image(8, 8, 3)), ImageError);
}

TEST_CASE("mask iou") {
  Image a(10, 10, 1, 0.0f), b(10, 10, 1, 0.0f);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      if (x < 6) a.at(x, y, 0) = 1.0f;
      if (x >= 4) b.at(x, y, 0) = 0.8f;
    }
  // 2 shared columns out of 10.
  CHECK(mask_iou(a, b) == doctest::Approx(0.2));
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, b, 0.9) == 0.0);
  CHECK(mask_iou(Image(4, 4, 1), Image(4, 4, 1)) == 1.0);
}

TEST_CASE("report aggregation") {
  const Image a = pattern(16, 16);
  Image b = a;
  b.at(3, 3, 0) = 0.0f;
  std::vector<ImageMetrics> items{compare_images("x", a, a), compare_images("y", a, b)};
  const MetricReport r = summarize(items);
  CHECK(r.images.size() == 2);
  CHECK(r.mean.mae == doctest::Approx(0.5 * (items[0].mae + items[1].mae)));
  CHECK(r.mean.ssim == doctest::Approx(0.5 * (items[0].ssim + items[1].ssim)));
}
