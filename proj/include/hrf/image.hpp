#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace hrf {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interleaved H x W x C float image.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c]; }
  float at(int x, int y, int c) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c]; }
  Eigen::Vector3f rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool same_size(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  bool operator==(const Image& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Rounds every sample to the nearest multiple of 1/255 in [0, 1].
Image quantize8(const Image& image);

/// Stacks RGB and mask into RGBA with the background zeroed.
Image masked_rgba(const Image& rgb, const Image& mask);

/// Raw PNG samples (8- or 16-bit, gray/gray+alpha/RGB/RGBA).
struct PngData {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

void write_png(const std::filesystem::path& path, const PngData& png);
PngData read_png(const std::filesystem::path& path);

/// 8-bit color (3 channels) or gray (1 channel), values in [0, 1].
void save_png8(const std::filesystem::path& path, const Image& image);
Image load_png8(const std::filesystem::path& path);

/// 16-bit gray depth in millimetres; 0 encodes "no surface". Depth images
/// hold meters with 0 for background.
void save_depth_png(const std::filesystem::path& path, const Image& depth);
Image load_depth_png(const std::filesystem::path& path);

}  // namespace hrf
