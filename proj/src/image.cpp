#include "hrf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace hrf {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels),
      data_(static_cast<std::size_t>(width) * height * channels, fill) {
  if (width < 0 || height < 0 || channels < 0) throw ImageError("image: negative size");
}

Image quantize8(const Image& image) {
  Image out = image;
  for (float& v : out.data()) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
  return out;
}

Image masked_rgba(const Image& rgb, const Image& mask) {
  if (rgb.width() != mask.width() || rgb.height() != mask.height() || rgb.channels() != 3 || mask.channels() != 1)
    throw ImageError("masked_rgba: expected matching RGB and single-channel mask");
  Image out(rgb.width(), rgb.height(), 4);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x) {
      const float m = mask.at(x, y, 0);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb.at(x, y, c) * m;
      out.at(x, y, 3) = m;
    }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: throw ImageError("png: unsupported channel count " + std::to_string(channels));
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const PngData& png) {
  if (png.bit_depth != 8 && png.bit_depth != 16) throw ImageError("png: bit depth must be 8 or 16");
  const std::size_t expected = static_cast<std::size_t>(png.width) * png.height * png.channels;
  if (png.samples.size() != expected) throw ImageError("png: sample count does not match size");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw ImageError("png: cannot open '" + path.string() + "' for writing");

  png_structp writer = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = writer ? png_create_info_struct(writer) : nullptr;
  if (!writer || !info) {
    png_destroy_write_struct(&writer, &info);
    throw ImageError("png: out of memory");
  }
  const int bytes = png.bit_depth / 8;
  std::vector<png_byte> row(static_cast<std::size_t>(png.width) * png.channels * bytes);
  if (setjmp(png_jmpbuf(writer))) {
    png_destroy_write_struct(&writer, &info);
    throw ImageError("png: write failed for '" + path.string() + "'");
  }
  png_init_io(writer, file.get());
  png_set_IHDR(writer, info, png.width, png.height, png.bit_depth, color_type_for(png.channels), PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(writer, info);
  const std::size_t per_row = static_cast<std::size_t>(png.width) * png.channels;
  for (int y = 0; y < png.height; ++y) {
    for (std::size_t i = 0; i < per_row; ++i) {
      const std::uint16_t v = png.samples[y * per_row + i];
      if (bytes == 1) {
        row[i] = static_cast<png_byte>(v);
      } else {
        row[2 * i] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        row[2 * i + 1] = static_cast<png_byte>(v & 0xff);
      }
    }
    png_write_row(writer, row.data());
  }
  png_write_end(writer, nullptr);
  png_destroy_write_struct(&writer, &info);
}

PngData read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw ImageError("png: cannot open '" + path.string() + "'");
  png_structp reader = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = reader ? png_create_info_struct(reader) : nullptr;
  if (!reader || !info) {
    png_destroy_read_struct(&reader, &info, nullptr);
    throw ImageError("png: out of memory");
  }
  PngData out;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(reader))) {
    png_destroy_read_struct(&reader, &info, nullptr);
    throw ImageError("png: '" + path.string() + "' is corrupt or truncated");
  }
  png_init_io(reader, file.get());
  png_read_info(reader, info);
  const int color = png_get_color_type(reader, info);
  out.bit_depth = png_get_bit_depth(reader, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(reader);
  if (out.bit_depth < 8) {
    png_set_packing(reader);
    if (color == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(reader);
    out.bit_depth = 8;
  }
  png_read_update_info(reader, info);
  out.width = static_cast<int>(png_get_image_width(reader, info));
  out.height = static_cast<int>(png_get_image_height(reader, info));
  out.channels = png_get_channels(reader, info);
  const int bytes = out.bit_depth / 8;
  row.resize(png_get_rowbytes(reader, info));
  const std::size_t per_row = static_cast<std::size_t>(out.width) * out.channels;
  out.samples.resize(per_row * out.height);
  for (int y = 0; y < out.height; ++y) {
    png_read_row(reader, row.data(), nullptr);
    for (std::size_t i = 0; i < per_row; ++i)
      out.samples[y * per_row + i] =
          bytes == 1 ? row[i] : static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
  }
  png_read_end(reader, nullptr);
  png_destroy_read_struct(&reader, &info, nullptr);
  return out;
}

void save_png8(const std::filesystem::path& path, const Image& image) {
  PngData png{image.width(), image.height(), image.channels(), 8, {}};
  png.samples.reserve(image.data().size());
  for (float v : image.data())
    png.samples.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  write_png(path, png);
}

Image load_png8(const std::filesystem::path& path) {
  const PngData png = read_png(path);
  if (png.bit_depth != 8) throw ImageError("png: '" + path.string() + "' is not 8-bit");
  Image out(png.width, png.height, png.channels);
  for (std::size_t i = 0; i < png.samples.size(); ++i) out.data()[i] = static_cast<float>(png.samples[i]) / 255.0f;
  return out;
}

void save_depth_png(const std::filesystem::path& path, const Image& depth) {
  if (depth.channels() != 1) throw ImageError("depth png: expected a single channel");
  PngData png{depth.width(), depth.height(), 1, 16, {}};
  png.samples.reserve(depth.data().size());
  for (float v : depth.data()) {
    const long mm = std::isfinite(v) && v > 0.0f ? std::lround(static_cast<double>(v) * 1000.0) : 0;
    png.samples.push_back(static_cast<std::uint16_t>(std::clamp<long>(mm, 0, 65535)));
  }
  write_png(path, png);
}

Image load_depth_png(const std::filesystem::path& path) {
  const PngData png = read_png(path);
  if (png.bit_depth != 16 || png.channels != 1) throw ImageError("depth png: '" + path.string() + "' is not 16-bit gray");
  Image out(png.width, png.height, 1);
  for (std::size_t i = 0; i < png.samples.size(); ++i)
    out.data()[i] = static_cast<float>(static_cast<double>(png.samples[i]) / 1000.0);
  return out;
}

}  // namespace hrf
