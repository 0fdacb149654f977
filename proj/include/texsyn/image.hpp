#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "texsyn/error.hpp"
#include "texsyn/network.hpp"
#include "texsyn/objective.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn {

/// 8-bit sRGB image, interleaved RGB, row-major.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(w * h * 3, fill) {
    if (w == 0 || h == 0) throw ShapeError("image dimensions must be >= 1");
  }

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

namespace detail {

inline std::vector<std::uint8_t> read_png(const std::string& path, std::uint32_t format,
                                          std::size_t& width, std::size_t& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string msg = image.message;
    png_image_free(&image);
    if (msg.find("open") != std::string::npos || msg.find("No such file") != std::string::npos)
      throw IoError("cannot read image '" + path + "': " + msg);
    throw FormatError("cannot decode PNG '" + path + "': " + msg);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  // Alpha is composited onto black so that the result is well defined.
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&image, &background, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG '" + path + "': " + msg);
  }
  width = image.width;
  height = image.height;
  return buffer;
}

inline void write_png(const std::string& path, std::uint32_t format, std::size_t width,
                      std::size_t height, const std::vector<std::uint8_t>& data) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG '" + path + "': " + msg);
  }
}

}  // namespace detail

/// Loads any PNG as 8-bit RGB: gray is replicated, alpha is dropped
/// (composited onto black), 16-bit samples are reduced.
inline ImageBuffer load_png(const std::string& path) {
  {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open image '" + path + "'");
    std::fclose(f);
  }
  ImageBuffer img;
  img.pixels = detail::read_png(path, PNG_FORMAT_RGB, img.width, img.height);
  return img;
}

inline void save_png(const ImageBuffer& img, const std::string& path) {
  detail::write_png(path, PNG_FORMAT_RGB, img.width, img.height, img.pixels);
}

/// Loads a single-channel mask PNG: values >= 128 mark missing pixels.
inline Mask load_mask(const std::string& path) {
  {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open mask '" + path + "'");
    std::fclose(f);
  }
  Mask mask;
  auto gray = detail::read_png(path, PNG_FORMAT_GRAY, mask.width, mask.height);
  mask.values.resize(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) mask.values[i] = gray[i] >= 128 ? 1 : 0;
  return mask;
}

/// Writes a mask as gray PNG with 0 = keep, 255 = missing.
inline void save_mask(const Mask& mask, const std::string& path) {
  std::vector<std::uint8_t> gray(mask.values.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.values[i] ? 255 : 0;
  detail::write_png(path, PNG_FORMAT_GRAY, mask.width, mask.height, gray);
}

/// Display pixels to network input: channel reorder, then mean subtraction.
template <typename T>
Tensor<T> preprocess(const ImageBuffer& img, const Preprocessing& meta) {
  Tensor<T> out({3, img.height, img.width});
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src = meta.order == ChannelOrder::bgr ? 2 - c : c;
    const T mean = static_cast<T>(meta.means[c]);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        out(c, y, x) = static_cast<T>(img.at(y, x, src)) - mean;
  }
  return out;
}

/// Rounds half away from zero and clamps to [0, 255].
inline std::uint8_t to_display(double v) {
  const double r = std::round(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

/// Inverse of preprocess followed by clamping to the display range.
template <typename T>
ImageBuffer deprocess(const Tensor<T>& t, const Preprocessing& meta) {
  if (t.rank() != 3 || t.extent(0) != 3)
    throw ShapeError("deprocess expects a [3,H,W] tensor, got " + to_string(t.shape()));
  ImageBuffer img(t.extent(2), t.extent(1));
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t dst = meta.order == ChannelOrder::bgr ? 2 - c : c;
    const T mean = static_cast<T>(meta.means[c]);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        img.at(y, x, dst) = to_display(static_cast<double>(t(c, y, x) + mean));
  }
  return img;
}

/// Bilinear resampling with pixel centres at half-integer coordinates and
/// edge clamping; no antialiasing prefilter.
inline ImageBuffer resize(const ImageBuffer& img, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ShapeError("resize target must be at least 1x1");
  if (width == img.width && height == img.height) return img;
  ImageBuffer out(width, height);
  auto source = [](std::size_t dst, std::size_t dst_extent, std::size_t src_extent,
                   std::size_t& i0, std::size_t& i1, double& frac) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_extent) /
                   static_cast<double>(dst_extent) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_extent - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, src_extent - 1);
    frac = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double fy;
    source(y, height, img.height, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double fx;
      source(x, width, img.width, x0, x1, fx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
        const double bottom = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
        out.at(y, x, c) = to_display(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

}  // namespace texsyn
