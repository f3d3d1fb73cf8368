#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace hfr {

/// Interleaved multi-channel double image, row-major with row 0 at the top.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
};

/// 8-bit RGBA with straight (non-premultiplied) alpha.
struct Rgba8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Rgba8Image() = default;
  Rgba8Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 4, 0) {}

  std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 4 + c]; }
  std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 4 + c]; }
};

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint8_t to_unorm8(double v);

// Straight-alpha 8-bit -> premultiplied RGBA double, and back.
Image to_premultiplied(const Rgba8Image& img);
Rgba8Image from_premultiplied(const Image& rgba);

void write_png(const std::filesystem::path& path, const Rgba8Image& img);
Rgba8Image read_png(const std::filesystem::path& path);

// Raw depth: u32 width, u32 height, then width*height little-endian f32.
void write_depth(const std::filesystem::path& path, const Image& depth);
Image read_depth(const std::filesystem::path& path);

}  // namespace hfr
