#include "hfr/image.hpp"

#include "hfr/bytes.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

namespace hfr {

std::uint8_t to_unorm8(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

Image to_premultiplied(const Rgba8Image& img) {
  Image out(img.width, img.height, 4);
  for (std::size_t i = 0; i < img.data.size(); i += 4) {
    const double a = img.data[i + 3] / 255.0;
    for (int c = 0; c < 3; ++c) out.data[i + c] = img.data[i + c] / 255.0 * a;
    out.data[i + 3] = a;
  }
  return out;
}

Rgba8Image from_premultiplied(const Image& rgba) {
  if (rgba.channels != 4) throw std::invalid_argument("from_premultiplied: expected 4 channels");
  Rgba8Image out(rgba.width, rgba.height);
  for (std::size_t i = 0; i < rgba.data.size(); i += 4) {
    const double a = std::clamp(rgba.data[i + 3], 0.0, 1.0);
    for (int c = 0; c < 3; ++c) out.data[i + c] = a > 0.0 ? to_unorm8(rgba.data[i + c] / a) : 0;
    out.data[i + 3] = to_unorm8(a);
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Rgba8Image& img) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw ImageIoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("png: write failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * img.width * 4));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Rgba8Image read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageIoError("png: cannot read " + path.string());
  }
  image.format = PNG_FORMAT_RGBA;
  Rgba8Image out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageIoError("png: decode failed for " + path.string());
  }
  return out;
}

void write_depth(const std::filesystem::path& path, const Image& depth) {
  if (depth.channels != 1) throw std::invalid_argument("write_depth: expected 1 channel");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(depth.width));
  w.u32(static_cast<std::uint32_t>(depth.height));
  for (double d : depth.data) w.f32(static_cast<float>(d));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.size()));
}

Image read_depth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    ByteReader r(bytes);
    const int w = static_cast<int>(r.u32());
    const int h = static_cast<int>(r.u32());
    Image out(w, h, 1);
    for (auto& d : out.data) d = r.f32();
    return out;
  } catch (const TruncatedInput&) {
    throw ImageIoError("depth file truncated: " + path.string());
  }
}

}  // namespace hfr
