#include "hfr/compositor.hpp"
#include "hfr/pathtracer.hpp"

#include <cmath>
#include <stdexcept>

namespace hfr {

namespace {

Image bilateral(const Image& color, const FoveatedFrame& frame, const DenoiseSettings& s) {
  const int w = color.width;
  const int h = color.height;
  Image out(w, h, 4);
  const double inv_spatial = 1.0 / (2.0 * s.sigma_spatial * s.sigma_spatial);
  const double inv_albedo = 1.0 / (2.0 * s.sigma_albedo * s.sigma_albedo);
  const double inv_depth = 1.0 / (2.0 * s.sigma_depth * s.sigma_depth);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d0 = frame.depth.at(x, y, 0);
      const Vec3 a0(frame.albedo.at(x, y, 0), frame.albedo.at(x, y, 1), frame.albedo.at(x, y, 2));
      Vec4 acc = Vec4::Zero();
      double wsum = 0.0;
      for (int dy = -s.radius; dy <= s.radius; ++dy) {
        for (int dx = -s.radius; dx <= s.radius; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const double d1 = frame.depth.at(xx, yy, 0);
          if ((d0 > 0.0) != (d1 > 0.0)) continue;
          double e = (dx * dx + dy * dy) * inv_spatial;
          const Vec3 a1(frame.albedo.at(xx, yy, 0), frame.albedo.at(xx, yy, 1), frame.albedo.at(xx, yy, 2));
          e += (a1 - a0).squaredNorm() * inv_albedo;
          if (d0 > 0.0) {
            const double rel = (d1 - d0) / d0;
            e += rel * rel * inv_depth;
          }
          const double wt = std::exp(-e);
          for (int c = 0; c < 4; ++c) acc[c] += wt * color.at(xx, yy, c);
          wsum += wt;
        }
      }
      for (int c = 0; c < 4; ++c) out.at(x, y, c) = acc[c] / wsum;
    }
  }
  return out;
}

}  // namespace

FoveatedFrame denoise(const FoveatedFrame& frame, const FoveatedFrame* history, const DenoiseSettings& settings) {
  if (settings.radius < 0) throw std::invalid_argument("denoise radius must be non-negative");
  if (history != nullptr && (history->rgba.width != frame.rgba.width || history->rgba.height != frame.rgba.height)) {
    throw std::invalid_argument("denoise: history resolution differs from the frame");
  }
  Image filtered = bilateral(to_premultiplied(frame.rgba), frame, settings);
  if (history != nullptr) {
    const ReprojectedImage past = reproject(*history, frame.camera);
    for (int y = 0; y < filtered.height; ++y) {
      for (int x = 0; x < filtered.width; ++x) {
        const double d = frame.depth.at(x, y, 0);
        const double dp = past.depth.at(x, y, 0);
        if (d <= 0.0 || dp <= 0.0 || std::abs(dp - d) >= settings.depth_agreement * d) continue;
        for (int c = 0; c < 4; ++c) {
          filtered.at(x, y, c) =
              settings.temporal_alpha * filtered.at(x, y, c) + (1.0 - settings.temporal_alpha) * past.rgba.at(x, y, c);
        }
      }
    }
  }
  FoveatedFrame out = frame;
  out.rgba = from_premultiplied(filtered);
  return out;
}

}  // namespace hfr
