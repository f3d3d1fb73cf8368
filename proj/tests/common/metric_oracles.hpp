#pragma once

// Direct, unoptimized reference metrics for cross-checking the masked implementations.

#include "hfr/image.hpp"
#include "hfr/metrics.hpp"
#include "hfr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hfr::testing {

inline double reference_psnr(const Image& a, const Image& b) {
  double se = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        se += d * d;
        ++n;
      }
    }
  }
  const double mse = se / static_cast<double>(n);
  return mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// Full 2-D Gaussian window, weights renormalized over the in-bounds part.
inline double reference_ssim(const Image& a, const Image& b) {
  const int r = kSsimWindow / 2;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        double w = 0, ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int sx = x + dx, sy = y + dy;
            if (sx < 0 || sy < 0 || sx >= a.width || sy >= a.height) continue;
            const double k = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
            const double va = a.at(sx, sy, c), vb = b.at(sx, sy, c);
            w += k;
            ma += k * va;
            mb += k * vb;
            aa += k * va * va;
            bb += k * vb * vb;
            ab += k * va * vb;
          }
        }
        ma /= w, mb /= w, aa /= w, bb /= w, ab /= w;
        const double s = ((2 * ma * mb + kSsimC1) * (2 * (ab - ma * mb) + kSsimC2)) /
                         ((ma * ma + mb * mb + kSsimC1) * (aa - ma * ma + bb - mb * mb + kSsimC2));
        total += s;
      }
    }
  }
  return total / (3.0 * a.width * a.height);
}

inline double reference_percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (pos - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

inline Image random_opaque_image(Rng& rng, int w, int h) {
  Image img(w, h, 4);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = rng.uniform();
      img.at(x, y, 3) = 1.0;
    }
  }
  return img;
}

}  // namespace hfr::testing
