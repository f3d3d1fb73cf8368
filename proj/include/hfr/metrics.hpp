#pragma once

#include "hfr/camera.hpp"
#include "hfr/image.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace hfr {

// Metrics take 4-channel images: RGB as displayed (premultiplied) plus alpha, unit range.

struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct MaskedMetrics {
  double mpsnr = 0.0;
  double mssim = 0.0;
  double mask_coverage = 0.0;
  bool operator==(const MaskedMetrics&) const = default;
};

// Pixels with nonzero alpha in either image.
std::vector<char> metric_mask(const Image& a, const Image& b);

double masked_psnr(const Image& a, const Image& b);
double masked_ssim(const Image& a, const Image& b);
MaskedMetrics masked_metrics(const Image& a, const Image& b);

/// Linear-interpolation percentiles; `ps` in [0, 100].
std::vector<double> percentiles(std::span<const double> values, std::span<const double> ps);

/// Pixel region subtending `fov_deg` about `center_uv` of an image taken with `cam`.
/// Parts outside the source come back transparent so they drop out of masked metrics.
Image foveal_crop(const Image& img, const Vec2& center_uv, double fov_deg, const Camera& cam);

// --- SSIM building blocks shared with training --------------------------------

/// Separable Gaussian filter over the in-bounds part of the window, weights renormalized
/// per output pixel. Applies to every channel.
Image ssim_filter(const Image& img);
/// Adjoint of ssim_filter.
Image ssim_filter_adjoint(const Image& img);

/// Per-pixel, per-channel SSIM of the first `channels` channels.
Image ssim_map(const Image& a, const Image& b, int channels = 3);

/// Mean SSIM over the first `channels` channels and its gradient with respect to `a`.
double ssim_with_grad(const Image& a, const Image& b, int channels, Image* grad_a);

}  // namespace hfr
