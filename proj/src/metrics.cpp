#include "hfr/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace hfr {

namespace {

void require_pair(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("metric inputs differ in shape");
  if (a.channels != 4) throw std::invalid_argument("metric inputs must be RGBA");
}

std::array<double, kSsimWindow> gaussian_kernel() {
  std::array<double, kSsimWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// 1D pass along x (axis 0) or y (axis 1). With `adjoint`, input is scaled by the output
// normalization first, which transposes the normalized operator (the kernel is symmetric).
Image filter_pass(const Image& in, int axis, bool adjoint) {
  static const auto k = gaussian_kernel();
  constexpr int r = kSsimWindow / 2;
  const int n = axis == 0 ? in.width : in.height;
  std::vector<double> norm(n);
  for (int i = 0; i < n; ++i) {
    double z = 0.0;
    for (int o = -r; o <= r; ++o) {
      if (i + o >= 0 && i + o < n) z += k[o + r];
    }
    norm[i] = 1.0 / z;
  }
  Image out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const int i = axis == 0 ? x : y;
      for (int c = 0; c < in.channels; ++c) {
        double acc = 0.0;
        for (int o = -r; o <= r; ++o) {
          const int j = i + o;
          if (j < 0 || j >= n) continue;
          const double v = axis == 0 ? in.at(j, y, c) : in.at(x, j, c);
          acc += k[o + r] * (adjoint ? v * norm[j] : v);
        }
        out.at(x, y, c) = adjoint ? acc : acc * norm[i];
      }
    }
  }
  return out;
}

struct SsimStats {
  Image mu_a, mu_b, aa, bb, ab;
};

Image channel_slice(const Image& img, int channels) {
  Image out(img.width, img.height, channels);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < channels; ++c) out.data[p * channels + c] = img.data[p * img.channels + c];
  }
  return out;
}

SsimStats ssim_stats(const Image& a, const Image& b) {
  Image sq_a = a, sq_b = b, prod = a;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    sq_a.data[i] = a.data[i] * a.data[i];
    sq_b.data[i] = b.data[i] * b.data[i];
    prod.data[i] = a.data[i] * b.data[i];
  }
  return {ssim_filter(a), ssim_filter(b), ssim_filter(sq_a), ssim_filter(sq_b), ssim_filter(prod)};
}

}  // namespace

std::vector<char> metric_mask(const Image& a, const Image& b) {
  require_pair(a, b);
  std::vector<char> mask(a.pixel_count());
  for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = a.data[p * 4 + 3] > 0.0 || b.data[p * 4 + 3] > 0.0;
  return mask;
}

double masked_psnr(const Image& a, const Image& b) {
  const auto mask = metric_mask(a, b);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = a.data[p * 4 + c] - b.data[p * 4 + c];
      sum += d * d;
    }
    n += 3;
  }
  if (n == 0) throw MetricError("masked PSNR is undefined for an empty mask");
  const double mse = sum / static_cast<double>(n);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double masked_ssim(const Image& a, const Image& b) {
  const auto mask = metric_mask(a, b);
  const Image map = ssim_map(a, b, 3);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < 3; ++c) sum += map.data[p * 3 + c];
    n += 3;
  }
  if (n == 0) throw MetricError("masked SSIM is undefined for an empty mask");
  return sum / static_cast<double>(n);
}

MaskedMetrics masked_metrics(const Image& a, const Image& b) {
  const auto mask = metric_mask(a, b);
  const auto covered = std::count(mask.begin(), mask.end(), 1);
  return {masked_psnr(a, b), masked_ssim(a, b), static_cast<double>(covered) / static_cast<double>(mask.size())};
}

std::vector<double> percentiles(std::span<const double> values, std::span<const double> ps) {
  if (values.empty()) throw MetricError("percentiles of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(ps.size());
  for (double p : ps) {
    if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile outside [0, 100]");
    const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(sorted[lo] + frac * (sorted[hi] - sorted[lo]));
  }
  return out;
}

Image foveal_crop(const Image& img, const Vec2& center_uv, double fov_deg, const Camera& cam) {
  if (img.width != cam.width || img.height != cam.height) throw std::invalid_argument("foveal_crop: camera mismatch");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("foveal_crop: fov outside (0, 180)");
  const double half = cam.focal_px() * std::tan(0.5 * deg_to_rad(fov_deg));
  const int size = std::max(1, static_cast<int>(std::lround(2.0 * half)));
  const Vec2 center = uv_to_pixel(cam, center_uv);
  const int x0 = static_cast<int>(std::lround(center.x() - 0.5 * size));
  const int y0 = static_cast<int>(std::lround(center.y() - 0.5 * size));
  Image out(size, size, img.channels);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int sx = x0 + x;
      const int sy = y0 + y;
      if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height) continue;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

Image ssim_filter(const Image& img) { return filter_pass(filter_pass(img, 0, false), 1, false); }

Image ssim_filter_adjoint(const Image& img) { return filter_pass(filter_pass(img, 1, true), 0, true); }

Image ssim_map(const Image& a_full, const Image& b_full, int channels) {
  if (!a_full.same_shape(b_full)) throw std::invalid_argument("ssim_map: shape mismatch");
  const Image a = channel_slice(a_full, channels);
  const Image b = channel_slice(b_full, channels);
  const SsimStats s = ssim_stats(a, b);
  Image out(a.width, a.height, channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double ma = s.mu_a.data[i], mb = s.mu_b.data[i];
    const double va = s.aa.data[i] - ma * ma;
    const double vb = s.bb.data[i] - mb * mb;
    const double cov = s.ab.data[i] - ma * mb;
    out.data[i] = ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                  ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
  }
  return out;
}

double ssim_with_grad(const Image& a_full, const Image& b_full, int channels, Image* grad_a) {
  if (!a_full.same_shape(b_full)) throw std::invalid_argument("ssim_with_grad: shape mismatch");
  const Image a = channel_slice(a_full, channels);
  const Image b = channel_slice(b_full, channels);
  const SsimStats s = ssim_stats(a, b);
  const double inv_n = 1.0 / static_cast<double>(a.data.size());
  Image d_mu(a.width, a.height, channels), d_aa(a.width, a.height, channels), d_ab(a.width, a.height, channels);
  double total = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double ma = s.mu_a.data[i], mb = s.mu_b.data[i];
    const double va = s.aa.data[i] - ma * ma;
    const double vb = s.bb.data[i] - mb * mb;
    const double cov = s.ab.data[i] - ma * mb;
    const double a1 = 2 * ma * mb + kSsimC1;
    const double a2 = 2 * cov + kSsimC2;
    const double b1 = ma * ma + mb * mb + kSsimC1;
    const double b2 = va + vb + kSsimC2;
    const double ssim = a1 * a2 / (b1 * b2);
    total += ssim;
    d_mu.data[i] = inv_n * ((2 * mb * a2 - 2 * mb * a1) / (b1 * b2) - 2 * ma * ssim * (1.0 / b1 - 1.0 / b2));
    d_aa.data[i] = inv_n * (-ssim / b2);
    d_ab.data[i] = inv_n * (2 * a1 / (b1 * b2));
  }
  if (grad_a != nullptr) {
    const Image g_mu = ssim_filter_adjoint(d_mu);
    const Image g_aa = ssim_filter_adjoint(d_aa);
    const Image g_ab = ssim_filter_adjoint(d_ab);
    *grad_a = Image(a_full.width, a_full.height, a_full.channels);
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = p * channels + c;
        grad_a->data[p * a_full.channels + c] = g_mu.data[i] + 2.0 * a.data[i] * g_aa.data[i] + b.data[i] * g_ab.data[i];
      }
    }
  }
  return total * inv_n;
}

}  // namespace hfr
