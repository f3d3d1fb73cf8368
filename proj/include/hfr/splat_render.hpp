#pragma once

#include "hfr/camera.hpp"
#include "hfr/image.hpp"
#include "hfr/splat_model.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace hfr {

namespace detail {
struct RasterState;
}

struct RasterSettings {
  double min_weight = 1.0 / 255.0;
  double max_alpha = 0.99;
  double transmittance_floor = 1e-4;
  double dilation = 0.1;  // added to the screen-space covariance diagonal, px^2
  // Scales opacity by sqrt(det(cov) / det(cov + dilation)) so that Gaussians smaller than a
  // pixel keep their integrated footprint instead of growing when viewed from further away.
  bool compensate_dilation = true;
  double extent_sigmas = 3.0;
};

struct RasterOutput {
  Camera camera;
  Image rgb;    // 3 channels, composited over the background
  Image alpha;  // 1 channel
  std::vector<double> max_weight;  // per Gaussian, max over pixels of alpha_i * T_i
  // Forward intermediates reused by rasterize_backward when the inputs match.
  std::shared_ptr<const detail::RasterState> state;
};

RasterOutput rasterize(const SplatModel& model, const Camera& cam, const Vec3& background,
                       const RasterSettings& settings = {});

/// rgb and alpha packed as one 4-channel image.
Image raster_rgba(const RasterOutput& out);

struct GaussianGrad {
  Vec3 position = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec4 rotation = Vec4::Zero();
  double opacity_logit = 0.0;
  Vec3 rgb = Vec3::Zero();
};

struct RasterGradients {
  std::vector<GaussianGrad> gaussians;
  // Gradient of the loss with respect to each projected mean, in NDC units.
  std::vector<Vec2> mean2d_ndc;
  // True for Gaussians that contributed to at least one pixel.
  std::vector<bool> visible;
};

/// Gradients of a scalar loss given its derivatives with respect to the rasterized rgb and alpha.
/// `forward` may be the result of rasterize() for the same inputs to skip recomputation.
RasterGradients rasterize_backward(const SplatModel& model, const Camera& cam, const Vec3& background,
                                   const Image& d_rgb, const Image& d_alpha, const RasterOutput* forward = nullptr,
                                   const RasterSettings& settings = {});

struct AlphaTrainedRaster {
  RasterOutput output;
  Vec3 background;
};

/// Rasterizes over a uniformly random background colour drawn from `seed`.
AlphaTrainedRaster rasterize_alpha_trained(const SplatModel& model, const Camera& cam, std::uint64_t seed,
                                           const RasterSettings& settings = {});

Vec3 random_background(std::uint64_t seed);

}  // namespace hfr
