#pragma once

#include "hfr/camera.hpp"
#include "hfr/frame.hpp"
#include "hfr/image.hpp"
#include "hfr/volume.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace hfr {

struct RenderSettings {
  int spp = 8;
  int max_bounces = 4;
  std::uint64_t seed = 1;
  double hit_alpha_threshold = 0.1;
  int albedo_march_steps = 16;
  // Extinction per world unit at transfer alpha 1. World units are millimetres, so 0.05 = 50 / m.
  double extinction_scale = 0.05;
  std::vector<ClipPlane> clip_planes;

  void validate() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = -Vec3::UnitZ();  // normalized
  double tmin = 0.0;
  double tmax = std::numeric_limits<double>::infinity();
};

struct Hit {
  Vec3 position;
  double distance;
};

/// Full-precision outputs of one render.
struct RenderBuffers {
  Image radiance;    // RGB, complete estimate including the environment seen through the medium
  Image foreground;  // premultiplied RGB + alpha, medium contribution only
  Image depth;       // distance to the first significant hit, 0 = none
  Image albedo;      // RGB from the short unlit march at the hit
};

RenderBuffers render_buffers(const Volume& vol, const TransferFunction& tf, const EnvironmentMap& env,
                             const Camera& cam, const RenderSettings& settings, std::uint64_t frame_id = 0);

/// Path-traces one posed frame. Deterministic per (inputs, seed, frame_id).
FoveatedFrame render(const Volume& vol, const TransferFunction& tf, const EnvironmentMap& env, const Camera& cam,
                     const RenderSettings& settings, std::uint64_t frame_id = 0);

/// Fixed-step march (half the smallest voxel edge) returning the first sample whose
/// transfer alpha reaches `threshold`.
std::optional<Hit> first_significant_hit(const Volume& vol, const TransferFunction& tf, const Ray& ray,
                                         double threshold, const std::vector<ClipPlane>& clip = {});

/// Unlit front-to-back composite of `steps` half-voxel samples starting at the hit.
/// Returns premultiplied colour; steps == 0 returns the transfer colour at the hit.
Vec3 compute_albedo(const Volume& vol, const TransferFunction& tf, const Vec3& hit_position, const Vec3& direction,
                    int steps, const std::vector<ClipPlane>& clip = {});

/// Surface-aligned coloured points from rays cast inward from the bounding sphere.
std::vector<ColoredPoint> generate_point_cloud(const Volume& vol, const TransferFunction& tf, const EnvironmentMap& env,
                                               int n_points, int samples_per_point, std::uint64_t seed,
                                               const RenderSettings& base = {});

// --- denoising ---------------------------------------------------------------

struct DenoiseSettings {
  int radius = 2;
  double sigma_spatial = 1.5;
  double sigma_albedo = 0.1;
  double sigma_depth = 0.05;     // relative
  double temporal_alpha = 0.2;   // weight of the current frame in the history blend
  double depth_agreement = 0.05;  // relative depth difference admitting history
};

/// Joint-bilateral spatial filter guided by albedo and depth, optionally blended with
/// the reprojected history frame where depths agree.
FoveatedFrame denoise(const FoveatedFrame& frame, const FoveatedFrame* history, const DenoiseSettings& settings = {});

}  // namespace hfr
