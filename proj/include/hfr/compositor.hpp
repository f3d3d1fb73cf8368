#pragma once

#include "hfr/camera.hpp"
#include "hfr/frame.hpp"
#include "hfr/image.hpp"
#include "hfr/splat_model.hpp"
#include "hfr/splat_render.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace hfr {

struct CompositeSettings {
  double blend_band = 0.15;
  double cutout_scale = 0.9;
  Vec2 foveation_center = Vec2(0.5, 0.5);
  double cutout_depth_margin = 0.05;  // relative, beyond the foveal depth surface

  void validate() const;
};

struct ReprojectionSettings {
  int grid_resolution = 64;
  double disocclusion_ratio = 1.5;
  double disocclusion_parallax_px = 1.0;
};

/// World position on the ray through `uv` of `cam_old` at distance `d`; nullopt when d <= 0.
std::optional<Vec3> reconstruct_world(const Camera& cam_old, const Vec2& uv, double d);

struct ReprojectionGrid {
  std::uint64_t frame_id = 0;
  int resolution = 0;
  std::vector<Vec3> uvd;    // (u, v, depth); depth 0 where the source had no hit nearby
  std::vector<Vec3> world;  // after filling no-hit vertices from their neighbours
  bool empty = true;
};

ReprojectionGrid build_grid(const FoveatedFrame& frame, int resolution);

struct ReprojectedImage {
  Camera camera;
  std::uint64_t frame_id = 0;
  Image rgba;       // premultiplied
  Image depth;      // distance from the new camera, 0 = uncovered or no hit
  Image source_uv;  // 2 channels, valid where covered
  std::vector<char> covered;
  double dropped_area_px = 0.0;  // disoccluded triangles, in source pixels
};

ReprojectedImage reproject(const FoveatedFrame& frame, const Camera& cam_new, const ReprojectionSettings& settings = {});

/// Removes Gaussians whose means lie inside the scaled foveal frustum in front of the
/// foveal depth surface.
SplatModel apply_cutout(const SplatModel& model, const FoveatedFrame& frame, const CompositeSettings& settings);

/// Foveal blend weight at a source uv: 1 inside radius 1 - band, ramping to 0 at the edge.
double foveal_blend_weight(const Vec2& source_uv, double blend_band);

struct DisplayImage {
  Image rgba;  // premultiplied
  Image foveal_weight;
};

DisplayImage composite(const RasterOutput& peripheral, const ReprojectedImage& foveal, const CompositeSettings& settings);

/// Full display path: cutout, peripheral raster over black, reprojection and blend.
DisplayImage render_hybrid(const SplatModel& model, const FoveatedFrame* latest, const Camera& display,
                           const CompositeSettings& settings = {}, const ReprojectionSettings& reprojection = {});

/// Number of display frames that reuse each foveal frame.
int select_latency_mode(double target_frame_ms, double measured_render_ms);

struct DisplayTick {
  double time_ms = 0.0;
  std::int64_t frame_shown = -1;  // -1 until the first foveal frame lands
};

/// Display loop on a simulated clock against a tracer with the given per-frame render times.
/// The tracer starts a new frame as soon as the previous one completes; ticks never wait.
std::vector<DisplayTick> simulate_display(double target_frame_ms, const std::vector<double>& render_ms, int ticks);

/// Single-writer, single-reader handoff of the newest value.
template <typename T>
class LatestSlot {
 public:
  void store(std::shared_ptr<const T> value) {
    std::lock_guard lock(mu_);
    value_ = std::move(value);
  }
  std::shared_ptr<const T> load() const {
    std::lock_guard lock(mu_);
    return value_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const T> value_;
};

}  // namespace hfr
