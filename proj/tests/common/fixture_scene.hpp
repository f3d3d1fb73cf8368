#pragma once

// Shared training fixtures: a procedural volume, its denoised 8-spp initial views, held-out
// orbit views rendered at high spp, and randomly aimed foveal views.

#include "hfr/fixtures.hpp"
#include "hfr/metrics.hpp"
#include "hfr/pathtracer.hpp"
#include "hfr/rng.hpp"
#include "hfr/splat_render.hpp"
#include "hfr/splat_train.hpp"

#include <vector>

namespace hfr::testing {

struct FixtureScene {
  Volume volume;
  TransferFunction tf = standard_transfer_function();
  EnvironmentMap env = standard_environment();
  std::uint64_t hash = 0;
  std::vector<TrainView> initial;
  std::vector<ColoredPoint> points;
  std::vector<Camera> held_out;
  std::vector<Image> held_out_truth;
};

inline constexpr int kFixtureVoxels = 128;
inline constexpr int kFixtureResolution = 128;
inline constexpr int kFixtureViews = 12;
inline constexpr int kFixtureSpp = 8;
inline constexpr int kHeldOutSpp = 256;

inline FixtureScene make_fixture_scene(ProceduralKind kind) {
  FixtureScene s;
  s.volume = make_procedural_volume(kind, {kFixtureVoxels, kFixtureVoxels, kFixtureVoxels});
  s.hash = compute_settings_hash(s.tf, {});
  RenderSettings rs;
  rs.spp = kFixtureSpp;
  const auto cams = initial_view_cameras(s.volume, kFixtureViews, kFixtureResolution);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    rs.seed = 100 + i;
    s.initial.push_back(make_train_view(denoise(render(s.volume, s.tf, s.env, cams[i], rs, i), nullptr),
                                        ViewSource::Initial, s.hash));
  }
  rs.seed = 1;
  s.points = generate_point_cloud(s.volume, s.tf, s.env, 20000, 64, 1, rs);

  // Orbit at the initial-view distance but off the Fibonacci directions.
  s.held_out = orbit_cameras(s.volume, 4, 1.5, 30.0, cams.front().fov_deg, kFixtureResolution, 20.0);
  rs.spp = kHeldOutSpp;
  rs.seed = 99;
  for (const auto& cam : s.held_out) {
    s.held_out_truth.push_back(to_premultiplied(denoise(render(s.volume, s.tf, s.env, cam, rs, 99), nullptr).rgba));
  }
  return s;
}

inline double held_out_mpsnr(const FixtureScene& s, const SplatModel& m) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.held_out.size(); ++i) {
    sum += masked_psnr(raster_rgba(rasterize(m, s.held_out[i], Vec3::Zero())), s.held_out_truth[i]);
  }
  return sum / static_cast<double>(s.held_out.size());
}

/// Foveal views taken from random display poses around the volume, 20 degrees wide.
inline std::vector<TrainView> make_foveal_views(const FixtureScene& s, int count, std::uint64_t seed) {
  Rng rng(seed);
  RenderSettings rs;
  rs.spp = kFixtureSpp;
  std::vector<TrainView> views;
  for (int i = 0; i < count; ++i) {
    const double elevation = rng.uniform(-60.0, 60.0);
    const double azimuth = rng.uniform(0.0, 360.0);
    const Camera display = orbit_cameras(s.volume, 1, 2.0, elevation, 40.0, 256, azimuth)[0];
    const Camera fov =
        make_foveal_camera(display, Vec2(rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.65)), 20.0, kFixtureResolution);
    rs.seed = 1000 + static_cast<std::uint64_t>(i);
    views.push_back(make_train_view(denoise(render(s.volume, s.tf, s.env, fov, rs, i), nullptr), ViewSource::Foveal,
                                    s.hash));
  }
  return views;
}

}  // namespace hfr::testing
