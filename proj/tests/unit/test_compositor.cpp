#include <doctest.h>

#include "hfr/compositor.hpp"
#include "hfr/fixtures.hpp"
#include "hfr/metrics.hpp"
#include "hfr/pathtracer.hpp"
#include "hfr/rng.hpp"

#include <cmath>
#include <thread>

using namespace hfr;

namespace {

Camera camera_at(const Vec3& eye, const Vec3& target, int size, double fov) {
  Camera cam;
  cam.pose = look_at(eye, target);
  cam.fov_deg = fov;
  cam.width = cam.height = size;
  return cam;
}

// Frame of the plane z = 0 (plus an optional nearer square at z = step_z for |x|,|y| < step_half)
// with a smooth colour pattern, opaque everywhere. Depth is the exact ray distance.
FoveatedFrame synthetic_frame(const Camera& cam, double step_z = 0.0, double step_half = 0.0) {
  FoveatedFrame f;
  f.camera = cam;
  f.rgba = Rgba8Image(cam.width, cam.height);
  f.depth = Image(cam.width, cam.height, 1);
  f.albedo = Image(cam.width, cam.height, 3);
  const Vec3 eye = cam.position();
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 dir = cam.ray_direction(x + 0.5, y + 0.5);
      double t = -eye.z() / dir.z();
      if (step_half > 0.0) {
        const double ts = (step_z - eye.z()) / dir.z();
        const Vec3 p = eye + ts * dir;
        if (std::abs(p.x()) < step_half && std::abs(p.y()) < step_half) t = ts;
      }
      const Vec3 p = eye + t * dir;
      f.depth.at(x, y, 0) = t;
      f.rgba.at(x, y, 0) = to_unorm8(0.5 + 0.4 * std::sin(0.7 * p.x()));
      f.rgba.at(x, y, 1) = to_unorm8(0.5 + 0.4 * std::cos(0.5 * p.y()));
      f.rgba.at(x, y, 2) = to_unorm8(0.3 + 0.2 * std::sin(0.3 * (p.x() + p.y())));
      f.rgba.at(x, y, 3) = 255;
    }
  }
  return f;
}

RasterOutput flat_layer(const Camera& cam, const Vec3& rgb, double alpha) {
  RasterOutput r;
  r.camera = cam;
  r.rgb = Image(cam.width, cam.height, 3);
  r.alpha = Image(cam.width, cam.height, 1, alpha);
  for (std::size_t i = 0; i < r.rgb.data.size(); ++i) r.rgb.data[i] = rgb[static_cast<int>(i % 3)];
  return r;
}

}  // namespace

TEST_CASE("reconstruct_world") {
  Camera cam;
  cam.pose = Mat4::Identity();
  cam.fov_deg = 40.0;
  cam.width = cam.height = 64;
  const auto centre = reconstruct_world(cam, Vec2(0.5, 0.5), 5.0);
  REQUIRE(centre.has_value());
  CHECK((*centre - Vec3(0, 0, -5)).norm() < 1e-9);
  const auto far_pt = reconstruct_world(cam, Vec2(0.5, 0.5), cam.far);
  CHECK((*far_pt - Vec3(0, 0, -cam.far)).norm() < 1e-6 * cam.far);
  CHECK_FALSE(reconstruct_world(cam, Vec2(0.3, 0.3), 0.0).has_value());
  CHECK_FALSE(reconstruct_world(cam, Vec2(0.3, 0.3), -1.0).has_value());

  SUBCASE("round trip through projection for random cameras") {
    Rng rng(17);
    int failures = 0;
    for (int i = 0; i < 500; ++i) {
      Camera c;
      const Vec3 eye(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50));
      const Vec3 target = eye + Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      c.pose = look_at(eye, target);
      c.fov_deg = rng.uniform(10.0, 100.0);
      c.width = 64 + static_cast<int>(rng.uniform(0, 200));
      c.height = 64 + static_cast<int>(rng.uniform(0, 200));
      const Vec2 uv(rng.uniform(), rng.uniform());
      const double d = rng.uniform(0.5, 200.0);
      const Vec3 p = *reconstruct_world(c, uv, d);
      const auto px = c.project(p);
      if (!px) {
        ++failures;
        continue;
      }
      const Vec2 back = pixel_to_uv(c, *px);
      failures += (back - uv).cwiseAbs().maxCoeff() > 1e-4 || std::abs((p - c.position()).norm() - d) > 1e-4;
    }
    CHECK(failures == 0);
  }
}

TEST_CASE("identity reprojection reproduces the source") {
  const Camera cam = camera_at(Vec3(1, 2, 20), Vec3::Zero(), 96, 30.0);
  const FoveatedFrame f = synthetic_frame(cam);
  const ReprojectedImage r = reproject(f, cam);
  const Image src = to_premultiplied(f.rgba);
  double max_err = 0.0, max_depth_rel = 0.0;
  int covered = 0;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      if (!r.covered[static_cast<std::size_t>(y) * cam.width + x]) continue;
      ++covered;
      for (int c = 0; c < 4; ++c) max_err = std::max(max_err, std::abs(r.rgba.at(x, y, c) - src.at(x, y, c)));
      // Vertex depth is sampled bilinearly from the pixel grid, so agreement is to ~1e-3.
      max_depth_rel = std::max(max_depth_rel, std::abs(r.depth.at(x, y, 0) / f.depth.at(x, y, 0) - 1.0));
    }
  }
  // The grid spans pixel centres at uv 0..1, so all but a half-pixel rim is covered.
  CHECK(covered >= (cam.width - 2) * (cam.height - 2));
  CHECK(max_err < 1e-6);
  CHECK(max_depth_rel < 2e-3);
  CHECK(masked_psnr(r.rgba, src) >= 40.0);
  CHECK(r.dropped_area_px == 0.0);
}

TEST_CASE("no-hit regions carry zero alpha") {
  const Camera cam = camera_at(Vec3(0, 0, 20), Vec3::Zero(), 48, 30.0);
  FoveatedFrame f = synthetic_frame(cam);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 24; ++x) {
      f.depth.at(x, y, 0) = 0.0;
      f.rgba.at(x, y, 3) = 0;
    }
  }
  const ReprojectedImage r = reproject(f, cam);
  for (int y = 2; y < 46; ++y) {
    for (int x = 0; x < 22; ++x) CHECK(r.rgba.at(x, y, 3) == 0.0);
    for (int x = 26; x < 46; ++x) CHECK(r.rgba.at(x, y, 3) == doctest::Approx(1.0));
  }
}

TEST_CASE("forward translation magnifies content and opens disocclusions") {
  const Camera cam = camera_at(Vec3(0, 0, 20), Vec3::Zero(), 96, 30.0);
  const FoveatedFrame f = synthetic_frame(cam, 8.0, 2.0);
  Camera closer = cam;
  closer.pose(2, 3) -= 4.0;
  const ReprojectedImage r = reproject(f, closer);
  CHECK(r.dropped_area_px > 0.0);

  // The near square's projected width grows as the camera approaches.
  auto square_width = [](const Image& depth, double threshold) {
    int count = 0;
    const int y = depth.height / 2;
    for (int x = 0; x < depth.width; ++x) count += depth.at(x, y, 0) > 0.0 && depth.at(x, y, 0) < threshold;
    return count;
  };
  CHECK(square_width(r.depth, 14.0) > square_width(f.depth, 14.0));

  SUBCASE("dropped area is non-decreasing in translation") {
    double prev = 0.0;
    for (double t : {0.0, 1.0, 2.0, 4.0, 6.0, 8.0}) {
      Camera moved = cam;
      moved.pose(0, 3) += t;
      const double dropped = reproject(f, moved).dropped_area_px;
      CAPTURE(t);
      CHECK(dropped >= prev);
      prev = dropped;
    }
    CHECK(prev > 0.0);
  }
}

TEST_CASE("wall fixture: dropped area is non-decreasing in translation") {
  const Volume wall = make_procedural_volume(ProceduralKind::Wall, {48, 48, 48});
  const Camera cam = camera_at(Vec3(0, 0, 80), Vec3::Zero(), 64, 30.0);
  RenderSettings rs;
  rs.spp = 1;
  const FoveatedFrame f = render(wall, standard_transfer_function(), standard_environment(), cam, rs);
  double prev = 0.0;
  for (double t : {0.0, 2.0, 4.0, 8.0, 16.0}) {
    Camera moved = cam;
    moved.pose(0, 3) += t;
    const double dropped = reproject(f, moved).dropped_area_px;
    CAPTURE(t);
    CHECK(dropped >= prev);
    prev = dropped;
  }
}

TEST_CASE("composite blends foveal over peripheral") {
  const Camera cam = camera_at(Vec3(0, 0, 20), Vec3::Zero(), 64, 30.0);
  const FoveatedFrame f = synthetic_frame(cam);
  const ReprojectedImage fov = reproject(f, cam);
  const RasterOutput per = flat_layer(cam, Vec3(0.1, 0.2, 0.3), 0.6);
  const CompositeSettings cs;
  const DisplayImage out = composite(per, fov, cs);

  // Centre: weight 1, opaque foveal wins.
  for (int c = 0; c < 4; ++c) CHECK(out.rgba.at(32, 32, c) == doctest::Approx(fov.rgba.at(32, 32, c)));
  CHECK(out.foveal_weight.at(32, 32, 0) == doctest::Approx(1.0));

  // Partition of unity everywhere, recomputed independently.
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * 64 + x;
      const double w =
          fov.covered[p] ? foveal_blend_weight(Vec2(fov.source_uv.at(x, y, 0), fov.source_uv.at(x, y, 1)), cs.blend_band)
                         : 0.0;
      const double wf = w * fov.rgba.at(x, y, 3);
      const double wp = 1.0 - wf;
      CHECK(wf + wp == doctest::Approx(1.0));
      CHECK(out.foveal_weight.at(x, y, 0) == doctest::Approx(wf));
      for (int c = 0; c < 3; ++c) {
        CHECK(out.rgba.at(x, y, c) == doctest::Approx(w * fov.rgba.at(x, y, c) + wp * per.rgb.at(x, y, c)));
      }
    }
  }

  SUBCASE("pixels outside the foveal extent show the periphery") {
    Camera wide = cam;
    wide.fov_deg = 90.0;
    const ReprojectedImage fw = reproject(f, wide);
    const RasterOutput pw = flat_layer(wide, Vec3(0.1, 0.2, 0.3), 0.6);
    const DisplayImage o = composite(pw, fw, cs);
    for (int c = 0; c < 3; ++c) CHECK(o.rgba.at(1, 1, c) == doctest::Approx(pw.rgb.at(1, 1, c)));
    CHECK(o.rgba.at(1, 1, 3) == doctest::Approx(0.6));
  }
  SUBCASE("camera mismatch is an error") {
    Camera other = cam;
    other.pose(0, 3) += 1.0;
    CHECK_THROWS(composite(flat_layer(other, Vec3::Zero(), 1.0), fov, cs));
  }
}

TEST_CASE("foveal blend weight ramps linearly over the band") {
  CHECK(foveal_blend_weight(Vec2(0.5, 0.5), 0.15) == 1.0);
  CHECK(foveal_blend_weight(Vec2(0.5 + 0.5 * 0.85, 0.5), 0.15) == doctest::Approx(1.0));
  CHECK(foveal_blend_weight(Vec2(0.5 + 0.5 * 0.925, 0.5), 0.15) == doctest::Approx(0.5));
  CHECK(foveal_blend_weight(Vec2(1.0, 0.5), 0.15) == doctest::Approx(0.0));
  CHECK(foveal_blend_weight(Vec2(1.0, 1.0), 0.15) == 0.0);
}

TEST_CASE("cutout removes splats in front of the foveal surface") {
  const Camera cam = camera_at(Vec3(0, 0, 20), Vec3::Zero(), 64, 30.0);
  const FoveatedFrame f = synthetic_frame(cam);
  SplatModel m;
  Gaussian intruder;  // on the axis, between camera and plane
  intruder.position = Vec3(0, 0, 5);
  intruder.log_scale = Vec3::Constant(std::log(0.8));
  intruder.opacity_logit = 5.0;
  intruder.rgb = Vec3(1, 0, 1);
  Gaussian behind = intruder;  // behind the foveal surface
  behind.position = Vec3(0.5, 0.5, -6);
  Gaussian outside = intruder;  // outside the scaled frustum
  outside.position = Vec3(30, 0, 0);
  m.gaussians = {intruder, behind, outside};

  const CompositeSettings cs;
  const SplatModel cut = apply_cutout(m, f, cs);
  REQUIRE(cut.size() == 2);
  CHECK(cut.gaussians[0].position == behind.position);
  CHECK(cut.gaussians[1].position == outside.position);

  // The hybrid display shows the foveal pixel, not the magenta intruder.
  const DisplayImage out = render_hybrid(m, &f, cam, cs);
  const Image src = to_premultiplied(f.rgba);
  for (int c = 0; c < 4; ++c) CHECK(out.rgba.at(32, 32, c) == doctest::Approx(src.at(32, 32, c)).epsilon(1e-6));

  // Without a foveal frame the splat model alone is drawn.
  const DisplayImage bare = render_hybrid(m, nullptr, cam, cs);
  CHECK(bare.rgba.at(32, 32, 0) > 0.5);
  CHECK(bare.rgba.at(32, 32, 1) < 0.1);
}

TEST_CASE("latency mode and display cadence") {
  CHECK(select_latency_mode(13.9, 17.0) == 2);
  CHECK(select_latency_mode(13.9, 5.0) == 1);
  CHECK(select_latency_mode(10.0, 30.0) == 3);
  CHECK_THROWS(select_latency_mode(0.0, 5.0));

  // Render time spikes tenfold: the reuse factor grows, ticks stay on the 13.9 ms grid.
  std::vector<double> render_ms(20, 10.0);
  for (int i = 8; i < 12; ++i) render_ms[i] = 100.0;
  const auto ticks = simulate_display(13.9, render_ms, 150);
  REQUIRE(ticks.size() == 150);
  for (std::size_t k = 0; k < ticks.size(); ++k) CHECK(ticks[k].time_ms == doctest::Approx(13.9 * k));
  CHECK(select_latency_mode(13.9, 100.0) > select_latency_mode(13.9, 10.0));
  // A spiked frame is shown for several consecutive ticks.
  int longest = 0, run = 0;
  for (std::size_t k = 1; k < ticks.size(); ++k) {
    run = ticks[k].frame_shown == ticks[k - 1].frame_shown ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  CHECK(longest >= 6);
  for (std::size_t k = 1; k < ticks.size(); ++k) CHECK(ticks[k].frame_shown >= ticks[k - 1].frame_shown);
  CHECK(ticks.front().frame_shown == -1);
}

TEST_CASE("latest slot hands over the newest value") {
  LatestSlot<int> slot;
  CHECK(slot.load() == nullptr);
  std::thread writer([&] {
    for (int i = 0; i < 1000; ++i) slot.store(std::make_shared<const int>(i));
  });
  int last = -1;
  for (int i = 0; i < 1000; ++i) {
    if (auto v = slot.load()) {
      CHECK(*v >= last);
      last = *v;
    }
  }
  writer.join();
  CHECK(*slot.load() == 999);
}

TEST_CASE("composite settings are validated") {
  CompositeSettings cs;
  cs.blend_band = 0.0;
  CHECK_THROWS(cs.validate());
  cs = CompositeSettings{};
  cs.cutout_scale = 1.0;
  CHECK_THROWS(cs.validate());
}
