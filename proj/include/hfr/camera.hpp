#pragma once

#include "hfr/math.hpp"

#include <optional>

namespace hfr {

/// Pinhole camera. `pose` is world-from-camera (rigid); the camera looks down -Z with +Y up.
/// Pixel coordinates run x right, y down, with pixel centers at +0.5. Normalized uv has
/// v pointing up so that NDC = 2*uv - 1.
struct Camera {
  Mat4 pose = Mat4::Identity();
  double fov_deg = 20.0;  // vertical
  int width = 512;
  int height = 512;
  double near = 0.1;
  double far = 1.0e4;

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  Mat4 view() const;
  Mat4 projection() const;
  Mat4 view_projection() const { return projection() * view(); }

  Vec3 position() const { return pose.topRightCorner<3, 1>(); }
  Vec3 forward() const { return -pose.block<3, 1>(0, 2); }
  double aspect() const { return static_cast<double>(width) / height; }
  double tan_half_fov() const { return std::tan(0.5 * deg_to_rad(fov_deg)); }
  // Focal length in pixels (square pixels).
  double focal_px() const { return 0.5 * height / tan_half_fov(); }

  // World-space unit direction through continuous pixel coordinate (px, py).
  Vec3 ray_direction(double px, double py) const;

  // Continuous pixel coordinate of a world point, or nullopt when it is not in front of the camera.
  std::optional<Vec2> project(const Vec3& world) const;
};

inline Vec2 pixel_to_uv(const Camera& cam, const Vec2& pixel) {
  return Vec2(pixel.x() / cam.width, 1.0 - pixel.y() / cam.height);
}

inline Vec2 uv_to_pixel(const Camera& cam, const Vec2& uv) {
  return Vec2(uv.x() * cam.width, (1.0 - uv.y()) * cam.height);
}

// Camera pose equality within `tol` per matrix element, plus identical intrinsics.
bool same_camera(const Camera& a, const Camera& b, double tol = 1e-9);

/// Narrow-FoV camera sharing the display camera's position, rotated to look through
/// `center_uv` of the display image.
Camera make_foveal_camera(const Camera& display, const Vec2& center_uv, double fov_deg, int resolution);

}  // namespace hfr
