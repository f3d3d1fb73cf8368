#include "hfr/fixtures.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hfr {

TransferFunction standard_transfer_function() {
  return TransferFunction({
      {0.0, Vec4(0.0, 0.0, 0.0, 0.0)},
      {0.1, Vec4(0.0, 0.0, 0.0, 0.0)},
      {0.3, Vec4(0.85, 0.30, 0.25, 0.6)},
      {0.6, Vec4(0.95, 0.80, 0.60, 0.9)},
      {1.0, Vec4(1.0, 1.0, 0.95, 1.0)},
  });
}

EnvironmentMap standard_environment() {
  return EnvironmentMap::gradient(Vec3(1.0, 0.98, 0.95), Vec3(0.25, 0.25, 0.3));
}

Preset parse_preset(std::string_view name) {
  if (name == "normal") return kPresetNormal;
  if (name == "high") return kPresetHigh;
  throw std::invalid_argument("unknown preset: " + std::string(name));
}

double framing_fov_deg(const Volume& vol, double distance) {
  const double ratio = std::min(0.999, vol.world_radius() / distance);
  return std::min(170.0, 2.0 * rad_to_deg(std::asin(ratio)) * 1.05);
}

std::vector<Camera> initial_view_cameras(const Volume& vol, int count, int resolution) {
  if (count < 1) throw std::invalid_argument("initial view count must be >= 1");
  const Vec3 center = vol.world_center();
  const double radius = 1.5 * vol.world_extent();
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  std::vector<Camera> cams;
  cams.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * i;
    const Vec3 dir(r * std::cos(phi), y, r * std::sin(phi));
    Camera cam;
    cam.pose = look_at(center + radius * dir, center);
    cam.fov_deg = framing_fov_deg(vol, radius);
    cam.width = resolution;
    cam.height = resolution;
    cams.push_back(cam);
  }
  return cams;
}

std::vector<Camera> orbit_cameras(const Volume& vol, int count, double radius_factor, double elevation_deg,
                                  double fov_deg, int resolution, double phase_deg) {
  const Vec3 center = vol.world_center();
  const double radius = radius_factor * vol.world_extent();
  const double el = deg_to_rad(elevation_deg);
  std::vector<Camera> cams;
  cams.reserve(std::max(0, count));
  for (int i = 0; i < count; ++i) {
    const double az = deg_to_rad(phase_deg) + 2.0 * kPi * i / count;
    const Vec3 dir(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    Camera cam;
    cam.pose = look_at(center + radius * dir, center);
    cam.fov_deg = fov_deg;
    cam.width = resolution;
    cam.height = resolution;
    cams.push_back(cam);
  }
  return cams;
}

}  // namespace hfr
