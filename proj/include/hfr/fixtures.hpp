#pragma once

#include "hfr/camera.hpp"
#include "hfr/volume.hpp"

#include <string_view>
#include <vector>

namespace hfr {

/// Tissue-like ramp: transparent below 0.1, red soft tissue, pale bone-like top end.
TransferFunction standard_transfer_function();

/// Sky-to-ground gradient used for lighting in fixtures and the CLI defaults.
EnvironmentMap standard_environment();

struct Preset {
  int views = 12;
  int spp = 8;
};

inline constexpr Preset kPresetNormal{12, 8};
inline constexpr Preset kPresetHigh{16, 16};

Preset parse_preset(std::string_view name);

/// Field of view that frames the volume's bounding sphere from `distance`, with a small margin.
double framing_fov_deg(const Volume& vol, double distance);

/// Cameras on a sphere of radius 1.5x the scene extent (Fibonacci lattice directions),
/// all looking at the volume centre.
std::vector<Camera> initial_view_cameras(const Volume& vol, int count, int resolution);

/// Evenly spaced orbit around the volume centre at the given elevation.
std::vector<Camera> orbit_cameras(const Volume& vol, int count, double radius_factor, double elevation_deg,
                                  double fov_deg, int resolution, double phase_deg = 0.0);

}  // namespace hfr
