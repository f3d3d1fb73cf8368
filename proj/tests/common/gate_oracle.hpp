#pragma once

// Independent evaluation of the view-novelty predicate, using angles instead of dot products,
// plus the camera grid and random cases both test binaries sweep.

#include "hfr/rng.hpp"
#include "hfr/splat_train.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <vector>

namespace hfr::testing {

inline bool gate_oracle(const ViewGate& gate, const std::vector<Camera>& existing, const Camera& candidate) {
  for (const auto& cam : existing) {
    const double distance = (candidate.position() - cam.position()).norm() / gate.scene_extent;
    const double cosine = std::clamp(candidate.forward().dot(cam.forward()), -1.0, 1.0);
    const double angle_deg = std::acos(cosine) * 180.0 / 3.14159265358979323846;
    if (!(distance > gate.delta_pos) && !(angle_deg > gate.theta_view_deg)) return false;
  }
  return true;
}

inline Camera gate_camera(const Vec3& position, double yaw_deg, double pitch_deg = 0.0) {
  Camera cam;
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(yaw_deg * 3.14159265358979323846 / 180.0, Vec3::UnitY()) *
                             Eigen::AngleAxisd(pitch_deg * 3.14159265358979323846 / 180.0, Vec3::UnitX()))
                                .toRotationMatrix();
  cam.pose.setIdentity();
  cam.pose.topLeftCorner<3, 3>() = r;
  cam.pose.topRightCorner<3, 1>() = position;
  return cam;
}

// 5 x 5 grid of (offset, yaw) straddling the 0.05 / 5 degree thresholds. Pairwise differences
// stay clear of the thresholds so the two evaluations cannot disagree on rounding.
inline std::vector<Camera> gate_grid(double extent) {
  const double offsets[] = {0.0, 0.021, 0.043, 0.067, 0.112};
  const double yaws[] = {0.0, 2.1, 4.3, 6.7, 11.2};
  std::vector<Camera> grid;
  for (double o : offsets) {
    for (double y : yaws) grid.push_back(gate_camera(Vec3(o * extent, 0.0, 0.0), y));
  }
  return grid;
}

struct GateCase {
  std::vector<Camera> existing;
  Camera candidate;
};

inline GateCase random_gate_case(Rng& rng, double extent) {
  auto random_camera = [&] {
    const Vec3 p(rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06));
    return gate_camera(p * extent, rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0));
  };
  GateCase c;
  const int n = static_cast<int>(rng.uniform(0.0, 9.0));
  for (int i = 0; i < n; ++i) c.existing.push_back(random_camera());
  c.candidate = random_camera();
  return c;
}

}  // namespace hfr::testing
