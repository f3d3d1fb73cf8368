#pragma once

// Fixtures for checking rasterizer gradients against central finite differences.

#include "hfr/rng.hpp"
#include "hfr/splat_render.hpp"

#include <algorithm>
#include <cmath>

namespace hfr::testing {

inline Camera test_camera(int size = 32, double fov = 30.0) {
  Camera cam;
  cam.pose = look_at(Vec3(0.3, 0.2, 5.0), Vec3::Zero());
  cam.fov_deg = fov;
  cam.width = cam.height = size;
  return cam;
}

inline Gaussian make_gaussian(const Vec3& pos, double scale, double opacity, const Vec3& rgb,
                       const Vec4& rot = Vec4(1, 0, 0, 0)) {
  Gaussian g;
  g.position = pos;
  g.log_scale = Vec3::Constant(std::log(scale));
  g.rotation = rot.normalized();
  g.opacity_logit = std::log(opacity / (1.0 - opacity));
  g.rgb = rgb;
  return g;
}

inline SplatModel three_gaussians() {
  SplatModel m;
  Gaussian a = make_gaussian(Vec3(-0.15, 0.1, 0.0), 0.25, 0.55, Vec3(0.8, 0.2, 0.3), Vec4(0.9, 0.2, -0.3, 0.1));
  a.log_scale = Vec3(std::log(0.3), std::log(0.18), std::log(0.22));
  Gaussian b = make_gaussian(Vec3(0.2, -0.05, -0.3), 0.3, 0.6, Vec3(0.1, 0.7, 0.4), Vec4(0.7, -0.1, 0.5, 0.3));
  b.log_scale = Vec3(std::log(0.2), std::log(0.35), std::log(0.25));
  Gaussian c = make_gaussian(Vec3(0.0, -0.2, 0.35), 0.2, 0.45, Vec3(0.3, 0.4, 0.9), Vec4(0.8, 0.4, 0.1, -0.4));
  c.log_scale = Vec3(std::log(0.15), std::log(0.22), std::log(0.3));
  m.gaussians = {a, b, c};
  return m;
}

// Scalar objective: fixed random linear functional of the rendered rgb and alpha.
struct Objective {
  Image w_rgb, w_alpha;
  double operator()(const RasterOutput& out) const {
    double s = 0.0;
    for (std::size_t i = 0; i < out.rgb.data.size(); ++i) s += w_rgb.data[i] * out.rgb.data[i];
    for (std::size_t i = 0; i < out.alpha.data.size(); ++i) s += w_alpha.data[i] * out.alpha.data[i];
    return s;
  }
};

inline Objective random_objective(int size, std::uint64_t seed) {
  Rng rng(seed);
  Objective o{Image(size, size, 3), Image(size, size, 1)};
  for (auto& v : o.w_rgb.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : o.w_alpha.data) v = rng.uniform(-1.0, 1.0);
  return o;
}

inline double* param(Gaussian& g, int k) {
  if (k < 3) return &g.position[k];
  if (k < 6) return &g.log_scale[k - 3];
  if (k < 10) return &g.rotation[k - 6];
  if (k == 10) return &g.opacity_logit;
  return &g.rgb[k - 11];
}

inline double grad_of(const GaussianGrad& g, int k) {
  if (k < 3) return g.position[k];
  if (k < 6) return g.log_scale[k - 3];
  if (k < 10) return g.rotation[k - 6];
  if (k == 10) return g.opacity_logit;
  return g.rgb[k - 11];
}


struct GradCheck {
  int total = 0;
  int good = 0;
  double worst = 0.0;
};

// Relative error |a - fd| / max(|a|, |fd|, 1e-8) per parameter coordinate; good means < 1e-3.
inline GradCheck check_raster_gradients(const SplatModel& base, const Camera& cam, const Vec3& bg, const Objective& obj,
                                        const RasterSettings& rs, double h = 1e-4) {
  const auto grads = rasterize_backward(base, cam, bg, obj.w_rgb, obj.w_alpha, nullptr, rs);
  GradCheck r;
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (int k = 0; k < 14; ++k) {
      SplatModel plus = base, minus = base;
      *param(plus.gaussians[i], k) += h;
      *param(minus.gaussians[i], k) -= h;
      const double fd = (obj(rasterize(plus, cam, bg, rs)) - obj(rasterize(minus, cam, bg, rs))) / (2 * h);
      const double an = grad_of(grads.gaussians[i], k);
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      ++r.total;
      r.good += rel < 1e-3;
      r.worst = std::max(r.worst, rel);
    }
  }
  return r;
}

}  // namespace hfr::testing
