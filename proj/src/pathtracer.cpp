#include "hfr/pathtracer.hpp"

#include "hfr/parallel.hpp"
#include "hfr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hfr {

void RenderSettings::validate() const {
  if (spp < 1) throw std::invalid_argument("spp must be >= 1");
  if (max_bounces < 1 || max_bounces > 4) throw std::invalid_argument("max_bounces must be in [1, 4]");
  if (!(hit_alpha_threshold > 0.0 && hit_alpha_threshold < 1.0)) {
    throw std::invalid_argument("hit_alpha_threshold must be in (0, 1)");
  }
  if (albedo_march_steps < 0) throw std::invalid_argument("albedo_march_steps must be >= 0");
  if (!(extinction_scale >= 0.0)) throw std::invalid_argument("extinction_scale must be non-negative");
}

namespace {

constexpr int kBrick = 8;

// Density/extinction lookup with clip planes and a coarse brick grid of conservative
// per-brick alpha bounds used for empty-space skipping and as the delta-tracking majorant.
class Medium {
 public:
  Medium(const Volume& vol, const TransferFunction& tf, double extinction_scale, const std::vector<ClipPlane>& clip)
      : vol_(vol), tf_(tf), scale_(extinction_scale), clip_(clip), inv_(vol.local_from_world()) {
    const auto& dims = vol.dims();
    for (int a = 0; a < 3; ++a) {
      bricks_[a] = (dims[a] + kBrick - 1) / kBrick;
      brick_size_[a] = kBrick * vol.spacing()[a];
    }
    max_alpha_.assign(static_cast<std::size_t>(bricks_[0]) * bricks_[1] * bricks_[2], 0.0f);
    for (int bz = 0; bz < bricks_[2]; ++bz) {
      for (int by = 0; by < bricks_[1]; ++by) {
        for (int bx = 0; bx < bricks_[0]; ++bx) {
          float lo = 1.0f;
          float hi = 0.0f;
          // Trilinear lookups inside the brick touch one voxel beyond each face.
          for (int k = std::max(0, bz * kBrick - 1); k <= std::min(dims[2] - 1, bz * kBrick + kBrick); ++k) {
            for (int j = std::max(0, by * kBrick - 1); j <= std::min(dims[1] - 1, by * kBrick + kBrick); ++j) {
              for (int i = std::max(0, bx * kBrick - 1); i <= std::min(dims[0] - 1, bx * kBrick + kBrick); ++i) {
                const float v = vol.voxel(i, j, k);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
              }
            }
          }
          // Outside the data the density is 0, so bricks on the border also see 0.
          const bool border = bx == 0 || by == 0 || bz == 0 || (bx + 1) * kBrick >= dims[0] ||
                              (by + 1) * kBrick >= dims[1] || (bz + 1) * kBrick >= dims[2];
          if (border) lo = 0.0f;
          max_alpha_[brick_index(bx, by, bz)] = static_cast<float>(max_alpha_in(lo, hi));
        }
      }
    }
  }

  double alpha_at(const Vec3& world) const {
    for (const auto& plane : clip_) {
      if (!plane.keeps(world)) return 0.0;
    }
    const Vec3 local = transform_point(inv_, world);
    const int b = brick_of(local);
    if (b < 0 || max_alpha_[b] == 0.0f) return 0.0;
    return tf_.alpha(vol_.sample_local(local));
  }

  Vec4 rgba_at(const Vec3& world) const {
    for (const auto& plane : clip_) {
      if (!plane.keeps(world)) return Vec4::Zero();
    }
    return eval_transfer(tf_, sample_density(vol_, world));
  }

  double sigma_at(const Vec3& world) const { return scale_ * alpha_at(world); }

  // Delta tracking along origin + t*dir for t in [tmin, tmax]. Returns the collision distance.
  std::optional<double> track(const Vec3& origin, const Vec3& dir, double tmin, double tmax, Rng& rng) const {
    auto span = vol_.intersect(origin, dir);
    if (!span) return std::nullopt;
    double t_begin = std::max(tmin, span->first);
    const double t_end = std::min(tmax, span->second);
    if (t_begin >= t_end || scale_ <= 0.0) return std::nullopt;

    const Vec3 o = transform_point(inv_, origin);
    const Vec3 d = transform_dir(inv_, dir);
    // Amanatides-Woo traversal of the brick grid in local space; t stays a world distance.
    int cell[3];
    int step[3];
    double t_next[3];
    double t_delta[3];
    const Vec3 p0 = o + t_begin * d;
    for (int a = 0; a < 3; ++a) {
      cell[a] = std::clamp(static_cast<int>(std::floor(p0[a] / brick_size_[a])), 0, bricks_[a] - 1);
      if (std::abs(d[a]) < 1e-15) {
        step[a] = 0;
        t_next[a] = std::numeric_limits<double>::infinity();
        t_delta[a] = std::numeric_limits<double>::infinity();
      } else {
        step[a] = d[a] > 0 ? 1 : -1;
        const double boundary = (cell[a] + (step[a] > 0 ? 1 : 0)) * brick_size_[a];
        t_next[a] = t_begin + (boundary - p0[a]) / d[a];
        t_delta[a] = brick_size_[a] / std::abs(d[a]);
      }
    }
    double t = t_begin;
    while (t < t_end) {
      const int axis = t_next[0] < t_next[1] ? (t_next[0] < t_next[2] ? 0 : 2) : (t_next[1] < t_next[2] ? 1 : 2);
      const double seg_end = std::min(t_end, t_next[axis]);
      const double majorant = scale_ * max_alpha_[brick_index(cell[0], cell[1], cell[2])];
      if (majorant > 0.0) {
        double ts = t;
        while (true) {
          ts -= std::log(1.0 - rng.uniform()) / majorant;
          if (ts >= seg_end) break;
          const double sigma = sigma_at(origin + ts * dir);
          if (rng.uniform() * majorant < sigma) return ts;
        }
      }
      t = seg_end;
      cell[axis] += step[axis];
      if (cell[axis] < 0 || cell[axis] >= bricks_[axis]) break;
      t_next[axis] += t_delta[axis];
    }
    return std::nullopt;
  }

  // Deterministic optical depth along the ray (midpoint rule at the march step).
  double optical_depth(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const {
    auto span = vol_.intersect(origin, dir);
    if (!span || scale_ <= 0.0) return 0.0;
    const double t0 = std::max(tmin, span->first);
    const double t1 = std::min(tmax, span->second);
    const double h = vol_.march_step();
    double tau = 0.0;
    for (double t = t0; t < t1; t += h) {
      const double len = std::min(h, t1 - t);
      tau += sigma_at(origin + (t + 0.5 * len) * dir) * len;
    }
    return tau;
  }

 private:
  int brick_index(int bx, int by, int bz) const { return (bz * bricks_[1] + by) * bricks_[0] + bx; }

  int brick_of(const Vec3& local) const {
    int b[3];
    for (int a = 0; a < 3; ++a) {
      b[a] = static_cast<int>(std::floor(local[a] / brick_size_[a]));
      if (b[a] < 0 || b[a] >= bricks_[a]) return -1;
    }
    return brick_index(b[0], b[1], b[2]);
  }

  // Upper bound of the transfer alpha over densities in [lo, hi]: the piecewise-linear
  // maximum lies at an endpoint or an interior control point.
  double max_alpha_in(double lo, double hi) const {
    double m = std::max(tf_.alpha(lo), tf_.alpha(hi));
    for (const auto& p : tf_.points()) {
      if (p.density > lo && p.density < hi) m = std::max(m, p.rgba[3]);
    }
    return m;
  }

  const Volume& vol_;
  const TransferFunction& tf_;
  double scale_;
  const std::vector<ClipPlane>& clip_;
  Mat4 inv_;
  int bricks_[3];
  double brick_size_[3];
  std::vector<float> max_alpha_;
};

Vec3 sample_isotropic(Rng& rng) {
  const double z = 1.0 - 2.0 * rng.uniform();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * rng.uniform();
  return Vec3(r * std::cos(phi), r * std::sin(phi), z);
}

struct PathResult {
  Vec3 radiance = Vec3::Zero();
  bool scattered = false;
};

PathResult trace_path(const Medium& medium, const EnvironmentMap& env, Vec3 origin, Vec3 dir, double tmin, double tmax,
                      int max_bounces, Rng& rng) {
  PathResult out;
  Vec3 throughput = Vec3::Ones();
  int bounces = 0;
  while (true) {
    const auto t = medium.track(origin, dir, tmin, tmax, rng);
    if (!t) {
      out.radiance = throughput.cwiseProduct(env.lookup(dir));
      return out;
    }
    const Vec3 p = origin + *t * dir;
    const Vec4 rgba = medium.rgba_at(p);
    throughput = throughput.cwiseProduct(rgba.head<3>());
    out.scattered = true;
    if (++bounces > max_bounces || throughput.maxCoeff() <= 0.0) return out;
    origin = p;
    dir = sample_isotropic(rng);
    tmin = 0.0;
    tmax = std::numeric_limits<double>::infinity();
  }
}

std::optional<Hit> march_first_hit(const Volume& vol, const Medium& medium, const Ray& ray, double threshold) {
  auto span = vol.intersect(ray.origin, ray.dir);
  if (!span) return std::nullopt;
  const double t0 = std::max(ray.tmin, span->first);
  const double t1 = std::min(ray.tmax, span->second);
  const double h = vol.march_step();
  for (double t = t0; t <= t1; t += h) {
    const Vec3 p = ray.origin + t * ray.dir;
    if (medium.alpha_at(p) >= threshold) return Hit{p, t};
  }
  return std::nullopt;
}

Vec3 march_albedo(const Volume& vol, const Medium& medium, const Vec3& hit, const Vec3& dir, int steps) {
  if (steps == 0) return medium.rgba_at(hit).head<3>();
  const double h = vol.march_step();
  Vec3 color = Vec3::Zero();
  double acc = 0.0;
  for (int k = 0; k < steps && acc < 1.0; ++k) {
    const Vec4 s = medium.rgba_at(hit + k * h * dir);
    color += (1.0 - acc) * s[3] * s.head<3>();
    acc += (1.0 - acc) * s[3];
  }
  return color;
}

}  // namespace

std::optional<Hit> first_significant_hit(const Volume& vol, const TransferFunction& tf, const Ray& ray,
                                         double threshold, const std::vector<ClipPlane>& clip) {
  const Medium medium(vol, tf, 1.0, clip);
  return march_first_hit(vol, medium, ray, threshold);
}

Vec3 compute_albedo(const Volume& vol, const TransferFunction& tf, const Vec3& hit_position, const Vec3& direction,
                    int steps, const std::vector<ClipPlane>& clip) {
  if (steps < 0) throw std::invalid_argument("compute_albedo: steps must be >= 0");
  const Medium medium(vol, tf, 1.0, clip);
  return march_albedo(vol, medium, hit_position, direction.normalized(), steps);
}

RenderBuffers render_buffers(const Volume& vol, const TransferFunction& tf, const EnvironmentMap& env,
                             const Camera& cam, const RenderSettings& settings, std::uint64_t frame_id) {
  cam.validate();
  settings.validate();
  const Medium medium(vol, tf, settings.extinction_scale, settings.clip_planes);
  RenderBuffers out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 4), Image(cam.width, cam.height, 1),
                    Image(cam.width, cam.height, 3)};
  const Vec3 eye = cam.position();
  const double inv_spp = 1.0 / settings.spp;

  parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < cam.width; ++x) {
      const std::uint64_t pixel = static_cast<std::uint64_t>(y) * cam.width + x;
      Rng rng(mix_seed(settings.seed, frame_id, pixel));

      const Vec3 center_dir = cam.ray_direction(x + 0.5, y + 0.5);
      const double alpha = 1.0 - std::exp(-medium.optical_depth(eye, center_dir, cam.near, cam.far));
      if (auto hit = march_first_hit(vol, medium, Ray{eye, center_dir, cam.near, cam.far}, settings.hit_alpha_threshold)) {
        out.depth.at(x, y, 0) = hit->distance;
        const Vec3 albedo = march_albedo(vol, medium, hit->position, center_dir, settings.albedo_march_steps);
        for (int c = 0; c < 3; ++c) out.albedo.at(x, y, c) = albedo[c];
      }

      Vec3 radiance = Vec3::Zero();
      Vec3 foreground = Vec3::Zero();
      for (int s = 0; s < settings.spp; ++s) {
        const double jx = rng.uniform();
        const double jy = rng.uniform();
        const Vec3 dir = cam.ray_direction(x + jx, y + jy);
        const PathResult path = trace_path(medium, env, eye, dir, cam.near, cam.far, settings.max_bounces, rng);
        radiance += path.radiance;
        if (path.scattered) foreground += path.radiance;
      }
      for (int c = 0; c < 3; ++c) {
        out.radiance.at(x, y, c) = radiance[c] * inv_spp;
        out.foreground.at(x, y, c) = foreground[c] * inv_spp;
      }
      out.foreground.at(x, y, 3) = alpha;
    }
  });
  return out;
}

FoveatedFrame render(const Volume& vol, const TransferFunction& tf, const EnvironmentMap& env, const Camera& cam,
                     const RenderSettings& settings, std::uint64_t frame_id) {
  RenderBuffers buffers = render_buffers(vol, tf, env, cam, settings, frame_id);
  FoveatedFrame frame;
  frame.frame_id = frame_id;
  frame.camera = cam;
  frame.rgba = from_premultiplied(buffers.foreground);
  frame.depth = std::move(buffers.depth);
  frame.albedo = std::move(buffers.albedo);
  return frame;
}

std::vector<ColoredPoint> generate_point_cloud(const Volume& vol, const TransferFunction& tf, const EnvironmentMap& env,
                                               int n_points, int samples_per_point, std::uint64_t seed,
                                               const RenderSettings& base) {
  if (n_points < 1) throw std::invalid_argument("generate_point_cloud: n_points must be >= 1");
  if (samples_per_point < 1) throw std::invalid_argument("generate_point_cloud: samples_per_point must be >= 1");
  base.validate();
  const Medium shading(vol, tf, base.extinction_scale, base.clip_planes);
  const Vec3 center = vol.world_center();
  const double radius = vol.world_radius() * 1.01;
  const std::size_t max_attempts = static_cast<std::size_t>(n_points) * 16;

  std::vector<ColoredPoint> points;
  points.reserve(static_cast<std::size_t>(n_points));
  for (std::size_t attempt = 0; attempt < max_attempts && points.size() < static_cast<std::size_t>(n_points); ++attempt) {
    Rng rng(mix_seed(seed, 0x70c1u, attempt));
    const Vec3 dir = sample_isotropic(rng);
    const Vec3 u = dir.unitOrthogonal();
    const Vec3 v = dir.cross(u);
    const double r = radius * std::sqrt(rng.uniform());
    const double phi = 2.0 * kPi * rng.uniform();
    const Vec3 origin = center + r * (std::cos(phi) * u + std::sin(phi) * v) - 2.0 * radius * dir;

    const auto hit = march_first_hit(vol, shading, Ray{origin, dir}, base.hit_alpha_threshold);
    if (!hit) continue;
    const double alpha = 1.0 - std::exp(-shading.optical_depth(origin, dir, 0.0, std::numeric_limits<double>::infinity()));
    if (alpha <= 0.0) continue;
    Vec3 foreground = Vec3::Zero();
    for (int s = 0; s < samples_per_point; ++s) {
      const PathResult path = trace_path(shading, env, origin, dir, 0.0, std::numeric_limits<double>::infinity(),
                                         base.max_bounces, rng);
      if (path.scattered) foreground += path.radiance;
    }
    foreground /= samples_per_point;
    ColoredPoint point;
    point.position = hit->position;
    point.rgba.head<3>() = (foreground / alpha).cwiseMin(1.0).cwiseMax(0.0);
    point.rgba[3] = std::min(1.0, alpha);
    points.push_back(point);
  }
  return points;
}

}  // namespace hfr
