#include "hfr/splat_render.hpp"

#include "hfr/parallel.hpp"
#include "hfr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hfr {

namespace detail {

using Mat23 = Eigen::Matrix<double, 2, 3>;

struct Projected {
  bool valid = false;
  Vec2 mean = Vec2::Zero();
  double ca = 0, cb = 0, cc = 0;  // conic
  double opacity = 0;
  Vec3 rgb = Vec3::Zero();
  double depth = 0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
  // Intermediates for the backward pass.
  Vec3 t = Vec3::Zero();
  Mat23 jac = Mat23::Zero();
  Mat3 sigma_cam = Mat3::Zero();
  Mat3 rot = Mat3::Identity();
  Vec3 scale = Vec3::Ones();
  Mat2 conic = Mat2::Identity();
  double base_opacity = 0;  // before dilation compensation
  double rho = 1.0;         // dilation compensation factor
  Mat2 cov_raw_inv = Mat2::Zero();
};

struct RasterState {
  Camera camera;
  Vec3 background;
  std::size_t count = 0;
  std::vector<Projected> proj;
  std::vector<int> order;                 // Gaussian indices, front to back
  std::vector<std::vector<int>> band_ranks;  // ranks (positions in order) touching each band
  std::vector<int> band_y0;
  std::vector<double> t_final;  // per pixel
  std::vector<int> n_contrib;   // per pixel: rank of the last contributor + 1
};

}  // namespace detail

namespace {

using detail::Mat23;
using detail::Projected;
using detail::RasterState;

constexpr int kBands = 16;

Projected project_gaussian(const Gaussian& g, const Camera& cam, const Mat4& view, const RasterSettings& rs) {
  Projected p;
  const Mat3 w = view.topLeftCorner<3, 3>();
  const Vec3 t = w * g.position + view.topRightCorner<3, 1>();
  const double z = -t.z();
  if (z <= cam.near) return p;
  const double f = cam.focal_px();
  p.t = t;
  p.depth = z;
  p.mean = Vec2(0.5 * cam.width + f * t.x() / z, 0.5 * cam.height - f * t.y() / z);

  p.rot = quat_to_matrix(g.rotation);
  p.scale = g.log_scale.array().exp();
  const Mat3 m = p.rot * p.scale.asDiagonal();
  const Mat3 sigma = m * m.transpose();
  p.sigma_cam = w * sigma * w.transpose();
  p.jac << f / z, 0, f * t.x() / (z * z), 0, -f / z, -f * t.y() / (z * z);
  const Mat2 cov_raw = p.jac * p.sigma_cam * p.jac.transpose();
  Mat2 cov = cov_raw;
  cov(0, 0) += rs.dilation;
  cov(1, 1) += rs.dilation;
  const double det = cov.determinant();
  if (!(det > 0.0)) return p;
  if (rs.compensate_dilation) {
    const double det_raw = cov_raw.determinant();
    if (!(det_raw > 1e-12)) return p;
    p.rho = std::sqrt(det_raw / det);
    p.cov_raw_inv << cov_raw(1, 1) / det_raw, -cov_raw(0, 1) / det_raw, -cov_raw(1, 0) / det_raw, cov_raw(0, 0) / det_raw;
  }
  p.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
  p.ca = p.conic(0, 0);
  p.cb = p.conic(0, 1);
  p.cc = p.conic(1, 1);

  const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
  const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
  const double r = rs.extent_sigmas * std::sqrt(lambda);
  p.x0 = std::max(0, static_cast<int>(std::ceil(p.mean.x() - r - 0.5)));
  p.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(p.mean.x() + r - 0.5)));
  p.y0 = std::max(0, static_cast<int>(std::ceil(p.mean.y() - r - 0.5)));
  p.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(p.mean.y() + r - 0.5)));
  if (p.x0 > p.x1 || p.y0 > p.y1) return p;
  p.base_opacity = g.opacity();
  p.opacity = p.base_opacity * p.rho;
  p.rgb = g.rgb;
  p.valid = true;
  return p;
}

// Blend weight of a projected Gaussian at a pixel; returns 0 when below the floor.
inline double splat_alpha(const Projected& p, int x, int y, const RasterSettings& rs, double* dx_out, double* dy_out,
                          double* gauss_out) {
  const double dx = x + 0.5 - p.mean.x();
  const double dy = y + 0.5 - p.mean.y();
  const double power = -0.5 * (p.ca * dx * dx + p.cc * dy * dy) - p.cb * dx * dy;
  if (power > 0.0) return 0.0;
  const double gauss = std::exp(power);
  const double alpha = std::min(rs.max_alpha, p.opacity * gauss);
  if (alpha < rs.min_weight) return 0.0;
  *dx_out = dx;
  *dy_out = dy;
  *gauss_out = gauss;
  return alpha;
}

std::shared_ptr<RasterState> prepare(const SplatModel& model, const Camera& cam, const Vec3& background,
                                     const RasterSettings& rs) {
  cam.validate();
  auto st = std::make_shared<RasterState>();
  st->camera = cam;
  st->background = background;
  st->count = model.size();
  const Mat4 view = cam.view();
  st->proj.resize(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) st->proj[i] = project_gaussian(model.gaussians[i], cam, view, rs);
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (st->proj[i].valid) st->order.push_back(static_cast<int>(i));
  }
  std::stable_sort(st->order.begin(), st->order.end(),
                   [&](int a, int b) { return st->proj[a].depth < st->proj[b].depth; });

  const int bands = std::min(kBands, cam.height);
  const int rows_per_band = (cam.height + bands - 1) / bands;
  st->band_ranks.resize(bands);
  for (int b = 0; b < bands; ++b) st->band_y0.push_back(std::min(b * rows_per_band, cam.height));
  st->band_y0.push_back(cam.height);
  for (int r = 0; r < static_cast<int>(st->order.size()); ++r) {
    const Projected& p = st->proj[st->order[r]];
    const int b0 = p.y0 / rows_per_band;
    const int b1 = std::min(bands - 1, p.y1 / rows_per_band);
    for (int b = b0; b <= b1; ++b) st->band_ranks[b].push_back(r);
  }
  return st;
}

}  // namespace

RasterOutput rasterize(const SplatModel& model, const Camera& cam, const Vec3& background, const RasterSettings& rs) {
  auto st = prepare(model, cam, background, rs);
  const int w = cam.width;
  const int h = cam.height;
  RasterOutput out;
  out.camera = cam;
  out.rgb = Image(w, h, 3);
  out.alpha = Image(w, h, 1);
  out.max_weight.assign(model.size(), 0.0);
  st->t_final.assign(static_cast<std::size_t>(w) * h, 1.0);
  st->n_contrib.assign(static_cast<std::size_t>(w) * h, 0);

  const int bands = static_cast<int>(st->band_ranks.size());
  std::vector<std::vector<double>> band_max(bands);
  parallel_for(static_cast<std::size_t>(bands), [&](std::size_t bi) {
    const int b = static_cast<int>(bi);
    const int by0 = st->band_y0[b];
    const int by1 = st->band_y0[b + 1];
    const auto& ranks = st->band_ranks[b];
    auto& bmax = band_max[b];
    bmax.assign(ranks.size(), 0.0);
    std::vector<Vec3> color(static_cast<std::size_t>(w) * (by1 - by0), Vec3::Zero());
    std::vector<char> done(color.size(), 0);
    for (std::size_t k = 0; k < ranks.size(); ++k) {
      const int rank = ranks[k];
      const Projected& p = st->proj[st->order[rank]];
      const int y0 = std::max(p.y0, by0);
      const int y1 = std::min(p.y1, by1 - 1);
      for (int y = y0; y <= y1; ++y) {
        for (int x = p.x0; x <= p.x1; ++x) {
          const std::size_t local = static_cast<std::size_t>(y - by0) * w + x;
          if (done[local]) continue;
          double dx, dy, gauss;
          const double alpha = splat_alpha(p, x, y, rs, &dx, &dy, &gauss);
          if (alpha == 0.0) continue;
          const std::size_t pix = static_cast<std::size_t>(y) * w + x;
          double& t = st->t_final[pix];
          const double next_t = t * (1.0 - alpha);
          if (next_t < rs.transmittance_floor) {
            done[local] = 1;
            continue;
          }
          const double weight = alpha * t;
          color[local] += weight * p.rgb;
          bmax[k] = std::max(bmax[k], weight);
          t = next_t;
          st->n_contrib[pix] = rank + 1;
        }
      }
    }
    for (int y = by0; y < by1; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t local = static_cast<std::size_t>(y - by0) * w + x;
        const double t = st->t_final[static_cast<std::size_t>(y) * w + x];
        for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = color[local][c] + t * background[c];
        out.alpha.at(x, y, 0) = 1.0 - t;
      }
    }
  });
  for (int b = 0; b < bands; ++b) {
    const auto& ranks = st->band_ranks[b];
    for (std::size_t k = 0; k < ranks.size(); ++k) {
      double& m = out.max_weight[st->order[ranks[k]]];
      m = std::max(m, band_max[b][k]);
    }
  }
  out.state = std::move(st);
  return out;
}

namespace {

// Partial derivatives with respect to the screen-space parameters of one Gaussian.
struct ScreenGrad {
  double mean_x = 0, mean_y = 0;
  double conic_a = 0, conic_b = 0, conic_c = 0;
  double opacity = 0;
  Vec3 rgb = Vec3::Zero();

  void add(const ScreenGrad& o) {
    mean_x += o.mean_x;
    mean_y += o.mean_y;
    conic_a += o.conic_a;
    conic_b += o.conic_b;
    conic_c += o.conic_c;
    opacity += o.opacity;
    rgb += o.rgb;
  }
};

// d R(q) / d q_k for a unit quaternion (w, x, y, z).
std::array<Mat3, 4> rotation_partials(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

GaussianGrad chain_to_parameters(const Gaussian& g, const Projected& p, const ScreenGrad& s, const Camera& cam,
                                 const Mat3& w, bool rs_compensate) {
  GaussianGrad out;
  out.rgb = s.rgb;
  const double o = p.base_opacity;
  out.opacity_logit = s.opacity * p.rho * o * (1.0 - o);

  Mat2 g_conic;
  g_conic << s.conic_a, 0.5 * s.conic_b, 0.5 * s.conic_b, s.conic_c;
  Mat2 g_cov = -p.conic * g_conic * p.conic;
  if (rs_compensate) {
    // rho^2 = det(C) / det(C + dI)  =>  d rho / dC = rho / 2 * (C^-1 - (C + dI)^-1)
    g_cov += (s.opacity * o) * (0.5 * p.rho) * (p.cov_raw_inv - p.conic);
  }
  const Mat3 g_sigma_cam = p.jac.transpose() * g_cov * p.jac;
  const Mat23 g_jac = 2.0 * g_cov * p.jac * p.sigma_cam;
  const Mat3 g_sigma = w.transpose() * g_sigma_cam * w;
  const Mat3 m = p.rot * p.scale.asDiagonal();
  const Mat3 g_m = 2.0 * g_sigma * m;
  Mat3 g_rot;
  for (int i = 0; i < 3; ++i) {
    out.log_scale[i] = g_m.col(i).dot(p.rot.col(i)) * p.scale[i];
    g_rot.col(i) = g_m.col(i) * p.scale[i];
  }
  const double qn = g.rotation.norm();
  const Vec4 qhat = g.rotation / qn;
  const auto partials = rotation_partials(qhat);
  Vec4 g_qhat;
  for (int k = 0; k < 4; ++k) g_qhat[k] = g_rot.cwiseProduct(partials[k]).sum();
  out.rotation = (g_qhat - qhat * qhat.dot(g_qhat)) / qn;

  const double f = cam.focal_px();
  const double tx = p.t.x(), ty = p.t.y(), tz = p.t.z();
  const double tz2 = tz * tz;
  const double tz3 = tz2 * tz;
  Vec3 g_t;
  g_t.x() = s.mean_x * (-f / tz) + g_jac(0, 2) * (f / tz2);
  g_t.y() = s.mean_y * (f / tz) + g_jac(1, 2) * (-f / tz2);
  g_t.z() = s.mean_x * (f * tx / tz2) + s.mean_y * (-f * ty / tz2) + g_jac(0, 0) * (f / tz2) +
            g_jac(0, 2) * (-2.0 * f * tx / tz3) + g_jac(1, 1) * (-f / tz2) + g_jac(1, 2) * (2.0 * f * ty / tz3);
  out.position = w.transpose() * g_t;
  return out;
}

}  // namespace

RasterGradients rasterize_backward(const SplatModel& model, const Camera& cam, const Vec3& background,
                                   const Image& d_rgb, const Image& d_alpha, const RasterOutput* forward,
                                   const RasterSettings& rs) {
  if (d_rgb.width != cam.width || d_rgb.height != cam.height || d_rgb.channels != 3 || d_alpha.width != cam.width ||
      d_alpha.height != cam.height || d_alpha.channels != 1) {
    throw std::invalid_argument("rasterize_backward: gradient image shape does not match the camera");
  }
  RasterOutput recomputed;
  if (forward == nullptr || !forward->state || forward->state->count != model.size() ||
      !same_camera(forward->state->camera, cam, 0.0) || forward->state->background != background) {
    recomputed = rasterize(model, cam, background, rs);
    forward = &recomputed;
  }
  const RasterState& st = *forward->state;
  const int w = cam.width;
  const int bands = static_cast<int>(st.band_ranks.size());

  std::vector<std::vector<ScreenGrad>> band_grads(bands);
  parallel_for(static_cast<std::size_t>(bands), [&](std::size_t bi) {
    const int b = static_cast<int>(bi);
    const int by0 = st.band_y0[b];
    const int by1 = st.band_y0[b + 1];
    const auto& ranks = st.band_ranks[b];
    auto& grads = band_grads[b];
    grads.assign(ranks.size(), ScreenGrad{});
    const std::size_t n_local = static_cast<std::size_t>(w) * (by1 - by0);
    std::vector<double> t_cur(n_local);
    std::vector<Vec3> behind(n_local, background);
    for (int y = by0; y < by1; ++y) {
      for (int x = 0; x < w; ++x) {
        t_cur[static_cast<std::size_t>(y - by0) * w + x] = st.t_final[static_cast<std::size_t>(y) * w + x];
      }
    }
    for (std::size_t k = ranks.size(); k-- > 0;) {
      const int rank = ranks[k];
      const Projected& p = st.proj[st.order[rank]];
      ScreenGrad& sg = grads[k];
      const int y0 = std::max(p.y0, by0);
      const int y1 = std::min(p.y1, by1 - 1);
      for (int y = y0; y <= y1; ++y) {
        for (int x = p.x0; x <= p.x1; ++x) {
          const std::size_t pix = static_cast<std::size_t>(y) * w + x;
          if (rank >= st.n_contrib[pix]) continue;
          double dx, dy, gauss;
          const double alpha = splat_alpha(p, x, y, rs, &dx, &dy, &gauss);
          if (alpha == 0.0) continue;
          const std::size_t local = static_cast<std::size_t>(y - by0) * w + x;
          const double t_i = t_cur[local] / (1.0 - alpha);
          const Vec3 dc(d_rgb.at(x, y, 0), d_rgb.at(x, y, 1), d_rgb.at(x, y, 2));
          const double da = d_alpha.at(x, y, 0);
          sg.rgb += (t_i * alpha) * dc;
          const double g_alpha = t_i * dc.dot(p.rgb - behind[local]) + da * st.t_final[pix] / (1.0 - alpha);
          behind[local] = alpha * p.rgb + (1.0 - alpha) * behind[local];
          t_cur[local] = t_i;
          if (p.opacity * gauss >= rs.max_alpha) continue;
          sg.opacity += g_alpha * gauss;
          const double g_power = g_alpha * p.opacity * gauss;
          sg.conic_a += -0.5 * dx * dx * g_power;
          sg.conic_b += -dx * dy * g_power;
          sg.conic_c += -0.5 * dy * dy * g_power;
          sg.mean_x += g_power * (p.ca * dx + p.cb * dy);
          sg.mean_y += g_power * (p.cb * dx + p.cc * dy);
        }
      }
    }
  });

  std::vector<ScreenGrad> total(model.size());
  std::vector<bool> touched(model.size(), false);
  for (int b = 0; b < bands; ++b) {
    const auto& ranks = st.band_ranks[b];
    for (std::size_t k = 0; k < ranks.size(); ++k) {
      total[st.order[ranks[k]]].add(band_grads[b][k]);
      touched[st.order[ranks[k]]] = true;
    }
  }

  RasterGradients out;
  out.gaussians.resize(model.size());
  out.mean2d_ndc.assign(model.size(), Vec2::Zero());
  out.visible.assign(model.size(), false);
  const Mat3 wrot = cam.view().topLeftCorner<3, 3>();
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!touched[i]) continue;
    const Projected& p = st.proj[i];
    out.gaussians[i] = chain_to_parameters(model.gaussians[i], p, total[i], cam, wrot, rs.compensate_dilation);
    out.mean2d_ndc[i] = Vec2(total[i].mean_x * 0.5 * cam.width, -total[i].mean_y * 0.5 * cam.height);
    out.visible[i] = forward->max_weight[i] > 0.0;
  }
  return out;
}

Vec3 random_background(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xb6u));
  return Vec3(rng.uniform(), rng.uniform(), rng.uniform());
}

AlphaTrainedRaster rasterize_alpha_trained(const SplatModel& model, const Camera& cam, std::uint64_t seed,
                                           const RasterSettings& rs) {
  const Vec3 bg = random_background(seed);
  return AlphaTrainedRaster{rasterize(model, cam, bg, rs), bg};
}

Image raster_rgba(const RasterOutput& out) {
  Image img(out.rgb.width, out.rgb.height, 4);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) img.data[p * 4 + c] = out.rgb.data[p * 3 + c];
    img.data[p * 4 + 3] = out.alpha.data[p];
  }
  return img;
}

}  // namespace hfr
