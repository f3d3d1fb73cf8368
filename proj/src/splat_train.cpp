#include "hfr/splat_train.hpp"

#include "hfr/metrics.hpp"
#include "hfr/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace hfr {

TrainView make_train_view(const FoveatedFrame& frame, ViewSource source, std::uint64_t settings_hash) {
  TrainView v;
  v.camera = frame.camera;
  v.rgba = to_premultiplied(frame.rgba);
  v.source = source;
  v.settings_hash = settings_hash;
  return v;
}

void TrainConfig::validate() const {
  if (total_iters < 0) throw std::invalid_argument("total_iters must be non-negative");
  if (simplify_at >= total_iters && total_iters > 0) throw std::invalid_argument("simplify_at must precede total_iters");
  for (double lr : {lr_position, lr_position_final, lr_scale, lr_rotation, lr_opacity, lr_color, lr_boost}) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  }
  if (lr_position_steps < 1) throw std::invalid_argument("lr_position_steps must be >= 1");
  if (target_gaussians < 1) throw std::invalid_argument("target_gaussians must be >= 1");
  if (densify_interval < 1) throw std::invalid_argument("densify_interval must be >= 1");
  if (max_growth < 1.0) throw std::invalid_argument("max_growth must be >= 1");
  if (!(initial_view_share >= 0.0 && initial_view_share < 1.0)) {
    throw std::invalid_argument("initial_view_share must be in [0, 1)");
  }
}

TrainConfig TrainConfig::initial() { return TrainConfig{}; }

TrainConfig TrainConfig::refinement() {
  TrainConfig c;
  c.total_iters = 4000;
  c.simplify_at = -1;
  c.lr_boost = 1.0;
  c.initial_view_share = 0.5;
  return c;
}

// --- control -----------------------------------------------------------------

std::optional<SplatModel> TrainControl::request_snapshot() {
  std::unique_lock lock(mu_);
  if (finished_) return std::nullopt;
  snapshot_wanted_ = true;
  snapshot_.reset();
  cv_.wait(lock, [&] { return snapshot_.has_value() || finished_; });
  snapshot_wanted_ = false;
  return std::exchange(snapshot_, std::nullopt);
}

void TrainControl::report(int iteration, double loss, const SplatModel& model) {
  iteration_ = iteration;
  loss_ = loss;
  std::lock_guard lock(mu_);
  if (snapshot_wanted_ && !snapshot_) {
    snapshot_ = model;
    cv_.notify_all();
  }
}

void TrainControl::finish() {
  std::lock_guard lock(mu_);
  finished_ = true;
  cv_.notify_all();
}

// --- view gate -----------------------------------------------------------------

bool should_add_view(const ViewGate& gate, const std::vector<Camera>& existing, const Camera& candidate) {
  const double cos_theta = std::cos(deg_to_rad(gate.theta_view_deg));
  const Vec3 pos = candidate.position() / gate.scene_extent;
  const Vec3 dir = candidate.forward();
  for (const auto& cam : existing) {
    const bool moved = (pos - cam.position() / gate.scene_extent).norm() > gate.delta_pos;
    const bool turned = dir.dot(cam.forward()) < cos_theta;
    if (!moved && !turned) return false;
  }
  return true;
}

// --- seeding -------------------------------------------------------------------

namespace {

template <typename Positions>
double extent_of(const Positions& positions) {
  if (positions.empty()) return 1.0;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double e = (hi - lo).maxCoeff();
  return e > 0.0 ? e : 1.0;
}

// Mean distance to the k nearest neighbours using a uniform grid.
std::vector<double> mean_knn_distance(const std::vector<Vec3>& pts, int k) {
  const std::size_t n = pts.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 span = (hi - lo).cwiseMax(1e-9);
  const double cell = std::max(span.maxCoeff() / std::cbrt(static_cast<double>(n)), 1e-9);
  std::array<int, 3> dims;
  for (int a = 0; a < 3; ++a) dims[a] = std::max(1, static_cast<int>(span[a] / cell) + 1);
  auto cell_of = [&](const Vec3& p) {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a) c[a] = std::clamp(static_cast<int>((p[a] - lo[a]) / cell), 0, dims[a] - 1);
    return c;
  };
  auto key = [&](int x, int y, int z) { return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x; };
  const std::size_t n_cells = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<std::size_t> start(n_cells + 1, 0);
  std::vector<std::size_t> cell_idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = cell_of(pts[i]);
    cell_idx[i] = key(c[0], c[1], c[2]);
    ++start[cell_idx[i] + 1];
  }
  std::partial_sum(start.begin(), start.end(), start.begin());
  std::vector<std::size_t> sorted(n);
  {
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t i = 0; i < n; ++i) sorted[fill[cell_idx[i]]++] = i;
  }
  const int kk = static_cast<int>(std::min<std::size_t>(k, n - 1));
  const int max_ring = std::max({dims[0], dims[1], dims[2]});
  std::vector<double> best;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = cell_of(pts[i]);
    best.clear();
    for (int r = 0; r <= max_ring; ++r) {
      for (int z = c[2] - r; z <= c[2] + r; ++z) {
        for (int y = c[1] - r; y <= c[1] + r; ++y) {
          for (int x = c[0] - r; x <= c[0] + r; ++x) {
            if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != r) continue;
            if (x < 0 || y < 0 || z < 0 || x >= dims[0] || y >= dims[1] || z >= dims[2]) continue;
            const std::size_t kc = key(x, y, z);
            for (std::size_t s = start[kc]; s < start[kc + 1]; ++s) {
              const std::size_t j = sorted[s];
              if (j == i) continue;
              best.push_back((pts[j] - pts[i]).norm());
            }
          }
        }
      }
      if (static_cast<int>(best.size()) >= kk) {
        std::partial_sort(best.begin(), best.begin() + kk, best.end());
        best.resize(kk);
        // Every point within r * cell has been visited.
        if (best.back() <= r * cell) break;
      }
    }
    std::sort(best.begin(), best.end());
    const int m = std::min<int>(kk, static_cast<int>(best.size()));
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += best[j];
    out[i] = m > 0 ? sum / m : 0.0;
  }
  return out;
}

}  // namespace

double scene_extent_of(const std::vector<ColoredPoint>& points) {
  std::vector<Vec3> pos;
  pos.reserve(points.size());
  for (const auto& p : points) pos.push_back(p.position);
  return extent_of(pos);
}

double scene_extent_of(const SplatModel& model) {
  std::vector<Vec3> pos;
  pos.reserve(model.size());
  for (const auto& g : model.gaussians) pos.push_back(g.position);
  return extent_of(pos);
}

SplatModel seed_model(const std::vector<ColoredPoint>& points, double max_scale) {
  if (points.empty()) throw TrainError("cannot seed a splat model from an empty point cloud");
  std::vector<Vec3> pos;
  pos.reserve(points.size());
  for (const auto& p : points) pos.push_back(p.position);
  const auto knn = mean_knn_distance(pos, 3);
  const double fallback = 0.01 * extent_of(pos);
  SplatModel model;
  model.gaussians.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    Gaussian& g = model.gaussians[i];
    g.position = points[i].position;
    const double s = std::clamp(knn[i] > 0.0 ? knn[i] : fallback, 1e-6, max_scale);
    g.log_scale = Vec3::Constant(std::log(s));
    g.rotation = Vec4(1, 0, 0, 0);
    g.opacity_logit = 0.0;
    g.rgb = points[i].rgba.head<3>().cwiseMax(0.0).cwiseMin(1.0);
  }
  return model;
}

// --- loss ------------------------------------------------------------------------

LossResult compute_loss(const RasterOutput& render, const TrainView& view, const Vec3& background,
                        const LossWeights& weights) {
  const int w = render.rgb.width;
  const int h = render.rgb.height;
  if (view.rgba.width != w || view.rgba.height != h || view.rgba.channels != 4) {
    throw std::invalid_argument("compute_loss: view does not match the render");
  }
  const double n = static_cast<double>(w) * h;
  Image target(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = view.rgba.at(x, y, 3);
      for (int c = 0; c < 3; ++c) target.at(x, y, c) = view.rgba.at(x, y, c) + (1.0 - a) * background[c];
    }
  }
  LossResult out;
  out.d_rgb = Image(w, h, 3);
  out.d_alpha = Image(w, h, 1);

  const double w_l1 = (1.0 - weights.lambda_dssim) / (3.0 * n);
  double l1 = 0.0;
  for (std::size_t i = 0; i < target.data.size(); ++i) {
    const double d = render.rgb.data[i] - target.data[i];
    l1 += std::abs(d);
    out.d_rgb.data[i] = w_l1 * static_cast<double>((d > 0.0) - (d < 0.0));
  }
  l1 /= 3.0 * n;

  double ssim = 1.0;
  if (weights.lambda_dssim > 0.0) {
    Image g_ssim;
    ssim = ssim_with_grad(render.rgb, target, 3, &g_ssim);
    for (std::size_t i = 0; i < out.d_rgb.data.size(); ++i) out.d_rgb.data[i] -= weights.lambda_dssim * g_ssim.data[i];
  }

  double l1_alpha = 0.0;
  const double w_alpha = weights.lambda_alpha / n;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = render.alpha.at(x, y, 0) - view.rgba.at(x, y, 3);
      l1_alpha += std::abs(d);
      out.d_alpha.at(x, y, 0) = w_alpha * static_cast<double>((d > 0.0) - (d < 0.0));
    }
  }
  l1_alpha /= n;

  out.loss = (1.0 - weights.lambda_dssim) * l1 + weights.lambda_dssim * (1.0 - ssim) + weights.lambda_alpha * l1_alpha;
  return out;
}

// --- simplification --------------------------------------------------------------

namespace {

// Inclusion probabilities proportional to weight for a fixed-size sample, capped at 1.
std::vector<double> inclusion_probabilities(const std::vector<double>& w, int target) {
  std::vector<double> pi(w.size(), 0.0);
  std::vector<bool> capped(w.size(), false);
  int remaining = target;
  for (int pass = 0; pass < 64 && remaining > 0; ++pass) {
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!capped[i]) sum += w[i];
    }
    if (sum <= 0.0) break;
    bool changed = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (capped[i]) continue;
      pi[i] = remaining * w[i] / sum;
      if (pi[i] >= 1.0) {
        pi[i] = 1.0;
        capped[i] = true;
        --remaining;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return pi;
}

// Indices of the surviving Gaussians, ascending.
std::vector<std::size_t> simplify_selection(const std::vector<double>& importance, int target, std::uint64_t seed) {
  // Randomized systematic sampling: exact inclusion probabilities pi_i, so the 1/pi opacity
  // rescale in apply_selection is unbiased.
  const auto pi = inclusion_probabilities(importance, target);
  Rng rng(mix_seed(seed, 0x5137u));
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const double start = rng.uniform();
  std::vector<std::size_t> chosen;
  chosen.reserve(static_cast<std::size_t>(target));
  double cum = 0.0;
  for (std::size_t i : order) {
    const double next = cum + pi[i];
    // Selected when some start + k lies in [cum, next).
    if (pi[i] > 0.0 && std::floor(next - start) > std::floor(cum - start)) chosen.push_back(i);
    cum = next;
    if (chosen.size() == static_cast<std::size_t>(target)) break;  // guards rounding in sum(pi)
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

SplatModel apply_selection(const SplatModel& model, const std::vector<double>& importance, int target,
                           const std::vector<std::size_t>& chosen) {
  const auto pi = inclusion_probabilities(importance, target);
  SplatModel out;
  out.generation = model.generation;
  out.settings_hash = model.settings_hash;
  out.gaussians.reserve(chosen.size());
  for (std::size_t i : chosen) {
    Gaussian g = model.gaussians[i];
    if (pi[i] > 0.0 && pi[i] < 1.0) g.opacity_logit = logit(std::min(0.99, g.opacity() / pi[i]));
    out.gaussians.push_back(g);
  }
  return out;
}

}  // namespace

SplatModel simplify(const SplatModel& model, const std::vector<double>& importance, int target, std::uint64_t seed) {
  if (importance.size() != model.size()) throw std::invalid_argument("simplify: importance size mismatch");
  if (target < 1) throw std::invalid_argument("simplify: target must be >= 1");
  if (static_cast<std::size_t>(target) >= model.size()) return model;
  return apply_selection(model, importance, target, simplify_selection(importance, target, seed));
}

// --- optimization ----------------------------------------------------------------

namespace {

constexpr int kParams = 14;
using ParamVec = std::array<double, kParams>;

ParamVec pack(const GaussianGrad& g) {
  return {g.position[0], g.position[1], g.position[2], g.log_scale[0], g.log_scale[1], g.log_scale[2],
          g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3], g.opacity_logit, g.rgb[0], g.rgb[1], g.rgb[2]};
}

void apply_delta(Gaussian& g, const ParamVec& d) {
  for (int i = 0; i < 3; ++i) g.position[i] += d[i];
  for (int i = 0; i < 3; ++i) g.log_scale[i] += d[3 + i];
  for (int i = 0; i < 4; ++i) g.rotation[i] += d[6 + i];
  g.opacity_logit += d[10];
  for (int i = 0; i < 3; ++i) g.rgb[i] += d[11 + i];
}

struct AdamState {
  std::vector<ParamVec> m;
  std::vector<ParamVec> v;
  int step = 0;

  void resize(std::size_t n) {
    m.assign(n, ParamVec{});
    v.assign(n, ParamVec{});
  }

  void select(const std::vector<std::size_t>& keep_from) {
    std::vector<ParamVec> m2, v2;
    m2.reserve(keep_from.size());
    v2.reserve(keep_from.size());
    for (std::size_t i : keep_from) {
      m2.push_back(i < m.size() ? m[i] : ParamVec{});
      v2.push_back(i < v.size() ? v[i] : ParamVec{});
    }
    m = std::move(m2);
    v = std::move(v2);
  }
};

class Trainer {
 public:
  Trainer(SplatModel model, const std::vector<TrainView>& views, const TrainConfig& cfg, TrainControl* control,
          bool refine)
      : model_(std::move(model)), views_(views), cfg_(cfg), control_(control), refine_(refine),
        rng_(mix_seed(cfg.seed, refine ? 0x2e7u : 0x1d1u)) {
    extent_ = scene_extent_of(model_);
    max_log_scale_ = std::log(std::sqrt(3.0) * extent_);
    initial_count_ = model_.size();
    adam_.resize(model_.size());
    grad_accum_.assign(model_.size(), 0.0);
    grad_count_.assign(model_.size(), 0);
  }

  SplatModel run() {
    double loss = 0.0;
    for (int it = 0; it < cfg_.total_iters; ++it) {
      if (control_ != nullptr && control_->cancelled()) throw TrainingCancelled();
      loss = step(it);
      const int done = it + 1;
      if (!refine_ && done == cfg_.simplify_at) simplify_now();
      if (refine_ && done > cfg_.densify_from && done <= cfg_.densify_until &&
          (done - cfg_.densify_from) % cfg_.densify_interval == 0) {
        densify_now();
      }
      if (control_ != nullptr) control_->report(done, loss, model_);
    }
    return std::move(model_);
  }

 private:
  struct Deck {
    std::vector<std::size_t> members;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };

  std::size_t draw(Deck& d) {
    if (d.cursor >= d.order.size()) {
      d.order = d.members;
      std::shuffle(d.order.begin(), d.order.end(), rng_);
      d.cursor = 0;
    }
    return d.order[d.cursor++];
  }

  const TrainView& next_view() {
    if (all_.members.empty()) {
      for (std::size_t i = 0; i < views_.size(); ++i) {
        all_.members.push_back(i);
        (views_[i].source == ViewSource::Initial ? initial_ : foveal_).members.push_back(i);
      }
    }
    const double share = cfg_.initial_view_share;
    if (share <= 0.0 || initial_.members.empty() || foveal_.members.empty()) return views_[draw(all_)];
    const bool pick_initial = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < share;
    return views_[draw(pick_initial ? initial_ : foveal_)];
  }

  double position_lr(int it) const {
    const double t = std::min(1.0, static_cast<double>(it) / cfg_.lr_position_steps);
    return extent_ * std::exp((1.0 - t) * std::log(cfg_.lr_position) + t * std::log(cfg_.lr_position_final));
  }

  double step(int it) {
    const TrainView& view = next_view();
    const std::uint64_t bg_seed = mix_seed(cfg_.seed, refine_ ? 2 : 1, static_cast<std::uint64_t>(it));
    const auto raster = rasterize_alpha_trained(model_, view.camera, bg_seed);
    const auto loss = compute_loss(raster.output, view, raster.background, {cfg_.lambda_dssim, cfg_.lambda_alpha});
    const auto grads = rasterize_backward(model_, view.camera, raster.background, loss.d_rgb, loss.d_alpha,
                                          &raster.output);
    const int done = it + 1;
    if (refine_ && done > cfg_.densify_from && done <= cfg_.densify_until) {
      for (std::size_t i = 0; i < model_.size(); ++i) {
        if (!grads.visible[i]) continue;
        grad_accum_[i] += grads.mean2d_ndc[i].norm();
        ++grad_count_[i];
      }
    }

    ParamVec lr;
    const double pos_lr = position_lr(it);
    for (int i = 0; i < 3; ++i) lr[i] = pos_lr;
    for (int i = 3; i < 6; ++i) lr[i] = cfg_.lr_scale * cfg_.lr_boost;
    for (int i = 6; i < 10; ++i) lr[i] = cfg_.lr_rotation;
    lr[10] = cfg_.lr_opacity * cfg_.lr_boost;
    for (int i = 11; i < 14; ++i) lr[i] = cfg_.lr_color * cfg_.lr_boost;

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-15;
    ++adam_.step;
    const double c1 = 1.0 - std::pow(b1, adam_.step);
    const double c2 = 1.0 - std::pow(b2, adam_.step);
    for (std::size_t i = 0; i < model_.size(); ++i) {
      const ParamVec g = pack(grads.gaussians[i]);
      ParamVec& m = adam_.m[i];
      ParamVec& v = adam_.v[i];
      ParamVec delta;
      for (int k = 0; k < kParams; ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        delta[k] = -lr[k] * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
      Gaussian& gs = model_.gaussians[i];
      apply_delta(gs, delta);
      gs.rotation.normalize();
      gs.rgb = gs.rgb.cwiseMax(0.0).cwiseMin(1.0);
      gs.log_scale = gs.log_scale.cwiseMin(max_log_scale_);
      gs.opacity_logit = std::clamp(gs.opacity_logit, -15.0, 15.0);
    }
    return loss.loss;
  }

  void simplify_now() {
    if (model_.size() <= static_cast<std::size_t>(cfg_.target_gaussians)) return;
    std::vector<double> importance(model_.size(), 0.0);
    for (const auto& view : views_) {
      const auto out = rasterize(model_, view.camera, Vec3::Zero());
      for (std::size_t i = 0; i < importance.size(); ++i) importance[i] = std::max(importance[i], out.max_weight[i]);
    }
    const auto kept = simplify_selection(importance, cfg_.target_gaussians, mix_seed(cfg_.seed, 95));
    if (kept.empty()) return;
    model_ = apply_selection(model_, importance, cfg_.target_gaussians, kept);
    adam_.select(kept);
  }

  void densify_now() {
    const std::size_t n = model_.size();
    const std::size_t cap = static_cast<std::size_t>(std::floor(cfg_.max_growth * initial_count_));
    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t i = 0; i < n; ++i) {
      if (grad_count_[i] == 0) continue;
      const double avg = grad_accum_[i] / grad_count_[i];
      if (avg >= cfg_.densify_grad_threshold) candidates.emplace_back(avg, i);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    const std::size_t budget = cap > n ? cap - n : 0;
    if (candidates.size() > budget) candidates.resize(budget);

    std::vector<char> split(n, 0);
    std::vector<Gaussian> added;
    const double split_threshold = cfg_.split_scale_fraction * extent_;
    for (const auto& [avg, i] : candidates) {
      const Gaussian g = model_.gaussians[i];
      if (g.log_scale.array().exp().maxCoeff() > split_threshold) {
        split[i] = 1;
        const Mat3 r = quat_to_matrix(g.rotation);
        const Vec3 s = g.log_scale.array().exp();
        for (int c = 0; c < 2; ++c) {
          std::normal_distribution<double> normal(0.0, 1.0);
          const Vec3 z(normal(rng_), normal(rng_), normal(rng_));
          Gaussian child = g;
          child.position = g.position + r * s.cwiseProduct(z);
          child.log_scale = g.log_scale.array() - std::log(1.6);
          added.push_back(child);
        }
      } else {
        // Original keeps its optimizer state; together the pair covers what it did: 1 - (1 - o')^2 = o.
        Gaussian& orig = model_.gaussians[i];
        orig.opacity_logit = logit(std::max(1.0 - std::sqrt(1.0 - orig.opacity()), 1e-6));
        added.push_back(orig);
      }
    }

    std::vector<Gaussian> next;
    std::vector<std::size_t> source;
    next.reserve(n + added.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (split[i] || model_.gaussians[i].opacity() < cfg_.prune_opacity) continue;
      next.push_back(model_.gaussians[i]);
      source.push_back(i);
    }
    for (const auto& g : added) {
      next.push_back(g);
      source.push_back(std::numeric_limits<std::size_t>::max());
    }
    if (next.empty()) return;
    adam_.select(source);
    model_.gaussians = std::move(next);
    grad_accum_.assign(model_.size(), 0.0);
    grad_count_.assign(model_.size(), 0);
  }

  SplatModel model_;
  const std::vector<TrainView>& views_;
  TrainConfig cfg_;
  TrainControl* control_;
  bool refine_;
  Rng rng_;
  double extent_ = 1.0;
  double max_log_scale_ = 0.0;
  std::size_t initial_count_ = 0;
  AdamState adam_;
  std::vector<double> grad_accum_;
  std::vector<int> grad_count_;
  Deck all_, initial_, foveal_;
};

std::uint64_t common_hash(const std::vector<TrainView>& views) {
  const std::uint64_t h = views.front().settings_hash;
  for (const auto& v : views) {
    if (v.settings_hash != h) throw StaleSettingsError("training views were rendered with different settings");
    if (v.rgba.channels != 4 || v.rgba.width != v.camera.width || v.rgba.height != v.camera.height) {
      throw TrainError("training view image does not match its camera");
    }
  }
  return h;
}

// Runs the trainer and always signals completion to the control, including on cancellation.
SplatModel run_trainer(SplatModel model, const std::vector<TrainView>& views, const TrainConfig& cfg,
                       TrainControl* control, bool refine) {
  struct FinishGuard {
    TrainControl* c;
    ~FinishGuard() {
      if (c != nullptr) c->finish();
    }
  } guard{control};
  Trainer trainer(std::move(model), views, cfg, control, refine);
  return trainer.run();
}

}  // namespace

SplatModel initialize_model(const std::vector<ColoredPoint>& points, const std::vector<TrainView>& views,
                            const TrainConfig& config, TrainControl* control) {
  config.validate();
  if (points.empty()) throw TrainError("initialize_model needs a non-empty point cloud");
  if (views.size() < 4) throw TrainError("initialize_model needs at least 4 views");
  const std::uint64_t hash = common_hash(views);
  const double diagonal = std::sqrt(3.0) * scene_extent_of(points);
  SplatModel seeded = seed_model(points, diagonal);
  seeded.settings_hash = hash;
  SplatModel out = run_trainer(std::move(seeded), views, config, control, false);
  out.generation = 1;
  out.settings_hash = hash;
  return out;
}

SplatModel refine_model(const SplatModel& model, const std::vector<TrainView>& views, const TrainConfig& config,
                        TrainControl* control) {
  config.validate();
  if (model.empty()) throw TrainError("refine_model needs a non-empty model");
  if (views.empty()) throw TrainError("refine_model needs training views");
  const std::uint64_t hash = common_hash(views);
  if (hash != model.settings_hash) throw StaleSettingsError("model and views were produced with different settings");
  SplatModel out = run_trainer(model, views, config, control, true);
  out.generation = model.generation + 1;
  out.settings_hash = model.settings_hash;
  return out;
}

void write_checkpoint(const SplatModel& model, const CheckpointInfo& info, const std::filesystem::path& stem) {
  const auto bytes = serialize(model);
  auto splat_path = stem;
  splat_path += ".fspl";
  std::ofstream out(splat_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + splat_path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));

  nlohmann::json meta = {{"iteration", info.iteration},
                         {"loss", info.loss},
                         {"view_count", info.view_count},
                         {"generation", model.generation},
                         {"settings_hash", model.settings_hash},
                         {"gaussians", model.size()}};
  auto meta_path = stem;
  meta_path += ".json";
  std::ofstream meta_out(meta_path);
  if (!meta_out) throw std::runtime_error("cannot write checkpoint metadata " + meta_path.string());
  meta_out << meta.dump(2) << '\n';
}

}  // namespace hfr
