#pragma once

#include "hfr/camera.hpp"
#include "hfr/frame.hpp"
#include "hfr/image.hpp"
#include "hfr/splat_model.hpp"
#include "hfr/splat_render.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

namespace hfr {

enum class ViewSource { Initial, Foveal };

struct TrainView {
  Camera camera;
  Image rgba;  // premultiplied RGB + alpha
  ViewSource source = ViewSource::Initial;
  std::uint64_t settings_hash = 0;
};

TrainView make_train_view(const FoveatedFrame& frame, ViewSource source, std::uint64_t settings_hash);

struct TrainConfig {
  int total_iters = 700;
  int simplify_at = 95;
  int densify_from = 500;
  int densify_until = 900;
  int densify_interval = 100;

  // Base rates; position is multiplied by the scene extent and decays log-linearly to
  // lr_position_final over lr_position_steps iterations.
  double lr_position = 1.6e-4;
  double lr_position_final = 1.6e-6;
  int lr_position_steps = 30000;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;
  double lr_boost = 1.5;  // applied to scale, opacity and colour

  int target_gaussians = 10000;
  double lambda_dssim = 0.2;
  double lambda_alpha = 0.1;
  std::uint64_t seed = 1;

  double densify_grad_threshold = 2e-4;
  double split_scale_fraction = 0.01;  // of scene extent
  double max_growth = 5.0;
  // Fraction of steps drawn from the initial (full-frame) views when foveal views are present.
  // Keeps the low-resolution appearance anchored while narrow foveal crops add detail. 0 = uniform.
  double initial_view_share = 0.0;
  double prune_opacity = 0.005;

  void validate() const;
  static TrainConfig initial();
  static TrainConfig refinement();
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StaleSettingsError : TrainError {
  using TrainError::TrainError;
};

struct TrainingCancelled : std::runtime_error {
  TrainingCancelled() : std::runtime_error("training cancelled") {}
};

/// Shared between a training job and its owner. Cancellation and snapshot requests are
/// honoured between iterations.
class TrainControl {
 public:
  void cancel() { cancelled_ = true; }
  bool cancelled() const { return cancelled_; }

  // Blocks until the trainer publishes its current model or the job finishes.
  std::optional<SplatModel> request_snapshot();

  int iteration() const { return iteration_; }
  double loss() const { return loss_; }

  // Trainer side.
  void report(int iteration, double loss, const SplatModel& model);
  void finish();

 private:
  std::atomic<bool> cancelled_{false};
  std::atomic<int> iteration_{0};
  std::atomic<double> loss_{0.0};
  std::mutex mu_;
  std::condition_variable cv_;
  bool snapshot_wanted_ = false;
  bool finished_ = false;
  std::optional<SplatModel> snapshot_;
};

struct ViewGate {
  double delta_pos = 0.05;      // relative to scene extent
  double theta_view_deg = 5.0;
  double scene_extent = 1.0;    // world units
};

/// Admits the candidate iff it differs from every existing camera in position or in
/// view direction.
bool should_add_view(const ViewGate& gate, const std::vector<Camera>& existing, const Camera& candidate);

/// One isotropic Gaussian per point, sized by the mean distance to its 3 nearest neighbours.
SplatModel seed_model(const std::vector<ColoredPoint>& points, double max_scale);

SplatModel initialize_model(const std::vector<ColoredPoint>& points, const std::vector<TrainView>& views,
                            const TrainConfig& config, TrainControl* control = nullptr);

SplatModel refine_model(const SplatModel& model, const std::vector<TrainView>& views, const TrainConfig& config,
                        TrainControl* control = nullptr);

SplatModel simplify(const SplatModel& model, const std::vector<double>& importance, int target, std::uint64_t seed);

struct LossWeights {
  double lambda_dssim = 0.2;
  double lambda_alpha = 0.1;
};

struct LossResult {
  double loss = 0.0;
  Image d_rgb;
  Image d_alpha;
};

/// Loss against the view composited over `background`, with gradients for the render outputs.
LossResult compute_loss(const RasterOutput& render, const TrainView& view, const Vec3& background,
                        const LossWeights& weights);

/// Largest edge of the axis-aligned bounds of the points or Gaussian means.
double scene_extent_of(const std::vector<ColoredPoint>& points);
double scene_extent_of(const SplatModel& model);

struct CheckpointInfo {
  int iteration = 0;
  double loss = 0.0;
  int view_count = 0;
};

/// Writes `<stem>.fspl` and `<stem>.json`.
void write_checkpoint(const SplatModel& model, const CheckpointInfo& info, const std::filesystem::path& stem);

}  // namespace hfr
