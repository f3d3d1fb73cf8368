#pragma once

#include "hfr/fixtures.hpp"
#include "hfr/pathtracer.hpp"
#include "hfr/protocol.hpp"
#include "hfr/splat_model.hpp"
#include "hfr/splat_train.hpp"
#include "hfr/volume.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace hfr {

struct SessionConfig {
  Preset preset = kPresetNormal;
  int initial_resolution = 128;
  int point_count = 20000;
  int point_samples = 64;
  TrainConfig init_config = TrainConfig::initial();
  TrainConfig refine_config = TrainConfig::refinement();
  int refine_trigger = 16;  // accepted foveal views per refinement
  ViewGate gate;            // scene_extent is taken from the volume
  RenderSettings render;    // spp and clip planes are replaced per request/settings
  bool temporal_denoise = true;
  DenoiseSettings denoise;
  // Response latency on a simulated clock: a fixed cost per path sample plus measured lock waits.
  bool simulated_clock = false;
  double simulated_ns_per_sample = 200.0;
  std::uint64_t seed = 1;
};

enum class JobStatus { Idle, Initializing, Refining };

struct RequestTiming {
  std::uint64_t frame_id = 0;
  double latency_ms = 0.0;
  double render_ms = 0.0;
  double lock_wait_ms = 0.0;
  bool training_active = false;
};

struct SessionStatus {
  std::uint64_t settings_hash = 0;
  bool has_settings = false;
  std::uint64_t generation = 0;
  JobStatus job = JobStatus::Idle;
  std::size_t accepted_views = 0;  // initial + foveal
  std::size_t foveal_views = 0;
  std::size_t pending_views = 0;   // accepted since the last refinement started
  std::uint64_t frames_served = 0;
  std::uint64_t refinements = 0;
  std::uint64_t initial_views_rendered = 0;
  int initial_view_spp = 0;
};

/// Render/train state for one viewer. Pose requests are answered on the caller's thread;
/// initialization and refinement run on an internal training worker.
class Session {
 public:
  using PushFn = std::function<void(const Message&)>;

  Session(Volume volume, EnvironmentMap env, SessionConfig config);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  // Destination for unsolicited SPLAT_MODEL pushes.
  void set_push(PushFn push);

  /// Applies new render settings. `on_ack` runs before any model work is queued, so the
  /// acknowledgement always precedes the pushes it announces. Throws ServerError(kErrorSettings).
  SettingsAckMsg handle_settings_change(const RenderSettingsMsg& msg,
                                        const std::function<void(const SettingsAckMsg&)>& on_ack = {});

  /// Renders the requested view. Throws ServerError(kErrorStale) before any settings arrive.
  FoveatedFrameMsg handle_pose_request(const PoseRequestMsg& req);

  SessionStatus status() const;
  std::vector<RequestTiming> timings() const;
  std::shared_ptr<const SplatModel> model() const;

  // Waits until a model of at least `generation` exists for the current settings.
  bool wait_for_generation(std::uint64_t generation, std::chrono::milliseconds timeout) const;
  bool wait_idle(std::chrono::milliseconds timeout) const;

 private:
  enum class JobKind { Init, Refine };
  struct Job {
    JobKind kind;
    std::uint64_t epoch;
  };

  void worker_loop();
  void run_init(std::uint64_t epoch);
  void run_refine(std::uint64_t epoch);
  void schedule_refine_locked();
  void push(const Message& msg);

  const Volume volume_;
  const EnvironmentMap env_;
  SessionConfig config_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  PushFn push_;
  std::mutex push_mu_;
  std::mutex render_mu_;

  bool has_settings_ = false;
  std::uint64_t epoch_ = 0;
  std::uint64_t settings_hash_ = 0;
  std::shared_ptr<const TransferFunction> tf_;
  std::vector<ClipPlane> clip_;
  int default_spp_ = 8;
  std::vector<Camera> initial_cameras_;
  std::vector<TrainView> initial_views_;
  std::vector<TrainView> foveal_views_;
  std::size_t pending_views_ = 0;
  std::shared_ptr<const SplatModel> model_;
  std::shared_ptr<const FoveatedFrame> history_;
  std::uint64_t frames_served_ = 0;
  std::uint64_t refinements_ = 0;
  std::uint64_t initial_views_rendered_ = 0;
  std::vector<RequestTiming> timings_;

  JobStatus job_status_ = JobStatus::Idle;
  std::optional<Job> pending_job_;
  std::shared_ptr<TrainControl> active_control_;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace hfr
