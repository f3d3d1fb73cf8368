#include "hfr/session.hpp"

#include "hfr/net.hpp"
#include "hfr/rng.hpp"

#include <algorithm>
#include <cmath>

namespace hfr {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

Session::Session(Volume volume, EnvironmentMap env, SessionConfig config)
    : volume_(std::move(volume)), env_(std::move(env)), config_(std::move(config)) {
  config_.gate.scene_extent = volume_.world_extent();
  config_.render.validate();
  config_.init_config.validate();
  config_.refine_config.validate();
  if (config_.refine_trigger < 1) throw std::invalid_argument("refine_trigger must be >= 1");
  worker_ = std::thread([this] { worker_loop(); });
}

Session::~Session() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    if (active_control_) active_control_->cancel();
  }
  cv_.notify_all();
  worker_.join();
}

void Session::set_push(PushFn push) {
  std::lock_guard lock(push_mu_);
  push_ = std::move(push);
}

void Session::push(const Message& msg) {
  std::lock_guard lock(push_mu_);
  if (push_) push_(msg);
}

SettingsAckMsg Session::handle_settings_change(const RenderSettingsMsg& msg,
                                               const std::function<void(const SettingsAckMsg&)>& on_ack) {
  TransferFunction tf;
  try {
    tf = parse_transfer_function(msg.transfer_function_json);
  } catch (const std::exception& e) {
    throw ServerError(kErrorSettings, std::string("invalid transfer function: ") + e.what());
  }
  const auto clip = to_clip_planes(msg.clip_planes);
  for (const auto& c : clip) {
    if (!(c.normal.norm() > 0.0) || !std::isfinite(c.offset)) throw ServerError(kErrorSettings, "invalid clip plane");
  }
  const std::uint64_t hash = compute_settings_hash(tf, clip);
  const int views = config_.preset.views;
  const double samples = static_cast<double>(views) * config_.initial_resolution * config_.initial_resolution *
                             config_.preset.spp +
                         static_cast<double>(config_.point_count) * config_.point_samples;
  SettingsAckMsg ack{hash, static_cast<std::uint32_t>(std::min(4e9, samples * config_.simulated_ns_per_sample * 1e-6))};

  std::shared_ptr<const SplatModel> repush;
  {
    std::lock_guard lock(mu_);
    if (has_settings_ && hash == settings_hash_) {
      ack.initial_model_eta_ms = model_ ? 0 : ack.initial_model_eta_ms;
      repush = model_;
    }
  }
  if (on_ack) on_ack(ack);
  if (repush) {
    push(SplatModelMsg{serialize(*repush)});
    return ack;
  }
  if (repush == nullptr) {
    std::lock_guard lock(mu_);
    if (has_settings_ && hash == settings_hash_) return ack;  // idempotent, initialization already queued
    ++epoch_;
    if (active_control_) active_control_->cancel();
    has_settings_ = true;
    settings_hash_ = hash;
    tf_ = std::make_shared<const TransferFunction>(std::move(tf));
    clip_ = clip;
    if (msg.spp > 0) default_spp_ = msg.spp;
    initial_cameras_ = initial_view_cameras(volume_, views, config_.initial_resolution);
    initial_views_.clear();
    foveal_views_.clear();
    pending_views_ = 0;
    model_.reset();
    history_.reset();
    pending_job_ = Job{JobKind::Init, epoch_};
  }
  cv_.notify_all();
  return ack;
}

FoveatedFrameMsg Session::handle_pose_request(const PoseRequestMsg& req) {
  const auto t0 = Clock::now();
  std::shared_ptr<const TransferFunction> tf;
  std::vector<ClipPlane> clip;
  std::shared_ptr<const FoveatedFrame> history;
  std::uint64_t epoch = 0;
  std::uint64_t hash = 0;
  int spp = 0;
  bool training_active = false;
  const auto lock_start = Clock::now();
  double lock_wait_ms = 0.0;
  {
    std::lock_guard lock(mu_);
    lock_wait_ms = ms_since(lock_start);
    if (!has_settings_) throw ServerError(kErrorStale, "no render settings have been received for this session");
    tf = tf_;
    clip = clip_;
    history = history_;
    epoch = epoch_;
    hash = settings_hash_;
    spp = req.spp > 0 ? req.spp : default_spp_;
    training_active = job_status_ != JobStatus::Idle;
  }

  Camera cam;
  try {
    cam = request_camera(req);
    cam.validate();
  } catch (const std::exception& e) {
    throw ServerError(kErrorBadRequest, std::string("invalid pose request: ") + e.what());
  }
  RenderSettings rs = config_.render;
  rs.spp = spp;
  rs.clip_planes = clip;
  rs.seed = mix_seed(config_.seed, req.frame_id);

  FoveatedFrame frame;
  const auto render_start = Clock::now();
  {
    std::lock_guard render_lock(render_mu_);
    frame = render(volume_, *tf, env_, cam, rs, req.frame_id);
    if (config_.temporal_denoise) {
      const bool usable = history && history->rgba.width == frame.rgba.width && history->rgba.height == frame.rgba.height;
      frame = denoise(frame, usable ? history.get() : nullptr, config_.denoise);
    }
  }
  const double render_ms = ms_since(render_start);
  frame.render_ms = render_ms;
  frame.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
  FoveatedFrameMsg response = to_message(frame);

  RequestTiming timing;
  timing.frame_id = req.frame_id;
  timing.render_ms = render_ms;
  timing.lock_wait_ms = lock_wait_ms;
  timing.training_active = training_active;
  if (config_.simulated_clock) {
    const double samples = static_cast<double>(cam.width) * cam.height * spp;
    timing.latency_ms = samples * config_.simulated_ns_per_sample * 1e-6 + lock_wait_ms;
  } else {
    timing.latency_ms = ms_since(t0);
  }
  response.render_ms = static_cast<float>(config_.simulated_clock ? timing.latency_ms : render_ms);

  auto shared_frame = std::make_shared<const FoveatedFrame>(std::move(frame));
  {
    std::lock_guard lock(mu_);
    timings_.push_back(timing);
    ++frames_served_;
    if (epoch == epoch_) {
      history_ = shared_frame;
      std::vector<Camera> existing = initial_cameras_;
      for (const auto& v : foveal_views_) existing.push_back(v.camera);
      if (should_add_view(config_.gate, existing, shared_frame->camera)) {
        foveal_views_.push_back(make_train_view(*shared_frame, ViewSource::Foveal, hash));
        ++pending_views_;
        schedule_refine_locked();
      }
    }
  }
  cv_.notify_all();
  return response;
}

void Session::schedule_refine_locked() {
  if (model_ && job_status_ == JobStatus::Idle && !pending_job_ &&
      pending_views_ >= static_cast<std::size_t>(config_.refine_trigger)) {
    pending_job_ = Job{JobKind::Refine, epoch_};
  }
}

void Session::worker_loop() {
  while (true) {
    Job job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || pending_job_.has_value(); });
      if (stopping_) return;
      job = *pending_job_;
      pending_job_.reset();
      if (job.epoch != epoch_) continue;
      job_status_ = job.kind == JobKind::Init ? JobStatus::Initializing : JobStatus::Refining;
      active_control_ = std::make_shared<TrainControl>();
    }
    cv_.notify_all();
    try {
      if (job.kind == JobKind::Init) {
        run_init(job.epoch);
      } else {
        run_refine(job.epoch);
      }
    } catch (const TrainingCancelled&) {
    } catch (const std::exception&) {
      // A failed job leaves the previous model in place; the next settings change retries.
    }
    {
      std::lock_guard lock(mu_);
      job_status_ = JobStatus::Idle;
      active_control_.reset();
      if (!pending_job_) schedule_refine_locked();
    }
    cv_.notify_all();
  }
}

void Session::run_init(std::uint64_t epoch) {
  std::shared_ptr<const TransferFunction> tf;
  std::vector<ClipPlane> clip;
  std::vector<Camera> cams;
  std::shared_ptr<TrainControl> control;
  std::uint64_t hash = 0;
  {
    std::lock_guard lock(mu_);
    if (epoch != epoch_) return;
    tf = tf_;
    clip = clip_;
    cams = initial_cameras_;
    control = active_control_;
    hash = settings_hash_;
  }
  RenderSettings rs = config_.render;
  rs.spp = config_.preset.spp;
  rs.clip_planes = clip;
  std::vector<TrainView> views;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    if (control->cancelled()) throw TrainingCancelled();
    rs.seed = mix_seed(config_.seed, 0x1417u, i);
    const FoveatedFrame frame = denoise(render(volume_, *tf, env_, cams[i], rs, i), nullptr, config_.denoise);
    views.push_back(make_train_view(frame, ViewSource::Initial, hash));
  }
  if (control->cancelled()) throw TrainingCancelled();
  const auto points =
      generate_point_cloud(volume_, *tf, env_, config_.point_count, config_.point_samples, config_.seed, rs);
  if (points.empty()) throw TrainError("transfer function leaves nothing visible to seed a model");
  if (control->cancelled()) throw TrainingCancelled();
  SplatModel model = initialize_model(points, views, config_.init_config, control.get());

  auto shared = std::make_shared<const SplatModel>(std::move(model));
  {
    std::lock_guard lock(mu_);
    if (epoch != epoch_) return;
    initial_views_ = std::move(views);
    initial_views_rendered_ += cams.size();
    model_ = shared;
  }
  cv_.notify_all();
  push(SplatModelMsg{serialize(*shared)});
}

void Session::run_refine(std::uint64_t epoch) {
  std::vector<TrainView> views;
  std::shared_ptr<const SplatModel> base;
  std::shared_ptr<TrainControl> control;
  {
    std::lock_guard lock(mu_);
    if (epoch != epoch_ || !model_) return;
    views = initial_views_;
    views.insert(views.end(), foveal_views_.begin(), foveal_views_.end());
    base = model_;
    control = active_control_;
    pending_views_ = 0;
  }
  SplatModel refined = refine_model(*base, views, config_.refine_config, control.get());
  auto shared = std::make_shared<const SplatModel>(std::move(refined));
  {
    std::lock_guard lock(mu_);
    if (epoch != epoch_) return;
    model_ = shared;
    ++refinements_;
  }
  cv_.notify_all();
  push(SplatModelMsg{serialize(*shared)});
}

SessionStatus Session::status() const {
  std::lock_guard lock(mu_);
  SessionStatus s;
  s.settings_hash = settings_hash_;
  s.has_settings = has_settings_;
  s.generation = model_ ? model_->generation : 0;
  s.job = job_status_;
  s.accepted_views = initial_cameras_.size() + foveal_views_.size();
  s.foveal_views = foveal_views_.size();
  s.pending_views = pending_views_;
  s.frames_served = frames_served_;
  s.refinements = refinements_;
  s.initial_views_rendered = initial_views_rendered_;
  s.initial_view_spp = config_.preset.spp;
  return s;
}

std::vector<RequestTiming> Session::timings() const {
  std::lock_guard lock(mu_);
  return timings_;
}

std::shared_ptr<const SplatModel> Session::model() const {
  std::lock_guard lock(mu_);
  return model_;
}

bool Session::wait_for_generation(std::uint64_t generation, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return model_ && model_->generation >= generation; });
}

bool Session::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return job_status_ == JobStatus::Idle && !pending_job_; });
}

}  // namespace hfr
