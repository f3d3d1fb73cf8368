#include "hfr/benchmark.hpp"

#include "hfr/rng.hpp"
#include "hfr/server.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace hfr {

namespace {

using nlohmann::json;

Mat4 pose_from_json(const json& arr) {
  if (!arr.is_array() || arr.size() != 16) throw std::runtime_error("pose must have 16 elements");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = arr.at(static_cast<std::size_t>(r * 4 + c)).get<double>();
  }
  return m;
}

std::optional<MaskedMetrics> try_metrics(const Image& a, const Image& b) {
  try {
    return masked_metrics(a, b);
  } catch (const MetricError&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<CameraPathEntry> parse_camera_path(const std::string& text) {
  std::vector<CameraPathEntry> out;
  try {
    const json j = json::parse(text);
    if (!j.is_array()) throw std::runtime_error("camera path must be a JSON array");
    for (const auto& e : j) {
      CameraPathEntry entry;
      if (e.is_array()) {
        entry.pose = pose_from_json(e);
      } else {
        entry.pose = pose_from_json(e.at("pose"));
        if (e.contains("fov")) entry.fov_deg = e.at("fov").get<double>();
      }
      if (!(entry.fov_deg > 0.0 && entry.fov_deg < 180.0)) throw std::runtime_error("fov out of range");
      out.push_back(entry);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed camera path: ") + e.what());
  }
  return out;
}

std::vector<CameraPathEntry> load_camera_path(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open camera path " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_camera_path(ss.str());
}

std::string camera_path_to_json(const std::vector<CameraPathEntry>& path) {
  json arr = json::array();
  for (const auto& e : path) {
    json pose = json::array();
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) pose.push_back(e.pose(r, c));
    }
    arr.push_back({{"pose", pose}, {"fov", e.fov_deg}});
  }
  return arr.dump(2);
}

BenchmarkReport run_benchmark(const Volume& volume, const TransferFunction& tf, const EnvironmentMap& env,
                              const std::vector<CameraPathEntry>& path, const BenchmarkConfig& config) {
  BenchmarkReport report;
  report.volume = config.volume_name;
  report.preset = config.preset_name;
  report.display_resolution = config.display_resolution;
  report.foveal_resolution = config.foveal_resolution;
  report.foveal_fov_deg = config.foveal_fov_deg;
  report.ground_truth_spp = config.ground_truth_spp;
  report.lpips = "not computed";
  if (path.empty()) return report;

  Session session(volume, env, config.session);
  Server server(session, 0);
  Connection conn(connect_tcp("127.0.0.1", server.port()));

  std::shared_ptr<const SplatModel> model;
  const auto take_push = [&](const Message& msg) {
    if (const auto* m = std::get_if<SplatModelMsg>(&msg)) {
      model = std::make_shared<const SplatModel>(deserialize(m->data));
    } else if (const auto* e = std::get_if<ErrorMsg>(&msg)) {
      throw ServerError(e->code, e->message);
    }
  };

  conn.send(make_settings_message(tf, config.session.render.clip_planes, static_cast<std::uint16_t>(config.foveal_spp)));
  const auto deadline = std::chrono::steady_clock::now() + config.init_timeout;
  while (!model) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TimeoutError("initial model did not arrive");
    const Message msg = conn.receive(left);
    if (!std::holds_alternative<SettingsAckMsg>(msg)) take_push(msg);
  }

  RenderSettings gt_settings = config.session.render;
  gt_settings.spp = config.ground_truth_spp;

  for (std::size_t i = 0; i < path.size(); ++i) {
    Camera display;
    display.pose = path[i].pose;
    display.fov_deg = path[i].fov_deg;
    display.width = display.height = config.display_resolution;
    display.validate();
    const Camera foveal =
        make_foveal_camera(display, config.foveation_center, config.foveal_fov_deg, config.foveal_resolution);

    PoseRequestMsg req;
    req.frame_id = i + 1;
    req.pose = to_wire_pose(foveal.pose);
    req.fov_deg = static_cast<float>(foveal.fov_deg);
    req.width = req.height = static_cast<std::uint16_t>(foveal.width);
    req.spp = static_cast<std::uint16_t>(config.foveal_spp);
    req.foveation_u = static_cast<float>(config.foveation_center.x());
    req.foveation_v = static_cast<float>(config.foveation_center.y());

    const auto t0 = std::chrono::steady_clock::now();
    const FoveatedFrame frame = request_frame(conn, req, config.frame_timeout, take_push);
    const double response_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    CompositeSettings cs = config.composite;
    cs.foveation_center = config.foveation_center;
    const DisplayImage hybrid = render_hybrid(*model, &frame, display, cs, config.reprojection);
    const Image peripheral = raster_rgba(rasterize(*model, display, Vec3::Zero()));

    gt_settings.seed = mix_seed(config.session.seed, 0x6e7u, i);
    const Image truth = render_buffers(volume, tf, env, display, gt_settings, i).foreground;

    FrameRecord rec;
    rec.index = i;
    rec.frame_id = req.frame_id;
    rec.generation = model->generation;
    rec.full = try_metrics(hybrid.rgba, truth);
    const Image truth_crop = foveal_crop(truth, config.foveation_center, config.foveal_fov_deg, display);
    rec.foveal = try_metrics(foveal_crop(hybrid.rgba, config.foveation_center, config.foveal_fov_deg, display), truth_crop);
    rec.peripheral_foveal =
        try_metrics(foveal_crop(peripheral, config.foveation_center, config.foveal_fov_deg, display), truth_crop);
    rec.response_ms = response_ms;
    rec.server_render_ms = frame.render_ms;
    report.frames.push_back(rec);
  }
  server.stop();
  report.summary = summarize(report.frames);
  return report;
}

}  // namespace hfr
