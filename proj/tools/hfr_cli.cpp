#include "hfr/benchmark.hpp"
#include "hfr/fixtures.hpp"
#include "hfr/pathtracer.hpp"
#include "hfr/server.hpp"
#include "hfr/session.hpp"
#include "hfr/ws_relay.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

hfr::Camera default_camera(const hfr::Volume& vol, int width, int height) {
  hfr::Camera cam = hfr::initial_view_cameras(vol, 1, width).front();
  cam.width = width;
  cam.height = height;
  return cam;
}

int run_serve(const std::string& volume_path, const std::string& tf_path, int port, const std::string& preset,
              int relay_port, int http_port, const std::string& static_dir, bool public_bind) {
  hfr::SessionConfig cfg;
  cfg.preset = hfr::parse_preset(preset);
  hfr::Volume vol = hfr::load_volume(volume_path);
  const hfr::TransferFunction tf = hfr::load_transfer_function(tf_path);

  hfr::Session session(std::move(vol), hfr::standard_environment(), cfg);
  // Start building the model for the configured transfer function right away; a client
  // sending the same settings gets an immediate acknowledgement.
  session.handle_settings_change(hfr::make_settings_message(tf, {}, 8));

  hfr::Server server(session, static_cast<std::uint16_t>(port), !public_bind);
  std::unique_ptr<hfr::WsRelay> relay;
  if (relay_port > 0) {
    relay = std::make_unique<hfr::WsRelay>(static_cast<std::uint16_t>(relay_port), "127.0.0.1", server.port(),
                                           !public_bind);
  }

  httplib::Server http;
  std::thread http_thread;
  if (http_port > 0) {
    if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) {
      http.set_mount_point("/viewer", static_dir);
      http.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/viewer/"); });
    } else if (!static_dir.empty()) {
      std::cerr << "static directory " << static_dir << " not found; serving status only\n";
    }
    const int proto_port = server.port();
    const int ws_port = relay ? relay->port() : 0;
    http.Get("/status.json", [&session, proto_port, ws_port](const httplib::Request&, httplib::Response& res) {
      const hfr::SessionStatus s = session.status();
      char body[512];
      std::snprintf(body, sizeof(body),
                    "{\"protocol_port\":%d,\"relay_port\":%d,\"generation\":%llu,\"frames_served\":%llu,"
                    "\"accepted_views\":%zu,\"refinements\":%llu}",
                    proto_port, ws_port, static_cast<unsigned long long>(s.generation),
                    static_cast<unsigned long long>(s.frames_served), s.accepted_views,
                    static_cast<unsigned long long>(s.refinements));
      res.set_content(body, "application/json");
    });
    if (!http.bind_to_port(public_bind ? "0.0.0.0" : "127.0.0.1", http_port)) {
      std::cerr << "cannot bind HTTP port " << http_port << '\n';
      return 1;
    }
    http_thread = std::thread([&http] { http.listen_after_bind(); });
  }

  std::cout << "protocol port " << server.port();
  if (relay) std::cout << ", websocket relay port " << relay->port();
  if (http_port > 0) std::cout << ", http port " << http_port;
  std::cout << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));

  if (http_thread.joinable()) {
    http.stop();
    http_thread.join();
  }
  if (relay) relay->stop();
  server.stop();
  return 0;
}

int run_bench(const std::string& volume_path, const std::string& tf_path, const std::string& path_file,
              const std::string& out, const std::string& preset, int display_res, int foveal_res, int foveal_spp,
              int gt_spp, std::uint64_t seed) {
  hfr::BenchmarkConfig cfg;
  cfg.session.preset = hfr::parse_preset(preset);
  cfg.session.seed = seed;
  cfg.preset_name = preset;
  cfg.volume_name = std::filesystem::path(volume_path).filename().string();
  cfg.display_resolution = display_res;
  cfg.foveal_resolution = foveal_res;
  cfg.foveal_spp = foveal_spp;
  cfg.ground_truth_spp = gt_spp;
  const auto path = hfr::load_camera_path(path_file);
  const hfr::Volume vol = hfr::load_volume(volume_path);
  const hfr::TransferFunction tf = hfr::load_transfer_function(tf_path);
  const hfr::BenchmarkReport report = hfr::run_benchmark(vol, tf, hfr::standard_environment(), path, cfg);
  hfr::write_report(report, out);
  for (const auto& row : report.summary) {
    std::printf("%-24s p10 %9.3f  p50 %9.3f  p90 %9.3f  (n=%zu)\n", row.name.c_str(), row.p10, row.p50, row.p90,
                row.samples);
  }
  std::printf("%zu frames written to %s\n", report.frames.size(), out.c_str());
  return 0;
}

int run_trace(const std::string& volume_path, const std::string& tf_path, const std::vector<double>& pose, double fov,
              int width, int height, int spp, std::uint64_t seed, bool denoise_frame, const std::string& out,
              const std::string& depth_out) {
  const hfr::Volume vol = hfr::load_volume(volume_path);
  const hfr::TransferFunction tf = hfr::load_transfer_function(tf_path);
  hfr::Camera cam = default_camera(vol, width, height);
  if (!pose.empty()) {
    if (pose.size() != 16) throw std::invalid_argument("--pose takes 16 numbers (row-major world-from-camera)");
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) cam.pose(r, c) = pose[static_cast<std::size_t>(r * 4 + c)];
    }
  }
  if (fov > 0.0) cam.fov_deg = fov;
  cam.validate();
  hfr::RenderSettings rs;
  rs.spp = spp;
  rs.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  hfr::FoveatedFrame frame = hfr::render(vol, tf, hfr::standard_environment(), cam, rs);
  if (denoise_frame) frame = hfr::denoise(frame, nullptr);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  hfr::write_png(out, frame.rgba);
  if (!depth_out.empty()) hfr::write_depth(depth_out, frame.depth);
  std::printf("%dx%d at %d spp in %.1f ms -> %s\n", width, height, spp, ms, out.c_str());
  return 0;
}

int run_generate(const std::string& kind, int size, const std::string& volume_out, const std::string& tf_out,
                 const std::string& path_out, int path_count, double path_fov, double elevation) {
  const hfr::Volume vol = hfr::make_procedural_volume(hfr::parse_procedural_kind(kind), {size, size, size});
  hfr::save_volume(vol, volume_out);
  if (!tf_out.empty()) hfr::save_transfer_function(hfr::standard_transfer_function(), tf_out);
  if (!path_out.empty()) {
    std::vector<hfr::CameraPathEntry> path;
    for (const auto& cam : hfr::orbit_cameras(vol, path_count, 2.5, elevation, path_fov, 1)) {
      path.push_back(hfr::CameraPathEntry{cam.pose, cam.fov_deg});
    }
    std::ofstream(path_out) << hfr::camera_path_to_json(path) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid foveated volume renderer"};
  app.require_subcommand(1);

  std::string volume_path, tf_path, preset = "normal";

  auto* serve = app.add_subcommand("serve", "Run the render/training server");
  int port = hfr::kDefaultPort, relay_port = hfr::kDefaultPort + 1, http_port = 8080;
  std::string static_dir = "web-viewer/dist";
  bool public_bind = false;
  serve->add_option("--volume", volume_path, "Volume file")->required()->check(CLI::ExistingFile);
  serve->add_option("--tf", tf_path, "Transfer function JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Protocol TCP port")->check(CLI::Range(0, 65535));
  serve->add_option("--preset", preset, "Initial view preset")->check(CLI::IsMember({"normal", "high"}));
  serve->add_option("--relay-port", relay_port, "WebSocket relay port, 0 disables")->check(CLI::Range(0, 65535));
  serve->add_option("--http-port", http_port, "Static asset HTTP port, 0 disables")->check(CLI::Range(0, 65535));
  serve->add_option("--static-dir", static_dir, "Viewer assets served under /viewer");
  serve->add_flag("--public", public_bind, "Listen on all interfaces instead of loopback");

  auto* bench = app.add_subcommand("bench", "Scripted loopback session scored against path-traced ground truth");
  std::string path_file, out = "report.json";
  int display_res = 256, foveal_res = 128, foveal_spp = 8, gt_spp = 256;
  std::uint64_t seed = 1;
  bench->add_option("--volume", volume_path, "Volume file")->required()->check(CLI::ExistingFile);
  bench->add_option("--tf", tf_path, "Transfer function JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--path", path_file, "Camera path JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", out, "Report output");
  bench->add_option("--preset", preset)->check(CLI::IsMember({"normal", "high"}));
  bench->add_option("--display-res", display_res)->check(CLI::Range(16, 4096));
  bench->add_option("--foveal-res", foveal_res)->check(CLI::Range(8, 4096));
  bench->add_option("--foveal-spp", foveal_spp)->check(CLI::Range(1, 65535));
  bench->add_option("--gt-spp", gt_spp)->check(CLI::Range(1, 1 << 20));
  bench->add_option("--seed", seed);

  auto* trace = app.add_subcommand("trace", "Path-trace a single frame");
  std::vector<double> pose;
  double fov = 0.0;
  int width = 512, height = 512, spp = 64;
  bool denoise_frame = false;
  std::string png_out = "frame.png", depth_out;
  trace->add_option("--volume", volume_path, "Volume file")->required()->check(CLI::ExistingFile);
  trace->add_option("--tf", tf_path, "Transfer function JSON")->required()->check(CLI::ExistingFile);
  trace->add_option("--pose", pose, "16 numbers, row-major world-from-camera; default frames the volume")
      ->expected(16);
  trace->add_option("--fov", fov, "Vertical field of view in degrees");
  trace->add_option("--width", width)->check(CLI::Range(1, 8192));
  trace->add_option("--height", height)->check(CLI::Range(1, 8192));
  trace->add_option("--spp", spp)->check(CLI::Range(1, 1 << 20));
  trace->add_option("--seed", seed);
  trace->add_flag("--denoise", denoise_frame, "Apply the spatial denoiser");
  trace->add_option("--out", png_out, "PNG output");
  trace->add_option("--depth-out", depth_out, "Depth buffer output");

  auto* generate = app.add_subcommand("generate", "Write a procedural volume, transfer function and orbit path");
  std::string kind = "sphere", volume_out = "volume.vol", tf_out, orbit_out;
  int size = 64, orbit_count = 64;
  double orbit_fov = 40.0, elevation = 15.0;
  generate->add_option("--kind", kind)->check(CLI::IsMember({"sphere", "shell", "tubes", "homogeneous", "wall"}));
  generate->add_option("--size", size, "Voxels per axis")->check(CLI::Range(2, 1024));
  generate->add_option("--out", volume_out, "Volume output");
  generate->add_option("--tf-out", tf_out, "Transfer function output");
  generate->add_option("--path-out", orbit_out, "Orbit camera path output");
  generate->add_option("--path-count", orbit_count)->check(CLI::Range(1, 100000));
  generate->add_option("--path-fov", orbit_fov)->check(CLI::Range(1.0, 170.0));
  generate->add_option("--path-elevation", elevation)->check(CLI::Range(-89.0, 89.0));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return run_serve(volume_path, tf_path, port, preset, relay_port, http_port, static_dir, public_bind);
    if (*bench) {
      return run_bench(volume_path, tf_path, path_file, out, preset, display_res, foveal_res, foveal_spp, gt_spp, seed);
    }
    if (*trace) {
      return run_trace(volume_path, tf_path, pose, fov, width, height, spp, seed, denoise_frame, png_out, depth_out);
    }
    if (*generate) {
      return run_generate(kind, size, volume_out, tf_out, orbit_out, orbit_count, orbit_fov, elevation);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
