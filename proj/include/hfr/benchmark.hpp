#pragma once

#include "hfr/compositor.hpp"
#include "hfr/report.hpp"
#include "hfr/session.hpp"

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace hfr {

struct CameraPathEntry {
  Mat4 pose = Mat4::Identity();  // world-from-camera
  double fov_deg = 40.0;
};

/// JSON array of {"pose": [16 numbers, row-major], "fov": degrees}. A bare 16-number
/// array is accepted for an entry and takes the default field of view.
std::vector<CameraPathEntry> parse_camera_path(const std::string& json_text);
std::vector<CameraPathEntry> load_camera_path(const std::filesystem::path& path);
std::string camera_path_to_json(const std::vector<CameraPathEntry>& path);

struct BenchmarkConfig {
  SessionConfig session;
  std::string preset_name = "normal";
  std::string volume_name;
  int display_resolution = 256;
  int foveal_resolution = 128;
  double foveal_fov_deg = 20.0;
  int foveal_spp = 8;
  int ground_truth_spp = 256;
  Vec2 foveation_center = Vec2(0.5, 0.5);
  CompositeSettings composite;
  ReprojectionSettings reprojection;
  std::chrono::milliseconds init_timeout = std::chrono::minutes(30);
  std::chrono::milliseconds frame_timeout = std::chrono::minutes(5);
};

/// Runs a loopback server and client over `path`: each pose requests a foveal frame, the
/// display image is composited against the newest pushed model and scored against a
/// high-spp path trace of the full display view.
BenchmarkReport run_benchmark(const Volume& volume, const TransferFunction& tf, const EnvironmentMap& env,
                              const std::vector<CameraPathEntry>& path, const BenchmarkConfig& config);

}  // namespace hfr
