#pragma once

#include "hfr/camera.hpp"
#include "hfr/image.hpp"

#include <cstdint>

namespace hfr {

/// Posed path-traced frame: straight-alpha RGBA, per-pixel distance to the first
/// significant hit (0 = no hit) and the albedo guide buffer.
struct FoveatedFrame {
  std::uint64_t frame_id = 0;
  Camera camera;
  Rgba8Image rgba;
  Image depth;   // 1 channel
  Image albedo;  // 3 channels
  std::int64_t timestamp_ms = 0;
  double render_ms = 0.0;
};

struct ColoredPoint {
  Vec3 position = Vec3::Zero();
  Vec4 rgba = Vec4::Zero();
};

}  // namespace hfr
