#pragma once

#include "hfr/math.hpp"
#include "hfr/volume.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hfr {

/// Anisotropic 3D Gaussian with degree-0 colour.
struct Gaussian {
  Vec3 position = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // (w, x, y, z)
  double opacity_logit = 0.0;
  Vec3 rgb = Vec3::Zero();

  double opacity() const { return sigmoid(opacity_logit); }
};

struct SplatModel {
  std::vector<Gaussian> gaussians;
  std::uint64_t generation = 0;
  std::uint64_t settings_hash = 0;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
};

enum class SplatFormatErrorKind { BadMagic, VersionMismatch, Truncated, Empty, Malformed };

struct SplatFormatError : std::runtime_error {
  SplatFormatError(SplatFormatErrorKind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  SplatFormatErrorKind kind;
};

inline constexpr std::uint32_t kSplatFormatVersion = 1;
inline constexpr std::size_t kSplatHeaderBytes = 4 + 4 + 8 + 8 + 4 + 8;
inline constexpr std::size_t kSplatRecordBytes = 12 + 3 + 4 + 1 + 3;

// Opacity is stored as floor(o * 256) and restored at the bucket centre, so it stays in (0, 1).
inline constexpr double kOpacityStep = 1.0 / 256.0;
inline constexpr double kColorStep = 1.0 / 255.0;

std::vector<std::uint8_t> serialize(const SplatModel& model);
SplatModel deserialize(std::span<const std::uint8_t> bytes);

/// Multiplies splat scales by `scale_factor` and opacities by `opacity_factor`.
SplatModel apply_viewer_boost(const SplatModel& model, double scale_factor, double opacity_factor);

/// Identifies the render settings that determine splat colours.
std::uint64_t compute_settings_hash(const TransferFunction& tf, const std::vector<ClipPlane>& clip_planes);

}  // namespace hfr
