#pragma once

#include "hfr/math.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hfr {

/// Dense scalar density grid with normalized values in [0,1], X-fastest layout.
/// Voxel (i,j,k) is centered at ((i,j,k) + 0.5) * spacing in local millimetres;
/// world_transform maps local coordinates to world space. Immutable after construction.
class Volume {
 public:
  Volume() = default;
  Volume(std::array<int, 3> dims, Vec3 spacing, std::vector<float> data, Mat4 world_transform = Mat4::Identity());

  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const std::vector<float>& data() const { return data_; }
  const Mat4& world_transform() const { return world_; }
  const Mat4& local_from_world() const { return local_from_world_; }

  float voxel(int i, int j, int k) const {
    return data_[(static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i];
  }

  Vec3 local_extent() const;
  // World-space center and radius of the bounding sphere.
  Vec3 world_center() const;
  double world_radius() const;
  // Largest world-space edge of the bounding box.
  double world_extent() const;
  // Half the smallest voxel edge, measured in world units.
  double march_step() const;

  // Trilinear density at a local-space point; zero outside [0, extent].
  double sample_local(const Vec3& local) const;

  // Clips the ray to the world-space bounding box. Returns (t_enter, t_exit) when it intersects.
  std::optional<std::pair<double, double>> intersect(const Vec3& origin, const Vec3& dir) const;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  Vec3 spacing_ = Vec3::Ones();
  std::vector<float> data_;
  Mat4 world_ = Mat4::Identity();
  Mat4 local_from_world_ = Mat4::Identity();
};

/// Trilinearly interpolated density at a world-space point, 0 outside the volume bounds.
double sample_density(const Volume& vol, const Vec3& p_world);

struct TransferPoint {
  double density = 0.0;
  Vec4 rgba = Vec4::Zero();
};

/// Piecewise-linear density -> RGBA map. Control points strictly increasing, first at 0, last at 1.
class TransferFunction {
 public:
  TransferFunction() = default;
  explicit TransferFunction(std::vector<TransferPoint> points);

  const std::vector<TransferPoint>& points() const { return points_; }
  double max_alpha() const { return max_alpha_; }

  // Alpha only; cheaper than eval() in the tracer's inner loop.
  double alpha(double density) const;

 private:
  std::vector<TransferPoint> points_;
  double max_alpha_ = 0.0;
};

/// Piecewise-linear interpolation of the control table; density is clamped to [0,1].
Vec4 eval_transfer(const TransferFunction& tf, double density);

/// Equirectangular RGB radiance map.
class EnvironmentMap {
 public:
  EnvironmentMap() : EnvironmentMap(constant(Vec3::Zero())) {}
  EnvironmentMap(int width, int height, std::vector<float> radiance);

  static EnvironmentMap constant(const Vec3& rgb);
  // Vertical gradient from `zenith` (+Y) to `nadir` (-Y).
  static EnvironmentMap gradient(const Vec3& zenith, const Vec3& nadir, int width = 64, int height = 32);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<float>& radiance() const { return radiance_; }

  Vec3 lookup(const Vec3& dir) const;

 private:
  int width_ = 1;
  int height_ = 1;
  std::vector<float> radiance_;
};

/// Half-space kept by a clip plane: normal . p + offset >= 0 (world space).
struct ClipPlane {
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;

  bool keeps(const Vec3& p) const { return normal.dot(p) + offset >= 0.0; }
};

enum class VolumeErrorKind { Io, MalformedHeader, SizeMismatch, NonFinite, OutOfRange };

struct VolumeError : std::runtime_error {
  VolumeError(VolumeErrorKind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  VolumeErrorKind kind;
};

struct TransferFunctionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& vol, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_volume(const Volume& vol);
Volume decode_volume(std::span<const std::uint8_t> bytes);

TransferFunction parse_transfer_function(std::string_view json_text);
std::string transfer_function_to_json(const TransferFunction& tf);
TransferFunction load_transfer_function(const std::filesystem::path& path);
void save_transfer_function(const TransferFunction& tf, const std::filesystem::path& path);

enum class ProceduralKind { Sphere, Shell, Tubes, Homogeneous, Wall };

ProceduralKind parse_procedural_kind(std::string_view name);

/// Deterministic test volumes with 1 mm spacing, centered on the world origin.
/// `value` is the constant density of the homogeneous kind and is ignored otherwise.
Volume make_procedural_volume(ProceduralKind kind, std::array<int, 3> dims, double value = 0.5);

// Geometry of the procedural fixtures, in world units, for analytic oracles.
struct ShellGeometry {
  double inner_radius;
  double outer_radius;
};
double sphere_fixture_radius(const Volume& vol);
// World z of the wall's front face (the slab faces +Z).
double wall_fixture_front(const Volume& vol);
ShellGeometry shell_fixture_geometry(const Volume& vol);

}  // namespace hfr
