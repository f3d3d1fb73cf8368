#include "hfr/volume.hpp"

#include "hfr/bytes.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <iterator>
#include <sstream>

namespace hfr {

namespace {

// The file format stores f32; keep in-memory values at that precision so save/load is exact.
double f32_round(double v) { return static_cast<double>(static_cast<float>(v)); }

constexpr std::uint32_t kVolumeVersion = 1;

}  // namespace

Volume::Volume(std::array<int, 3> dims, Vec3 spacing, std::vector<float> data, Mat4 world_transform)
    : dims_(dims), spacing_(spacing.unaryExpr(&f32_round)), data_(std::move(data)),
      world_(world_transform.unaryExpr(&f32_round)) {
  for (int d : dims_) {
    if (d <= 0) throw VolumeError(VolumeErrorKind::MalformedHeader, "volume dims must be positive");
  }
  if ((spacing_.array() <= 0.0).any()) throw VolumeError(VolumeErrorKind::MalformedHeader, "volume spacing must be positive");
  const std::size_t expected = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  if (data_.size() != expected) throw VolumeError(VolumeErrorKind::SizeMismatch, "volume data length does not match dims");
  for (float v : data_) {
    if (!std::isfinite(v)) throw VolumeError(VolumeErrorKind::NonFinite, "volume contains non-finite density");
    if (v < 0.0f || v > 1.0f) throw VolumeError(VolumeErrorKind::OutOfRange, "volume density outside [0,1]");
  }
  if (std::abs(world_.topLeftCorner<3, 3>().determinant()) < 1e-12) {
    throw VolumeError(VolumeErrorKind::MalformedHeader, "volume world transform is singular");
  }
  local_from_world_ = world_.inverse();
}

Vec3 Volume::local_extent() const {
  return Vec3(dims_[0] * spacing_.x(), dims_[1] * spacing_.y(), dims_[2] * spacing_.z());
}

Vec3 Volume::world_center() const { return transform_point(world_, 0.5 * local_extent()); }

double Volume::world_radius() const {
  double r = 0.0;
  const Vec3 e = local_extent();
  const Vec3 c = world_center();
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 p(corner & 1 ? e.x() : 0.0, corner & 2 ? e.y() : 0.0, corner & 4 ? e.z() : 0.0);
    r = std::max(r, (transform_point(world_, p) - c).norm());
  }
  return r;
}

double Volume::world_extent() const {
  const Vec3 e = local_extent();
  const Mat3 m = world_.topLeftCorner<3, 3>();
  return std::max({(m.col(0) * e.x()).norm(), (m.col(1) * e.y()).norm(), (m.col(2) * e.z()).norm()});
}

double Volume::march_step() const {
  const Mat3 m = world_.topLeftCorner<3, 3>();
  return 0.5 * std::min({(m.col(0) * spacing_.x()).norm(), (m.col(1) * spacing_.y()).norm(),
                         (m.col(2) * spacing_.z()).norm()});
}

double Volume::sample_local(const Vec3& local) const {
  const Vec3 extent = local_extent();
  if ((local.array() < 0.0).any() || (local.array() > extent.array()).any()) return 0.0;

  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double c = std::clamp(local[a] / spacing_[a] - 0.5, 0.0, static_cast<double>(dims_[a] - 1));
    if (dims_[a] == 1) {
      i0[a] = 0;
      f[a] = 0.0;
      continue;
    }
    i0[a] = std::min(static_cast<int>(c), dims_[a] - 2);
    f[a] = c - i0[a];
  }
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(dims_[0]);
  const std::size_t sz = sy * static_cast<std::size_t>(dims_[1]);
  const std::size_t dx = dims_[0] > 1 ? sx : 0;
  const std::size_t dy = dims_[1] > 1 ? sy : 0;
  const std::size_t dz = dims_[2] > 1 ? sz : 0;
  const std::size_t base = i0[2] * sz + i0[1] * sy + i0[0];
  const float* d = data_.data();

  const double c00 = d[base] * (1 - f[0]) + d[base + dx] * f[0];
  const double c10 = d[base + dy] * (1 - f[0]) + d[base + dy + dx] * f[0];
  const double c01 = d[base + dz] * (1 - f[0]) + d[base + dz + dx] * f[0];
  const double c11 = d[base + dz + dy] * (1 - f[0]) + d[base + dz + dy + dx] * f[0];
  const double c0 = c00 * (1 - f[1]) + c10 * f[1];
  const double c1 = c01 * (1 - f[1]) + c11 * f[1];
  return c0 * (1 - f[2]) + c1 * f[2];
}

std::optional<std::pair<double, double>> Volume::intersect(const Vec3& origin, const Vec3& dir) const {
  const Vec3 o = transform_point(local_from_world_, origin);
  const Vec3 d = transform_dir(local_from_world_, dir);
  const Vec3 extent = local_extent();
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < 0.0 || o[a] > extent[a]) return std::nullopt;
      continue;
    }
    double ta = (0.0 - o[a]) / d[a];
    double tb = (extent[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

double sample_density(const Volume& vol, const Vec3& p_world) {
  return vol.sample_local(transform_point(vol.local_from_world(), p_world));
}

// --- transfer function -------------------------------------------------------

TransferFunction::TransferFunction(std::vector<TransferPoint> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw TransferFunctionError("transfer function needs at least two control points");
  if (points_.front().density != 0.0 || points_.back().density != 1.0) {
    throw TransferFunctionError("transfer function must start at density 0 and end at density 1");
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (i > 0 && !(points_[i].density > points_[i - 1].density)) {
      throw TransferFunctionError("transfer function densities must be strictly increasing");
    }
    for (int c = 0; c < 4; ++c) {
      const double v = points_[i].rgba[c];
      if (!(v >= 0.0 && v <= 1.0)) throw TransferFunctionError("transfer function rgba outside [0,1]");
    }
    max_alpha_ = std::max(max_alpha_, points_[i].rgba[3]);
  }
}

namespace {

// Index of the segment [i, i+1] containing d.
std::size_t segment_of(const std::vector<TransferPoint>& pts, double d) {
  std::size_t i = 0;
  while (i + 2 < pts.size() && d > pts[i + 1].density) ++i;
  return i;
}

}  // namespace

double TransferFunction::alpha(double density) const {
  const double d = std::clamp(density, 0.0, 1.0);
  const std::size_t i = segment_of(points_, d);
  const auto& a = points_[i];
  const auto& b = points_[i + 1];
  const double t = (d - a.density) / (b.density - a.density);
  return a.rgba[3] + t * (b.rgba[3] - a.rgba[3]);
}

Vec4 eval_transfer(const TransferFunction& tf, double density) {
  const auto& pts = tf.points();
  const double d = std::clamp(density, 0.0, 1.0);
  const std::size_t i = segment_of(pts, d);
  const auto& a = pts[i];
  const auto& b = pts[i + 1];
  const double t = (d - a.density) / (b.density - a.density);
  return a.rgba + t * (b.rgba - a.rgba);
}

// --- environment map -----------------------------------------------------------

EnvironmentMap::EnvironmentMap(int width, int height, std::vector<float> radiance)
    : width_(width), height_(height), radiance_(std::move(radiance)) {
  if (width_ <= 0 || height_ <= 0) throw std::invalid_argument("environment map resolution must be positive");
  if (radiance_.size() != static_cast<std::size_t>(width_) * height_ * 3) {
    throw std::invalid_argument("environment map size mismatch");
  }
  for (float v : radiance_) {
    if (!std::isfinite(v) || v < 0.0f) throw std::invalid_argument("environment radiance must be finite and non-negative");
  }
}

EnvironmentMap EnvironmentMap::constant(const Vec3& rgb) {
  return EnvironmentMap(1, 1, {static_cast<float>(rgb.x()), static_cast<float>(rgb.y()), static_cast<float>(rgb.z())});
}

EnvironmentMap EnvironmentMap::gradient(const Vec3& zenith, const Vec3& nadir, int width, int height) {
  std::vector<float> data(static_cast<std::size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y) {
    const double theta = kPi * (y + 0.5) / height;
    const double t = 0.5 * (1.0 + std::cos(theta));  // 1 at zenith
    const Vec3 c = t * zenith + (1.0 - t) * nadir;
    for (int x = 0; x < width; ++x) {
      for (int ch = 0; ch < 3; ++ch) data[(static_cast<std::size_t>(y) * width + x) * 3 + ch] = static_cast<float>(c[ch]);
    }
  }
  return EnvironmentMap(width, height, std::move(data));
}

Vec3 EnvironmentMap::lookup(const Vec3& dir) const {
  if (width_ == 1 && height_ == 1) return Vec3(radiance_[0], radiance_[1], radiance_[2]);
  const Vec3 d = dir.normalized();
  const double u = 0.5 + std::atan2(d.x(), -d.z()) / (2.0 * kPi);
  const double v = std::acos(std::clamp(d.y(), -1.0, 1.0)) / kPi;
  const double fx = u * width_ - 0.5;
  const double fy = std::clamp(v * height_ - 0.5, 0.0, static_cast<double>(height_ - 1));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = std::min(static_cast<int>(fy), height_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  auto texel = [&](int x, int y) {
    x = ((x % width_) + width_) % width_;
    const float* p = &radiance_[(static_cast<std::size_t>(y) * width_ + x) * 3];
    return Vec3(p[0], p[1], p[2]);
  };
  return (1 - ty) * ((1 - tx) * texel(x0, y0) + tx * texel(x0 + 1, y0)) +
         ty * ((1 - tx) * texel(x0, y1) + tx * texel(x0 + 1, y1));
}

// --- file formats ----------------------------------------------------------------

std::vector<std::uint8_t> encode_volume(const Volume& vol) {
  ByteWriter w;
  w.reserve(4 + 4 + 12 + 12 + 64 + vol.data().size() * 4);
  w.bytes(std::string_view("VVOL"));
  w.u32(kVolumeVersion);
  for (int d : vol.dims()) w.u32(static_cast<std::uint32_t>(d));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(vol.spacing()[a]));
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) w.f32(static_cast<float>(vol.world_transform()(r, c)));
  }
  for (float v : vol.data()) w.f32(v);
  return w.take();
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  std::array<int, 3> dims{};
  Vec3 spacing;
  Mat4 world;
  try {
    if (r.string(4) != "VVOL") throw VolumeError(VolumeErrorKind::MalformedHeader, "bad volume magic");
    if (r.u32() != kVolumeVersion) throw VolumeError(VolumeErrorKind::MalformedHeader, "unsupported volume version");
    for (auto& d : dims) {
      const std::uint32_t v = r.u32();
      if (v == 0 || v > (1u << 16)) throw VolumeError(VolumeErrorKind::MalformedHeader, "invalid volume dims");
      d = static_cast<int>(v);
    }
    for (int a = 0; a < 3; ++a) spacing[a] = r.f32();
    for (int row = 0; row < 4; ++row) {
      for (int c = 0; c < 4; ++c) world(row, c) = r.f32();
    }
  } catch (const TruncatedInput&) {
    throw VolumeError(VolumeErrorKind::MalformedHeader, "volume header truncated");
  }
  if (!spacing.allFinite() || (spacing.array() <= 0.0).any()) {
    throw VolumeError(VolumeErrorKind::MalformedHeader, "invalid volume spacing");
  }
  if (!world.allFinite()) throw VolumeError(VolumeErrorKind::NonFinite, "non-finite world transform");
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (r.remaining() != count * 4) throw VolumeError(VolumeErrorKind::SizeMismatch, "volume payload size mismatch");
  std::vector<float> data(count);
  for (auto& v : data) v = r.f32();
  return Volume(dims, spacing, std::move(data), world);
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VolumeError(VolumeErrorKind::Io, "cannot open volume " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_volume(bytes);
}

void save_volume(const Volume& vol, const std::filesystem::path& path) {
  const auto bytes = encode_volume(vol);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw VolumeError(VolumeErrorKind::Io, "cannot write volume " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TransferFunction parse_transfer_function(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw TransferFunctionError(std::string("transfer function JSON: ") + e.what());
  }
  if (!doc.is_array()) throw TransferFunctionError("transfer function JSON must be an array");
  std::vector<TransferPoint> points;
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("d") || !entry.contains("rgba") || !entry["d"].is_number() ||
        !entry["rgba"].is_array() || entry["rgba"].size() != 4) {
      throw TransferFunctionError("transfer function entries need {\"d\": number, \"rgba\": [4 numbers]}");
    }
    TransferPoint p;
    p.density = entry["d"].get<double>();
    for (int c = 0; c < 4; ++c) {
      if (!entry["rgba"][c].is_number()) throw TransferFunctionError("transfer function rgba must be numeric");
      p.rgba[c] = entry["rgba"][c].get<double>();
    }
    points.push_back(p);
  }
  return TransferFunction(std::move(points));
}

std::string transfer_function_to_json(const TransferFunction& tf) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& p : tf.points()) {
    doc.push_back({{"d", p.density}, {"rgba", {p.rgba[0], p.rgba[1], p.rgba[2], p.rgba[3]}}});
  }
  return doc.dump();
}

TransferFunction load_transfer_function(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TransferFunctionError("cannot open transfer function " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_transfer_function(ss.str());
}

void save_transfer_function(const TransferFunction& tf, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TransferFunctionError("cannot write transfer function " + path.string());
  out << transfer_function_to_json(tf) << '\n';
}

// --- procedural fixtures -------------------------------------------------------

ProceduralKind parse_procedural_kind(std::string_view name) {
  if (name == "sphere") return ProceduralKind::Sphere;
  if (name == "shell") return ProceduralKind::Shell;
  if (name == "tubes") return ProceduralKind::Tubes;
  if (name == "homogeneous") return ProceduralKind::Homogeneous;
  if (name == "wall") return ProceduralKind::Wall;
  throw std::invalid_argument("unknown procedural volume kind: " + std::string(name));
}

namespace {

struct Tube {
  int axis;
  double a, b;    // offsets on the two other axes, fraction of extent
  double radius;  // fraction of extent
  double density;
};

// Vessel-like cylinders, each spanning 80% of the extent along its axis.
constexpr Tube kTubes[] = {
    {0, 0.10, 0.00, 0.035, 1.00}, {1, -0.20, 0.10, 0.030, 0.75}, {2, 0.15, -0.15, 0.040, 0.55},
    {0, -0.25, -0.20, 0.025, 0.85}, {1, 0.25, -0.25, 0.030, 1.00}, {2, -0.10, 0.30, 0.020, 0.65},
};

// Linear one-voxel ramp across a boundary at signed distance `sd` (negative inside).
double soft_inside(double sd, double h) { return std::clamp(0.5 - sd / h, 0.0, 1.0); }

double max_extent(std::array<int, 3> dims) { return static_cast<double>(*std::max_element(dims.begin(), dims.end())); }

}  // namespace

double sphere_fixture_radius(const Volume& vol) { return 0.4 * vol.world_extent(); }

double wall_fixture_front(const Volume& vol) { return 0.1 * vol.world_extent(); }

ShellGeometry shell_fixture_geometry(const Volume& vol) {
  return {0.35 * vol.world_extent(), 0.4 * vol.world_extent()};
}

Volume make_procedural_volume(ProceduralKind kind, std::array<int, 3> dims, double value) {
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("procedural volume dims must be positive");
  }
  const double extent = max_extent(dims);
  const Vec3 half(dims[0] * 0.5, dims[1] * 0.5, dims[2] * 0.5);
  Mat4 world = Mat4::Identity();
  world.topRightCorner<3, 1>() = -half;

  std::vector<float> data(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0.0f);
  const double h = 1.0;
  std::size_t idx = 0;
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i, ++idx) {
        const Vec3 p = Vec3(i + 0.5, j + 0.5, k + 0.5) - half;
        double d = 0.0;
        switch (kind) {
          case ProceduralKind::Homogeneous:
            d = std::clamp(value, 0.0, 1.0);
            break;
          case ProceduralKind::Sphere:
            d = soft_inside(p.norm() - 0.4 * extent, h);
            break;
          case ProceduralKind::Shell: {
            const double r = p.norm();
            d = std::min(soft_inside(r - 0.4 * extent, h), soft_inside(0.35 * extent - r, h));
            break;
          }
          case ProceduralKind::Wall: {
            // Slab facing +Z with a smooth density pattern for texture.
            const double inside = soft_inside(std::abs(p.z()) - 0.1 * extent, h);
            const double wave = 2.0 * kPi / (extent / 6.0);
            d = inside * (0.55 + 0.4 * std::sin(wave * p.x()) * std::sin(wave * p.y()));
            break;
          }
          case ProceduralKind::Tubes:
            for (const auto& t : kTubes) {
              const int ua = (t.axis + 1) % 3;
              const int ub = (t.axis + 2) % 3;
              const double radial = std::hypot(p[ua] - t.a * extent, p[ub] - t.b * extent);
              const double along = std::abs(p[t.axis]);
              const double sd = std::max(radial - t.radius * extent, along - 0.4 * extent);
              d = std::max(d, t.density * soft_inside(sd, h));
            }
            break;
        }
        data[idx] = static_cast<float>(d);
      }
    }
  }
  return Volume(dims, Vec3::Ones(), std::move(data), world);
}

}  // namespace hfr
