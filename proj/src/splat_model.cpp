#include "hfr/splat_model.hpp"

#include "hfr/bytes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hfr {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'P', 'L'};

std::uint8_t quantize_unit(double v, double range_lo, double range_hi) {
  if (range_hi <= range_lo) return 0;
  const double t = std::clamp((v - range_lo) / (range_hi - range_lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

// Quantizes a unit quaternion to i8 such that decoding and re-encoding reproduces the same bytes.
std::array<std::int8_t, 4> quantize_rotation(const Vec4& q) {
  Vec4 n = q.normalized();
  std::array<std::int8_t, 4> out{};
  for (int iter = 0; iter < 8; ++iter) {
    std::array<std::int8_t, 4> next{};
    for (int i = 0; i < 4; ++i) next[i] = static_cast<std::int8_t>(std::lround(std::clamp(n[i], -1.0, 1.0) * 127.0));
    if (iter > 0 && next == out) break;
    out = next;
    n = Vec4(out[0], out[1], out[2], out[3]);
    if (n.squaredNorm() == 0.0) {
      out = {127, 0, 0, 0};
      break;
    }
    n.normalize();
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> serialize(const SplatModel& model) {
  if (model.empty()) throw SplatFormatError(SplatFormatErrorKind::Empty, "cannot serialize an empty splat model");
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (const auto& g : model.gaussians) {
    for (int i = 0; i < 3; ++i) {
      lo = std::min(lo, static_cast<float>(g.log_scale[i]));
      hi = std::max(hi, static_cast<float>(g.log_scale[i]));
    }
  }

  ByteWriter w;
  w.reserve(kSplatHeaderBytes + model.size() * kSplatRecordBytes);
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kSplatFormatVersion);
  w.u64(model.settings_hash);
  w.u64(model.generation);
  w.u32(static_cast<std::uint32_t>(model.size()));
  w.f32(lo);
  w.f32(hi);
  for (const auto& g : model.gaussians) {
    for (int i = 0; i < 3; ++i) w.f32(static_cast<float>(g.position[i]));
    for (int i = 0; i < 3; ++i) w.u8(quantize_unit(g.log_scale[i], lo, hi));
    for (auto q : quantize_rotation(g.rotation)) w.i8(q);
    const double opacity = g.opacity();
    w.u8(static_cast<std::uint8_t>(std::clamp(std::floor(opacity * 256.0), 0.0, 255.0)));
    for (int i = 0; i < 3; ++i) w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(g.rgb[i], 0.0, 1.0) * 255.0)));
  }
  return w.take();
}

SplatModel deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  try {
    const auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) {
      throw SplatFormatError(SplatFormatErrorKind::BadMagic, "splat data has a bad magic number");
    }
    const std::uint32_t version = r.u32();
    if (version != kSplatFormatVersion) {
      throw SplatFormatError(SplatFormatErrorKind::VersionMismatch,
                             "unsupported splat format version " + std::to_string(version));
    }
    SplatModel model;
    model.settings_hash = r.u64();
    model.generation = r.u64();
    const std::uint32_t count = r.u32();
    const double lo = r.f32();
    const double hi = r.f32();
    if (count == 0) throw SplatFormatError(SplatFormatErrorKind::Empty, "splat data holds no Gaussians");
    if (!r.has(static_cast<std::size_t>(count) * kSplatRecordBytes)) throw TruncatedInput();
    model.gaussians.resize(count);
    for (auto& g : model.gaussians) {
      for (int i = 0; i < 3; ++i) g.position[i] = r.f32();
      for (int i = 0; i < 3; ++i) g.log_scale[i] = lo + (hi - lo) * (r.u8() / 255.0);
      Vec4 q;
      for (int i = 0; i < 4; ++i) q[i] = r.i8();
      if (q.squaredNorm() == 0.0) throw SplatFormatError(SplatFormatErrorKind::Malformed, "zero rotation quaternion");
      g.rotation = q.normalized();
      g.opacity_logit = logit((r.u8() + 0.5) * kOpacityStep);
      for (int i = 0; i < 3; ++i) g.rgb[i] = r.u8() / 255.0;
    }
    if (r.remaining() != 0) throw SplatFormatError(SplatFormatErrorKind::Malformed, "trailing bytes after splat records");
    return model;
  } catch (const TruncatedInput&) {
    throw SplatFormatError(SplatFormatErrorKind::Truncated, "splat data is truncated");
  }
}

SplatModel apply_viewer_boost(const SplatModel& model, double scale_factor, double opacity_factor) {
  if (!(scale_factor > 0.0) || !(opacity_factor > 0.0)) throw std::invalid_argument("boost factors must be positive");
  SplatModel out = model;
  if (scale_factor == 1.0 && opacity_factor == 1.0) return out;
  const double log_factor = std::log(scale_factor);
  constexpr double kMaxOpacity = 1.0 - 1e-6;
  for (auto& g : out.gaussians) {
    g.log_scale.array() += log_factor;
    const double o = std::clamp(g.opacity() * opacity_factor, 1e-6, kMaxOpacity);
    g.opacity_logit = logit(o);
  }
  return out;
}

std::uint64_t compute_settings_hash(const TransferFunction& tf, const std::vector<ClipPlane>& clip_planes) {
  ByteWriter w;
  for (const auto& p : tf.points()) {
    w.f32(static_cast<float>(p.density));
    for (int i = 0; i < 4; ++i) w.f32(static_cast<float>(p.rgba[i]));
  }
  w.u8(static_cast<std::uint8_t>(clip_planes.size()));
  for (const auto& c : clip_planes) {
    for (int i = 0; i < 3; ++i) w.f32(static_cast<float>(c.normal[i]));
    w.f32(static_cast<float>(c.offset));
  }
  return fnv1a64(w.data());
}

}  // namespace hfr
