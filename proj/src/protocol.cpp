#include "hfr/protocol.hpp"

#include "hfr/bytes.hpp"
#include "hfr/splat_model.hpp"

#include <cmath>

namespace hfr {

MessageType message_type(const Message& msg) {
  struct Visitor {
    MessageType operator()(const PoseRequestMsg&) const { return MessageType::PoseRequest; }
    MessageType operator()(const FoveatedFrameMsg&) const { return MessageType::FoveatedFrame; }
    MessageType operator()(const SplatModelMsg&) const { return MessageType::SplatModel; }
    MessageType operator()(const RenderSettingsMsg&) const { return MessageType::RenderSettings; }
    MessageType operator()(const SettingsAckMsg&) const { return MessageType::SettingsAck; }
    MessageType operator()(const ErrorMsg&) const { return MessageType::Error; }
  };
  return std::visit(Visitor{}, msg);
}

namespace {

void put_pose(ByteWriter& w, const PoseMatrix& pose) {
  for (float v : pose) w.f32(v);
}

PoseMatrix get_pose(ByteReader& r) {
  PoseMatrix pose;
  for (float& v : pose) v = r.f32();
  return pose;
}

void encode_payload(ByteWriter& w, const Message& msg) {
  if (const auto* m = std::get_if<PoseRequestMsg>(&msg)) {
    w.u64(m->frame_id);
    put_pose(w, m->pose);
    w.f32(m->fov_deg);
    w.u16(m->width);
    w.u16(m->height);
    w.u16(m->spp);
    w.f32(m->foveation_u);
    w.f32(m->foveation_v);
  } else if (const auto* m = std::get_if<FoveatedFrameMsg>(&msg)) {
    const std::size_t pixels = static_cast<std::size_t>(m->width) * m->height;
    if (m->rgba.size() != pixels * 4 || m->depth.size() != pixels) {
      throw ProtocolError(ProtocolErrorKind::Malformed, "frame buffers do not match the declared resolution");
    }
    w.u64(m->frame_id);
    put_pose(w, m->pose);
    w.f32(m->fov_deg);
    w.u16(m->width);
    w.u16(m->height);
    w.bytes(m->rgba);
    for (float d : m->depth) w.f32(d);
    w.f32(m->render_ms);
  } else if (const auto* m = std::get_if<SplatModelMsg>(&msg)) {
    w.bytes(m->data);
  } else if (const auto* m = std::get_if<RenderSettingsMsg>(&msg)) {
    if (m->clip_planes.size() > 255) throw ProtocolError(ProtocolErrorKind::Malformed, "too many clip planes");
    w.u64(m->settings_hash);
    w.u32(static_cast<std::uint32_t>(m->transfer_function_json.size()));
    w.bytes(m->transfer_function_json);
    w.u8(static_cast<std::uint8_t>(m->clip_planes.size()));
    for (const auto& c : m->clip_planes) {
      for (float v : c.plane) w.f32(v);
    }
    w.u16(m->spp);
  } else if (const auto* m = std::get_if<SettingsAckMsg>(&msg)) {
    w.u64(m->settings_hash);
    w.u32(m->initial_model_eta_ms);
  } else if (const auto* m = std::get_if<ErrorMsg>(&msg)) {
    w.u16(m->code);
    w.bytes(m->message);
  }
}

Message decode_payload(MessageType type, std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Message out;
  switch (type) {
    case MessageType::PoseRequest: {
      PoseRequestMsg m;
      m.frame_id = r.u64();
      m.pose = get_pose(r);
      m.fov_deg = r.f32();
      m.width = r.u16();
      m.height = r.u16();
      m.spp = r.u16();
      m.foveation_u = r.f32();
      m.foveation_v = r.f32();
      out = m;
      break;
    }
    case MessageType::FoveatedFrame: {
      FoveatedFrameMsg m;
      m.frame_id = r.u64();
      m.pose = get_pose(r);
      m.fov_deg = r.f32();
      m.width = r.u16();
      m.height = r.u16();
      const std::size_t pixels = static_cast<std::size_t>(m.width) * m.height;
      auto rgba = r.bytes(pixels * 4);
      m.rgba.assign(rgba.begin(), rgba.end());
      m.depth.resize(pixels);
      for (float& d : m.depth) d = r.f32();
      m.render_ms = r.f32();
      out = std::move(m);
      break;
    }
    case MessageType::SplatModel: {
      SplatModelMsg m;
      auto rest = r.bytes(r.remaining());
      m.data.assign(rest.begin(), rest.end());
      out = std::move(m);
      break;
    }
    case MessageType::RenderSettings: {
      RenderSettingsMsg m;
      m.settings_hash = r.u64();
      m.transfer_function_json = r.string(r.u32());
      const int n = r.u8();
      m.clip_planes.resize(n);
      for (auto& c : m.clip_planes) {
        for (float& v : c.plane) v = r.f32();
      }
      m.spp = r.u16();
      out = std::move(m);
      break;
    }
    case MessageType::SettingsAck: {
      SettingsAckMsg m;
      m.settings_hash = r.u64();
      m.initial_model_eta_ms = r.u32();
      out = m;
      break;
    }
    case MessageType::Error: {
      ErrorMsg m;
      m.code = r.u16();
      m.message = r.string(r.remaining());
      out = std::move(m);
      break;
    }
  }
  if (r.remaining() != 0) throw ProtocolError(ProtocolErrorKind::Malformed, "payload has trailing bytes");
  return out;
}

bool known_type(std::uint8_t t) { return (t >= 1 && t <= 5) || t == 255; }

}  // namespace

std::vector<std::uint8_t> encode(const Message& msg) {
  ByteWriter w;
  w.u32(0);
  w.u8(static_cast<std::uint8_t>(message_type(msg)));
  encode_payload(w, msg);
  const std::size_t payload = w.size() - kFrameHeaderBytes;
  if (payload > kMaxPayloadBytes) throw ProtocolError(ProtocolErrorKind::Oversize, "message exceeds the payload limit");
  w.patch_u32(0, static_cast<std::uint32_t>(payload));
  return w.take();
}

std::optional<Decoded> decode(std::span<const std::uint8_t> buffer) {
  if (buffer.size() < kFrameHeaderBytes) return std::nullopt;
  ByteReader header(buffer.first(kFrameHeaderBytes));
  const std::uint32_t length = header.u32();
  const std::uint8_t type = header.u8();
  if (length > kMaxPayloadBytes) {
    throw ProtocolError(ProtocolErrorKind::Oversize, "declared payload of " + std::to_string(length) + " bytes exceeds the limit");
  }
  if (!known_type(type)) throw ProtocolError(ProtocolErrorKind::UnknownType, "unknown message type " + std::to_string(type));
  if (buffer.size() < kFrameHeaderBytes + length) return std::nullopt;
  try {
    return Decoded{decode_payload(static_cast<MessageType>(type), buffer.subspan(kFrameHeaderBytes, length)),
                   kFrameHeaderBytes + length};
  } catch (const TruncatedInput&) {
    throw ProtocolError(ProtocolErrorKind::Malformed, "payload shorter than its message layout");
  }
}

void StreamDecoder::feed(std::span<const std::uint8_t> bytes) {
  if (offset_ > 0 && offset_ * 2 >= buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> StreamDecoder::next() {
  auto d = decode(std::span<const std::uint8_t>(buffer_).subspan(offset_));
  if (!d) return std::nullopt;
  offset_ += d->consumed;
  return std::move(d->message);
}

PoseMatrix to_wire_pose(const Mat4& pose) {
  PoseMatrix out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out[r * 4 + c] = static_cast<float>(pose(r, c));
  }
  return out;
}

Mat4 from_wire_pose(const PoseMatrix& pose) {
  Mat4 out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out(r, c) = pose[r * 4 + c];
  }
  // Re-orthonormalize the rotation lost to f32 rounding.
  Eigen::JacobiSVD<Mat3> svd(out.topLeftCorner<3, 3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.topLeftCorner<3, 3>() = svd.matrixU() * svd.matrixV().transpose();
  out.row(3) = Eigen::RowVector4d(0, 0, 0, 1);
  return out;
}

FoveatedFrameMsg to_message(const FoveatedFrame& frame) {
  FoveatedFrameMsg m;
  m.frame_id = frame.frame_id;
  m.pose = to_wire_pose(frame.camera.pose);
  m.fov_deg = static_cast<float>(frame.camera.fov_deg);
  m.width = static_cast<std::uint16_t>(frame.camera.width);
  m.height = static_cast<std::uint16_t>(frame.camera.height);
  m.rgba = frame.rgba.data;
  m.depth.resize(frame.depth.data.size());
  for (std::size_t i = 0; i < m.depth.size(); ++i) m.depth[i] = static_cast<float>(frame.depth.data[i]);
  m.render_ms = static_cast<float>(frame.render_ms);
  return m;
}

FoveatedFrame to_frame(const FoveatedFrameMsg& msg) {
  FoveatedFrame f;
  f.frame_id = msg.frame_id;
  f.camera.pose = from_wire_pose(msg.pose);
  f.camera.fov_deg = msg.fov_deg;
  f.camera.width = msg.width;
  f.camera.height = msg.height;
  f.rgba = Rgba8Image(msg.width, msg.height);
  f.rgba.data = msg.rgba;
  f.depth = Image(msg.width, msg.height, 1);
  for (std::size_t i = 0; i < msg.depth.size(); ++i) f.depth.data[i] = msg.depth[i];
  f.albedo = Image(msg.width, msg.height, 3);
  f.render_ms = msg.render_ms;
  return f;
}

Camera request_camera(const PoseRequestMsg& req) {
  Camera cam;
  cam.pose = from_wire_pose(req.pose);
  cam.fov_deg = req.fov_deg;
  cam.width = req.width;
  cam.height = req.height;
  return cam;
}

std::vector<ClipPlane> to_clip_planes(const std::vector<ClipPlaneWire>& wire) {
  std::vector<ClipPlane> out;
  for (const auto& w : wire) out.push_back(ClipPlane{Vec3(w.plane[0], w.plane[1], w.plane[2]), w.plane[3]});
  return out;
}

std::vector<ClipPlaneWire> to_wire_clip_planes(const std::vector<ClipPlane>& planes) {
  std::vector<ClipPlaneWire> out;
  for (const auto& p : planes) {
    out.push_back(ClipPlaneWire{{static_cast<float>(p.normal.x()), static_cast<float>(p.normal.y()),
                                 static_cast<float>(p.normal.z()), static_cast<float>(p.offset)}});
  }
  return out;
}

RenderSettingsMsg make_settings_message(const TransferFunction& tf, const std::vector<ClipPlane>& clip, std::uint16_t spp) {
  RenderSettingsMsg m;
  m.transfer_function_json = transfer_function_to_json(tf);
  m.clip_planes = to_wire_clip_planes(clip);
  m.settings_hash = compute_settings_hash(parse_transfer_function(m.transfer_function_json), to_clip_planes(m.clip_planes));
  m.spp = spp;
  return m;
}

}  // namespace hfr
