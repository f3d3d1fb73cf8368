#pragma once

#include "hfr/frame.hpp"
#include "hfr/volume.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace hfr {

inline constexpr std::uint16_t kDefaultPort = 7462;
inline constexpr std::size_t kFrameHeaderBytes = 5;
inline constexpr std::uint32_t kMaxPayloadBytes = 256u * 1024u * 1024u;

enum class MessageType : std::uint8_t {
  PoseRequest = 1,
  FoveatedFrame = 2,
  SplatModel = 3,
  RenderSettings = 4,
  SettingsAck = 5,
  Error = 255,
};

enum ErrorCode : std::uint16_t {
  kErrorSettings = 1,
  kErrorStale = 2,
  kErrorBadRequest = 3,
  kErrorInternal = 4,
};

using PoseMatrix = std::array<float, 16>;  // row-major world-from-camera

struct PoseRequestMsg {
  std::uint64_t frame_id = 0;
  PoseMatrix pose{};
  float fov_deg = 20.0f;
  std::uint16_t width = 512;
  std::uint16_t height = 512;
  std::uint16_t spp = 8;
  float foveation_u = 0.5f;
  float foveation_v = 0.5f;
  bool operator==(const PoseRequestMsg&) const = default;
};

struct FoveatedFrameMsg {
  std::uint64_t frame_id = 0;
  PoseMatrix pose{};
  float fov_deg = 20.0f;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> rgba;  // straight alpha, width*height*4
  std::vector<float> depth;        // width*height
  float render_ms = 0.0f;
  bool operator==(const FoveatedFrameMsg&) const = default;
};

struct SplatModelMsg {
  std::vector<std::uint8_t> data;  // splat binary layout
  bool operator==(const SplatModelMsg&) const = default;
};

struct ClipPlaneWire {
  std::array<float, 4> plane{};  // normal xyz, offset
  bool operator==(const ClipPlaneWire&) const = default;
};

struct RenderSettingsMsg {
  std::uint64_t settings_hash = 0;
  std::string transfer_function_json;
  std::vector<ClipPlaneWire> clip_planes;
  std::uint16_t spp = 8;
  bool operator==(const RenderSettingsMsg&) const = default;
};

struct SettingsAckMsg {
  std::uint64_t settings_hash = 0;
  std::uint32_t initial_model_eta_ms = 0;
  bool operator==(const SettingsAckMsg&) const = default;
};

struct ErrorMsg {
  std::uint16_t code = 0;
  std::string message;
  bool operator==(const ErrorMsg&) const = default;
};

using Message = std::variant<PoseRequestMsg, FoveatedFrameMsg, SplatModelMsg, RenderSettingsMsg, SettingsAckMsg, ErrorMsg>;

MessageType message_type(const Message& msg);

enum class ProtocolErrorKind { Oversize, UnknownType, Malformed };

struct ProtocolError : std::runtime_error {
  ProtocolError(ProtocolErrorKind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  ProtocolErrorKind kind;
};

std::vector<std::uint8_t> encode(const Message& msg);

struct Decoded {
  Message message;
  std::size_t consumed = 0;
};

/// Decodes one message from the front of `buffer`. Returns nullopt when more bytes are needed.
std::optional<Decoded> decode(std::span<const std::uint8_t> buffer);

/// Incremental decoder for a byte stream.
class StreamDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<Message> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t offset_ = 0;
};

// Conversions between wire and in-process types.
PoseMatrix to_wire_pose(const Mat4& pose);
Mat4 from_wire_pose(const PoseMatrix& pose);
FoveatedFrameMsg to_message(const FoveatedFrame& frame);
FoveatedFrame to_frame(const FoveatedFrameMsg& msg);
Camera request_camera(const PoseRequestMsg& req);
std::vector<ClipPlane> to_clip_planes(const std::vector<ClipPlaneWire>& wire);
std::vector<ClipPlaneWire> to_wire_clip_planes(const std::vector<ClipPlane>& planes);
RenderSettingsMsg make_settings_message(const TransferFunction& tf, const std::vector<ClipPlane>& clip, std::uint16_t spp);

}  // namespace hfr
