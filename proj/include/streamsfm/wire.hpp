#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "streamsfm/packet.hpp"

namespace streamsfm {

// Framed message layout (all integers little-endian):
//   offset 0: magic "OFSM" (4 bytes)
//   offset 4: version (u8) = 1
//   offset 5: msg_type (u8): 0 hello, 1 frame, 2 bye
//   offset 6: payload length (u32)
//   offset 10: payload
// hello payload: u32 agent_id. bye payload: empty.
// frame payload (FramePacket):
//   u32 agent_id, u64 frame_id, f64 timestamp,
//   f64 fx, f64 fy, f64 cx, f64 cy, u32 width, u32 height,
//   u32 keypoint_count, keypoint_count x (f32 x, f32 y),
//   u32 descriptor_dim, descriptor_dim x f32,
//   u8 has_oracle, [keypoint_count x u64 ground-truth point id].
enum class WireType : uint8_t { kHello = 0, kFrame = 1, kBye = 2 };

constexpr char kWireMagic[4] = {'O', 'F', 'S', 'M'};
constexpr uint8_t kWireVersion = 1;

// Acknowledgment byte returned per received message.
enum class WireStatus : uint8_t {
  kOk = 0x00,
  kMalformed = 0x01,
  kBadVersion = 0x02,
  kUnknownType = 0x03,
};

struct WireMessage {
  WireType type = WireType::kHello;
  std::vector<uint8_t> payload;
};

void EncodePacketPayload(const FramePacket& packet, std::vector<uint8_t>* out);
// Throws std::runtime_error on truncated or inconsistent payloads.
FramePacket DecodePacketPayload(const std::vector<uint8_t>& payload);

std::vector<uint8_t> EncodeMessage(const WireMessage& message);
std::vector<uint8_t> EncodeHello(uint32_t agent_id);
std::vector<uint8_t> EncodeFrame(const FramePacket& packet);
std::vector<uint8_t> EncodeBye();

// Reads one framed message from a stream; nullopt at clean EOF, throws on a
// corrupt header or truncated body.
std::optional<WireMessage> ReadMessage(std::istream& in);
void WriteMessage(std::ostream& out, const WireMessage& message);

}  // namespace streamsfm
