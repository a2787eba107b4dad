#include "streamsfm/wire.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

#include "streamsfm/wire_io.hpp"

namespace streamsfm {

namespace {

class PayloadWriter {
 public:
  explicit PayloadWriter(std::vector<uint8_t>* out) : out_(out) {}
  void U8(uint8_t v) { out_->push_back(v); }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_->push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void U64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_->push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void F32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    U32(bits);
  }
  void F64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    U64(bits);
  }

 private:
  std::vector<uint8_t>* out_;
};

class PayloadReader {
 public:
  explicit PayloadReader(const std::vector<uint8_t>& data) : data_(data) {}
  uint8_t U8() { return data_.at(Advance(1)); }
  uint32_t U32() {
    const size_t at = Advance(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[at + i]) << (8 * i);
    return v;
  }
  uint64_t U64() {
    const size_t at = Advance(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[at + i]) << (8 * i);
    return v;
  }
  float F32() {
    const uint32_t bits = U32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double F64() {
    const uint64_t bits = U64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  bool Done() const { return cursor_ == data_.size(); }

 private:
  size_t Advance(size_t n) {
    if (cursor_ + n > data_.size()) throw std::runtime_error("truncated wire payload");
    const size_t at = cursor_;
    cursor_ += n;
    return at;
  }
  const std::vector<uint8_t>& data_;
  size_t cursor_ = 0;
};

}  // namespace

void EncodePacketPayload(const FramePacket& packet, std::vector<uint8_t>* out) {
  PayloadWriter w(out);
  w.U32(packet.agent_id);
  w.U64(packet.frame_id);
  w.F64(packet.timestamp);
  w.F64(packet.intrinsics.fx);
  w.F64(packet.intrinsics.fy);
  w.F64(packet.intrinsics.cx);
  w.F64(packet.intrinsics.cy);
  w.U32(packet.intrinsics.width);
  w.U32(packet.intrinsics.height);
  w.U32(static_cast<uint32_t>(packet.keypoints.size()));
  for (const auto& kp : packet.keypoints) {
    w.F32(kp.x());
    w.F32(kp.y());
  }
  w.U32(static_cast<uint32_t>(packet.descriptor.size()));
  for (float v : packet.descriptor) w.F32(v);
  w.U8(packet.HasOracle() ? 1 : 0);
  if (packet.HasOracle()) {
    for (uint64_t id : packet.oracle_point_ids) w.U64(id);
  }
}

FramePacket DecodePacketPayload(const std::vector<uint8_t>& payload) {
  PayloadReader r(payload);
  FramePacket packet;
  packet.agent_id = r.U32();
  packet.frame_id = r.U64();
  packet.timestamp = r.F64();
  packet.intrinsics.fx = r.F64();
  packet.intrinsics.fy = r.F64();
  packet.intrinsics.cx = r.F64();
  packet.intrinsics.cy = r.F64();
  packet.intrinsics.width = r.U32();
  packet.intrinsics.height = r.U32();
  const uint32_t num_keypoints = r.U32();
  packet.keypoints.reserve(num_keypoints);
  for (uint32_t i = 0; i < num_keypoints; ++i) {
    const float x = r.F32();
    const float y = r.F32();
    packet.keypoints.emplace_back(x, y);
  }
  const uint32_t dim = r.U32();
  packet.descriptor.resize(dim);
  for (uint32_t i = 0; i < dim; ++i) packet.descriptor[i] = r.F32();
  if (r.U8() != 0) {
    packet.oracle_point_ids.resize(num_keypoints);
    for (uint32_t i = 0; i < num_keypoints; ++i) packet.oracle_point_ids[i] = r.U64();
  }
  if (!r.Done()) throw std::runtime_error("trailing bytes in wire payload");
  return packet;
}

std::vector<uint8_t> EncodeMessage(const WireMessage& message) {
  std::vector<uint8_t> out;
  out.reserve(10 + message.payload.size());
  out.insert(out.end(), kWireMagic, kWireMagic + 4);
  out.push_back(kWireVersion);
  out.push_back(static_cast<uint8_t>(message.type));
  const uint32_t len = static_cast<uint32_t>(message.payload.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
  out.insert(out.end(), message.payload.begin(), message.payload.end());
  return out;
}

std::vector<uint8_t> EncodeHello(uint32_t agent_id) {
  WireMessage message;
  message.type = WireType::kHello;
  PayloadWriter w(&message.payload);
  w.U32(agent_id);
  return EncodeMessage(message);
}

std::vector<uint8_t> EncodeFrame(const FramePacket& packet) {
  WireMessage message;
  message.type = WireType::kFrame;
  EncodePacketPayload(packet, &message.payload);
  return EncodeMessage(message);
}

std::vector<uint8_t> EncodeBye() {
  WireMessage message;
  message.type = WireType::kBye;
  return EncodeMessage(message);
}

std::optional<WireMessage> ReadMessage(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() == 0 && in.eof()) return std::nullopt;
  if (in.gcount() != 4 || std::memcmp(magic, kWireMagic, 4) != 0) {
    throw std::runtime_error("bad wire magic");
  }
  const uint8_t version = ReadU8(in);
  if (version != kWireVersion) throw std::runtime_error("unsupported wire version");
  const uint8_t type = ReadU8(in);
  if (type > static_cast<uint8_t>(WireType::kBye)) {
    throw std::runtime_error("unknown wire message type");
  }
  const uint32_t len = ReadU32(in);
  WireMessage message;
  message.type = static_cast<WireType>(type);
  message.payload.resize(len);
  if (len > 0) ReadBytes(in, message.payload.data(), len);
  return message;
}

void WriteMessage(std::ostream& out, const WireMessage& message) {
  const std::vector<uint8_t> bytes = EncodeMessage(message);
  WriteBytes(out, bytes.data(), bytes.size());
}

}  // namespace streamsfm
