#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "streamsfm/geometry.hpp"

namespace streamsfm {

// Ground-truth id carried by keypoints that are synthetic outliers.
constexpr uint64_t kOutlierPointId = ~0ULL;

// One image as it arrives from an agent: pre-extracted keypoints plus the
// image-level retrieval descriptor. The oracle block (per-keypoint true point
// ids) exists only for synthetic data and drives the oracle matcher.
struct FramePacket {
  uint32_t agent_id = 0;
  uint64_t frame_id = 0;
  double timestamp = 0.0;
  CameraIntrinsics intrinsics;
  std::vector<Eigen::Vector2f> keypoints;
  std::vector<float> descriptor;
  std::vector<uint64_t> oracle_point_ids;  // empty when absent

  bool HasOracle() const { return !oracle_point_ids.empty(); }
};

// Globally unique image id derived from the packet origin.
inline uint64_t MakeImageId(uint32_t agent_id, uint64_t frame_id) {
  return (static_cast<uint64_t>(agent_id) << 40) | (frame_id & ((1ULL << 40) - 1));
}

inline uint32_t AgentOfImageId(uint64_t image_id) {
  return static_cast<uint32_t>(image_id >> 40);
}

inline uint64_t FrameOfImageId(uint64_t image_id) { return image_id & ((1ULL << 40) - 1); }

}  // namespace streamsfm
