#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "streamsfm/packet.hpp"

namespace streamsfm {

// Engine-side record of one arrived frame.
struct FrameRecord {
  uint64_t image_id = 0;
  FramePacket packet;
  std::vector<Eigen::Vector2d> keypoints;  // double-precision copies
  bool registered = false;
  uint64_t submap_id = kInvalidId;
};

using KeypointMatches = std::vector<std::pair<uint32_t, uint32_t>>;

class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual KeypointMatches Match(const FrameRecord& a, const FrameRecord& b) const = 0;
};

// Matches keypoints through the synthetic ground-truth point ids, with an
// optional fraction of deliberately wrong pairs mixed in.
class OracleMatcher : public Matcher {
 public:
  explicit OracleMatcher(double mismatch_fraction = 0.0, uint64_t seed = 0)
      : mismatch_fraction_(mismatch_fraction), seed_(seed) {}
  KeypointMatches Match(const FrameRecord& a, const FrameRecord& b) const override;

 private:
  double mismatch_fraction_;
  uint64_t seed_;
};

// Mutual-nearest-neighbor matching with a ratio test over per-keypoint
// descriptors registered out of band (column = one keypoint descriptor).
class DescriptorNnMatcher : public Matcher {
 public:
  explicit DescriptorNnMatcher(double max_ratio = 0.8) : max_ratio_(max_ratio) {}
  void SetKeypointDescriptors(uint64_t image_id, Eigen::MatrixXf descriptors);
  KeypointMatches Match(const FrameRecord& a, const FrameRecord& b) const override;

 private:
  double max_ratio_;
  std::map<uint64_t, Eigen::MatrixXf> descriptors_;
};

}  // namespace streamsfm
