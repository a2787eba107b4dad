#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "streamsfm/geometry.hpp"
#include "streamsfm/hnsw.hpp"
#include "streamsfm/packet.hpp"

namespace streamsfm {

// One camera arc: an agent sweeping around the scene center at a fixed
// radius, from start_deg to end_deg.
struct AgentArc {
  uint32_t agent_id = 0;
  int frames = 50;
  double radius = 60.0;
  double start_deg = 0.0;
  double end_deg = 180.0;
  double height = 8.0;
  double first_timestamp = 0.0;
  double timestamp_step = 1.0;
  CameraIntrinsics intrinsics;
};

struct SceneSpec {
  uint64_t seed = 7;
  int facade_points = 900;
  int clutter_points = 600;
  double diameter = 100.0;       // bounding-sphere diameter of the point set
  double max_view_range = 250.0;
  double max_view_angle_deg = 75.0;  // off the point's facing normal
  double sigma_px = 0.5;
  double outlier_fraction = 0.1;
  int descriptor_dim = 256;
  double descriptor_jitter = 0.02;
  int min_points_per_frame = 20;
  std::vector<AgentArc> agents;
};

SceneSpec DefaultSingleAgentSpec(int frames = 150, uint64_t seed = 7);
SceneSpec DefaultTwoAgentSpec(uint64_t seed = 7);

struct FrameTruth {
  uint64_t image_id = 0;
  uint32_t agent_id = 0;
  uint64_t frame_id = 0;
  double timestamp = 0.0;
  CameraIntrinsics intrinsics;
  Pose pose;  // world -> camera, ground truth
  std::vector<uint64_t> visible_points;
};

struct SyntheticScene {
  SceneSpec spec;
  std::vector<Eigen::Vector3d> points;   // id = index
  std::vector<Eigen::Vector3d> normals;  // facing direction; models opacity
  std::vector<FrameTruth> frames;        // ordered by (timestamp, agent, frame)

  const FrameTruth* FindFrame(uint64_t image_id) const;
  double Diameter() const;
};

// Deterministic world + trajectories + visibility. Throws std::invalid_argument
// on an infeasible spec (a frame seeing fewer than min_points_per_frame).
SyntheticScene Generate(const SceneSpec& spec);

// Shared-visibility statistics between two frames.
struct OverlapStats {
  int shared = 0;
  double jaccard = 0.0;
  bool true_overlap = false;  // shared visible points > 50
};

OverlapStats Overlap(const FrameTruth& a, const FrameTruth& b);

// Signed-random-projection embedding of a visible-point-id set. Point sets
// that overlap produce nearby descriptors; disjoint sets are near-orthogonal.
// Throws std::invalid_argument on an empty set.
GlobalDescriptor MakeDescriptor(const std::vector<uint64_t>& visible_ids, int dim,
                                uint64_t seed, double jitter = 0.0);

// Noisy projections + descriptors for the whole scene, in stream order.
std::vector<FramePacket> RenderPackets(const SyntheticScene& scene);

}  // namespace streamsfm
