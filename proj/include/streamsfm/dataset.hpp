#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "streamsfm/engine.hpp"
#include "streamsfm/packet.hpp"
#include "streamsfm/synth_scene.hpp"

namespace streamsfm {

// On-disk dataset layout:
//   <dir>/manifest.json     counts, dimensions, seed, agent ids
//   <dir>/packets.bin       frame messages in stream order (wire framing)
//   <dir>/groundtruth.txt   sidecar: true poses, points, per-frame visibility
struct DatasetManifest {
  std::string name;
  uint64_t seed = 0;
  int descriptor_dim = 256;
  size_t frame_count = 0;
  std::vector<uint32_t> agent_ids;
  double sigma_px = 0.0;
  double outlier_fraction = 0.0;
  double diameter = 0.0;
};

struct GroundTruth {
  std::map<uint64_t, FrameTruth> frames;        // by image id
  std::map<uint64_t, Eigen::Vector3d> points;   // by point id
};

void SaveDataset(const SyntheticScene& scene, const std::vector<FramePacket>& packets,
                 const std::string& dir, const std::string& name);

DatasetManifest LoadManifest(const std::string& dir);
// Throws with the failing record index on a truncated or corrupt stream.
std::vector<FramePacket> LoadPackets(const std::string& dir);
GroundTruth LoadGroundTruth(const std::string& dir);

// Feeds every packet through the engine in stream order, sleeping cadence_ms
// between frames when positive. Returns the number of frames processed.
size_t ReplayDataset(const std::string& dir, Engine* engine, double cadence_ms = 0.0,
                     const std::function<void(const FrameEvent&)>& on_frame = nullptr);

}  // namespace streamsfm
