#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamsfm/geometry.hpp"
#include "streamsfm/submap.hpp"

namespace streamsfm {

// Text export, three sections, reals printed with 17 significant digits so a
// write/read cycle is bit-exact:
//   # STREAMSFM_EXPORT 1
//   # CAMERAS <n>
//   camera_id fx fy cx cy width height
//   # IMAGES <n>
//   image_id agent_id qw qx qy qz tx ty tz submap_id
//   # POINTS <n>
//   point_id x y z track_len image_id:keypoint_index ...
// One camera per agent (fixed intrinsics per agent); rows ordered by id.
struct ExportCamera {
  uint32_t camera_id = 0;  // = agent id
  CameraIntrinsics intrinsics;
};

struct ExportImage {
  uint64_t image_id = 0;
  uint32_t agent_id = 0;
  Pose pose;
  uint64_t submap_id = 0;
};

struct ExportPoint {
  uint64_t point_id = 0;
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  std::vector<std::pair<uint64_t, uint32_t>> track;
};

struct ReconstructionExport {
  std::vector<ExportCamera> cameras;
  std::vector<ExportImage> images;
  std::vector<ExportPoint> points;
};

ReconstructionExport BuildExport(const SubmapRegistry& registry);

void WriteExport(const ReconstructionExport& data, std::ostream& out);
void WriteExportFile(const ReconstructionExport& data, const std::string& path);
ReconstructionExport ReadExport(std::istream& in);
ReconstructionExport ReadExportFile(const std::string& path);

// Every observation's reprojection residual, ordered by (point, image); used
// to check that a re-imported export reproduces the original reconstruction.
std::vector<double> ExportResiduals(const ReconstructionExport& data,
                                    const KeypointLookup& keypoints);

}  // namespace streamsfm
