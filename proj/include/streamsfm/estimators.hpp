#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "streamsfm/geometry.hpp"

namespace streamsfm {

// ---------------------------------------------------------------------------
// Two-view geometric verification

struct TwoViewOptions {
  double threshold_px = 2.0;      // epipolar (Sampson) inlier threshold
  int max_iterations = 256;
  int min_inliers = 50;           // strict: accepted only when inliers > this
  double homography_ratio = 0.9;  // H inliers >= ratio * F inliers -> degenerate
  uint64_t seed = 0;
};

enum class TwoViewStatus {
  kSuccess,
  kInsufficient,  // fewer than 8 correspondences
  kDegenerate,    // verified but planar / pure-rotation dominated
  kRejected,      // too few epipolar inliers
};

struct TwoViewResult {
  TwoViewStatus status = TwoViewStatus::kRejected;
  // Relative pose: x_b = R * x_a + t with |t| = 1.
  Pose relative;
  std::vector<int> inliers;        // indices into the correspondence list
  int num_inliers = 0;
  int num_homography_inliers = 0;
  double median_tri_angle_rad = 0.0;
};

struct Correspondence2D {
  Eigen::Vector2d a = Eigen::Vector2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
};

TwoViewResult TwoViewVerify(const std::vector<Correspondence2D>& correspondences,
                            const CameraIntrinsics& intr_a, const CameraIntrinsics& intr_b,
                            const TwoViewOptions& options);

// ---------------------------------------------------------------------------
// Absolute pose (resection)

struct PnpOptions {
  double threshold_px = 4.0;
  int max_iterations = 256;
  int min_inliers = 12;
  uint64_t seed = 0;
  bool refine = true;
};

enum class PnpStatus { kSuccess, kInsufficient, kFailed };

struct PnpResult {
  PnpStatus status = PnpStatus::kFailed;
  Pose pose;
  std::vector<int> inliers;
};

struct Correspondence2D3D {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
};

PnpResult PnpRansac(const std::vector<Correspondence2D3D>& correspondences,
                    const CameraIntrinsics& intrinsics, const PnpOptions& options);

// Local Gauss-Newton polish of an absolute pose on the given correspondences.
void RefinePose(const std::vector<Correspondence2D3D>& correspondences,
                const CameraIntrinsics& intrinsics, Pose* pose, int iterations = 10);

// ---------------------------------------------------------------------------
// Multi-view triangulation

struct TriangulationOptions {
  double threshold_px = 4.0;
  double min_angle_deg = 2.0;  // max pairwise angle below this -> rejected
};

enum class TriangulationStatus { kSuccess, kInsufficient, kShallowAngle, kFailed };

struct RayObservation {
  Pose pose;
  CameraIntrinsics intrinsics;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct TriangulationResult {
  TriangulationStatus status = TriangulationStatus::kFailed;
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  std::vector<int> inliers;
};

// Hypotheses from every observation pair, scored by reprojection error and
// positive depth, final point re-estimated over the inliers.
TriangulationResult TriangulateMultiviewRansac(const std::vector<RayObservation>& observations,
                                               const TriangulationOptions& options);

// Linear two-view triangulation (no checks); building block and test oracle.
Eigen::Vector3d TriangulateLinear(const std::vector<RayObservation>& observations);

}  // namespace streamsfm
