#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace streamsfm {

constexpr uint64_t kInvalidId = ~0ULL;

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  uint32_t width = 0, height = 0;

  bool Valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx <= width && cy >= 0 && cy <= height;
  }
  bool operator==(const CameraIntrinsics&) const = default;
};

// Rigid world-to-camera transform: x_cam = R * x_world + t.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d Center() const { return -(rotation.conjugate() * translation); }
  Eigen::Vector3d ToCamera(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  // Unit viewing direction (camera +z) expressed in world coordinates.
  Eigen::Vector3d ViewDirection() const {
    return rotation.conjugate() * Eigen::Vector3d::UnitZ();
  }
  Pose Inverse() const {
    Pose inv;
    inv.rotation = rotation.conjugate();
    inv.translation = -(rotation.conjugate() * translation);
    return inv;
  }
};

// Angle between two rotations in radians.
double RotationAngle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

struct Observation {
  uint64_t image_id = kInvalidId;
  uint32_t keypoint_index = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  uint64_t point_id = kInvalidId;  // optional 3D link
};

struct Track {
  uint64_t point_id = kInvalidId;
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  std::map<uint64_t, uint32_t> observations;  // image_id -> keypoint_index
};

// Scaled rigid transform p' = scale * (rotation * p) + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d Apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
  SimilarityTransform Inverse() const;
  // Composition: (a * b).Apply(p) == a.Apply(b.Apply(p)).
  friend SimilarityTransform operator*(const SimilarityTransform& a,
                                       const SimilarityTransform& b);
};

// Pinhole projection of a world point. Returns nullopt for non-positive depth.
std::optional<Eigen::Vector2d> Project(const CameraIntrinsics& intrinsics, const Pose& pose,
                                       const Eigen::Vector3d& xyz);

// Projection of a point already in the camera frame.
inline std::optional<Eigen::Vector2d> ProjectCameraPoint(const CameraIntrinsics& intrinsics,
                                                         const Eigen::Vector3d& x_cam) {
  if (x_cam.z() <= 0.0) return std::nullopt;
  return Eigen::Vector2d(intrinsics.fx * x_cam.x() / x_cam.z() + intrinsics.cx,
                         intrinsics.fy * x_cam.y() / x_cam.z() + intrinsics.cy);
}

// Unit ray through a pixel, expressed in world coordinates, with its origin.
Eigen::Vector3d PixelRayDirection(const CameraIntrinsics& intrinsics, const Pose& pose,
                                  const Eigen::Vector2d& pixel);

// Remaps a camera pose when the world it observes is transformed by T, so
// that image-space residuals are preserved exactly.
Pose TransformPose(const SimilarityTransform& t, const Pose& pose);

inline Eigen::Vector3d TransformPoint(const SimilarityTransform& t, const Eigen::Vector3d& p) {
  return t.Apply(p);
}

// Closed-form least-squares sim(3) aligning src onto dst (minimizes
// sum ||dst - T(src)||^2). Returns nullopt when the source points are
// collinear or coincident (second covariance eigenvalue vanishing).
// Throws std::invalid_argument for fewer than 3 points.
std::optional<SimilarityTransform> EstimateSimilarityUmeyama(
    const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst);

// Angle at the point between the rays from two camera centers, radians.
double TriangulationAngle(const Eigen::Vector3d& center_a, const Eigen::Vector3d& center_b,
                          const Eigen::Vector3d& point);

}  // namespace streamsfm
