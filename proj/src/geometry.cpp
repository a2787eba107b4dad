#include "streamsfm/geometry.hpp"

#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace streamsfm {

double RotationAngle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Eigen::Quaterniond d = a.conjugate() * b;
  // atan2 form stays accurate near identity where acos(w) degrades.
  return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

SimilarityTransform SimilarityTransform::Inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.conjugate();
  inv.translation = -(inv.scale * (inv.rotation * translation));
  return inv;
}

SimilarityTransform operator*(const SimilarityTransform& a, const SimilarityTransform& b) {
  SimilarityTransform c;
  c.scale = a.scale * b.scale;
  c.rotation = (a.rotation * b.rotation).normalized();
  c.translation = a.scale * (a.rotation * b.translation) + a.translation;
  return c;
}

std::optional<Eigen::Vector2d> Project(const CameraIntrinsics& intrinsics, const Pose& pose,
                                       const Eigen::Vector3d& xyz) {
  return ProjectCameraPoint(intrinsics, pose.ToCamera(xyz));
}

Eigen::Vector3d PixelRayDirection(const CameraIntrinsics& intrinsics, const Pose& pose,
                                  const Eigen::Vector2d& pixel) {
  const Eigen::Vector3d dir_cam((pixel.x() - intrinsics.cx) / intrinsics.fx,
                                (pixel.y() - intrinsics.cy) / intrinsics.fy, 1.0);
  return (pose.rotation.conjugate() * dir_cam).normalized();
}

Pose TransformPose(const SimilarityTransform& t, const Pose& pose) {
  // With p' = s*R_t*p + t_t the camera frame is kept aligned up to the
  // global scale: x_cam' = s * x_cam, which leaves pinhole projections
  // unchanged. R' = R_c * R_t^-1, t' = s*t_c - R'*t_t.
  Pose out;
  out.rotation = (pose.rotation * t.rotation.conjugate()).normalized();
  out.translation = t.scale * pose.translation - (out.rotation * t.translation);
  return out;
}

std::optional<SimilarityTransform> EstimateSimilarityUmeyama(
    const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst) {
  if (src.size() < 3 || src.size() != dst.size()) {
    throw std::invalid_argument("EstimateSimilarityUmeyama: needs >= 3 paired points");
  }
  const double n = static_cast<double>(src.size());

  Eigen::Vector3d mu_s = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_d = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;

  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d cov_src = Eigen::Matrix3d::Zero();
  double var_s = 0.0;
  for (size_t i = 0; i < src.size(); ++i) {
    const Eigen::Vector3d ds = src[i] - mu_s;
    const Eigen::Vector3d dd = dst[i] - mu_d;
    sigma += dd * ds.transpose();
    cov_src += ds * ds.transpose();
    var_s += ds.squaredNorm();
  }
  sigma /= n;
  cov_src /= n;
  var_s /= n;

  // Collinearity check: second-largest covariance eigenvalue vanishing
  // relative to the largest means the sample spans at most a line.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov_src);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  if (evals(2) <= 0.0 || evals(1) / evals(2) < 1e-8) {
    return std::nullopt;
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d s_fix = Eigen::Matrix3d::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) {
    s_fix(2, 2) = -1.0;
  }

  SimilarityTransform t;
  const Eigen::Matrix3d r = svd.matrixU() * s_fix * svd.matrixV().transpose();
  t.rotation = Eigen::Quaterniond(r).normalized();
  t.scale = (svd.singularValues().asDiagonal() * s_fix).trace() / var_s;
  if (!(t.scale > 0.0)) {
    return std::nullopt;
  }
  t.translation = mu_d - t.scale * (r * mu_s);
  return t;
}

double TriangulationAngle(const Eigen::Vector3d& center_a, const Eigen::Vector3d& center_b,
                          const Eigen::Vector3d& point) {
  const Eigen::Vector3d ra = center_a - point;
  const Eigen::Vector3d rb = center_b - point;
  const double denom = ra.norm() * rb.norm();
  if (denom <= 0.0) return 0.0;
  const double c = std::clamp(ra.dot(rb) / denom, -1.0, 1.0);
  return std::acos(c);
}

}  // namespace streamsfm
