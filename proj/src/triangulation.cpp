#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "streamsfm/estimators.hpp"

namespace streamsfm {

Eigen::Vector3d TriangulateLinear(const std::vector<RayObservation>& observations) {
  Eigen::MatrixXd a(2 * observations.size(), 4);
  for (size_t i = 0; i < observations.size(); ++i) {
    const RayObservation& obs = observations[i];
    const double u = (obs.pixel.x() - obs.intrinsics.cx) / obs.intrinsics.fx;
    const double v = (obs.pixel.y() - obs.intrinsics.cy) / obs.intrinsics.fy;
    Eigen::Matrix<double, 3, 4> p;
    p.block<3, 3>(0, 0) = obs.pose.rotation.toRotationMatrix();
    p.col(3) = obs.pose.translation;
    a.row(2 * i) = u * p.row(2) - p.row(0);
    a.row(2 * i + 1) = v * p.row(2) - p.row(1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-300) return Eigen::Vector3d::Constant(1e12);
  return x.head<3>() / x(3);
}

namespace {

std::vector<int> SupportingViews(const std::vector<RayObservation>& observations,
                                 const Eigen::Vector3d& xyz, double thresh_sq) {
  std::vector<int> support;
  for (size_t i = 0; i < observations.size(); ++i) {
    const RayObservation& obs = observations[i];
    const auto pixel = Project(obs.intrinsics, obs.pose, xyz);
    if (!pixel) continue;  // behind the camera
    if ((*pixel - obs.pixel).squaredNorm() < thresh_sq) {
      support.push_back(static_cast<int>(i));
    }
  }
  return support;
}

}  // namespace

TriangulationResult TriangulateMultiviewRansac(const std::vector<RayObservation>& observations,
                                               const TriangulationOptions& options) {
  TriangulationResult result;
  const int n = static_cast<int>(observations.size());
  if (n < 2) {
    result.status = TriangulationStatus::kInsufficient;
    return result;
  }

  const double thresh_sq = options.threshold_px * options.threshold_px;

  // Every observation pair is a hypothesis; n stays small so the exhaustive
  // sweep is both cheap and deterministic.
  std::vector<int> best_support;
  Eigen::Vector3d best_xyz = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Eigen::Vector3d xyz = TriangulateLinear({observations[i], observations[j]});
      const std::vector<int> support = SupportingViews(observations, xyz, thresh_sq);
      if (support.size() > best_support.size()) {
        best_support = support;
        best_xyz = xyz;
      }
    }
  }
  if (best_support.size() < 2) {
    result.status = TriangulationStatus::kFailed;
    return result;
  }

  // Re-estimate over all inlier views, then re-derive the support.
  std::vector<RayObservation> inlier_obs;
  inlier_obs.reserve(best_support.size());
  for (int idx : best_support) inlier_obs.push_back(observations[idx]);
  const Eigen::Vector3d refined = TriangulateLinear(inlier_obs);
  std::vector<int> support = SupportingViews(observations, refined, thresh_sq);
  if (support.size() >= 2) {
    best_xyz = refined;
    best_support = std::move(support);
  }

  // Thin-baseline guard on the surviving views.
  double max_angle = 0.0;
  for (size_t i = 0; i < best_support.size(); ++i) {
    for (size_t j = i + 1; j < best_support.size(); ++j) {
      max_angle = std::max(
          max_angle, TriangulationAngle(observations[best_support[i]].pose.Center(),
                                        observations[best_support[j]].pose.Center(), best_xyz));
    }
  }
  if (max_angle < options.min_angle_deg * M_PI / 180.0) {
    result.status = TriangulationStatus::kShallowAngle;
    result.xyz = best_xyz;
    result.inliers = std::move(best_support);
    return result;
  }

  result.status = TriangulationStatus::kSuccess;
  result.xyz = best_xyz;
  result.inliers = std::move(best_support);
  return result;
}

}  // namespace streamsfm
