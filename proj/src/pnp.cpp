#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "streamsfm/estimators.hpp"
#include "streamsfm/rng.hpp"

namespace streamsfm {

namespace {

// Direct linear transform for [R|t] from >= 6 normalized-image/world pairs.
// World points are conditioned (centered and scaled) before the solve.
bool DltPose(const std::vector<Correspondence2D3D>& corrs, const std::vector<int>& sample,
             const CameraIntrinsics& intr, Pose* pose) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int idx : sample) centroid += corrs[idx].xyz;
  centroid /= static_cast<double>(sample.size());
  double spread = 0.0;
  for (int idx : sample) spread += (corrs[idx].xyz - centroid).norm();
  spread /= static_cast<double>(sample.size());
  if (spread < 1e-12) return false;
  const double s3 = std::sqrt(3.0) / spread;

  Eigen::MatrixXd a(2 * sample.size(), 12);
  for (size_t i = 0; i < sample.size(); ++i) {
    const Correspondence2D3D& c = corrs[sample[i]];
    const Eigen::Vector3d xw = s3 * (c.xyz - centroid);
    const double u = (c.pixel.x() - intr.cx) / intr.fx;
    const double v = (c.pixel.y() - intr.cy) / intr.fy;
    a.row(2 * i) << xw.x(), xw.y(), xw.z(), 1, 0, 0, 0, 0, -u * xw.x(), -u * xw.y(), -u * xw.z(),
        -u;
    a.row(2 * i + 1) << 0, 0, 0, 0, xw.x(), xw.y(), xw.z(), 1, -v * xw.x(), -v * xw.y(),
        -v * xw.z(), -v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::VectorXd pv = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> p;
  p << pv(0), pv(1), pv(2), pv(3), pv(4), pv(5), pv(6), pv(7), pv(8), pv(9), pv(10), pv(11);

  // Undo world conditioning: X' = s3 * (X - centroid).
  Eigen::Matrix4d t_norm = Eigen::Matrix4d::Identity();
  t_norm.block<3, 3>(0, 0) *= s3;
  t_norm.block<3, 1>(0, 3) = -s3 * centroid;
  p = p * t_norm;

  // Fix the projective sign so depths come out positive.
  double depth_sum = 0.0;
  for (int idx : sample) {
    depth_sum += p.row(2).dot(corrs[idx].xyz.homogeneous());
  }
  if (depth_sum < 0) p = -p;

  const Eigen::Matrix3d m = p.block<3, 3>(0, 0);
  Eigen::JacobiSVD<Eigen::Matrix3d> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double scale = msvd.singularValues().mean();
  if (scale < 1e-12) return false;
  Eigen::Matrix3d r = msvd.matrixU() * msvd.matrixV().transpose();
  if (r.determinant() < 0) return false;

  pose->rotation = Eigen::Quaterniond(r).normalized();
  pose->translation = p.col(3) / scale;
  return true;
}

int CountInliers(const std::vector<Correspondence2D3D>& corrs, const CameraIntrinsics& intr,
                 const Pose& pose, double thresh_sq, std::vector<int>* inliers) {
  inliers->clear();
  for (size_t i = 0; i < corrs.size(); ++i) {
    const auto pixel = Project(intr, pose, corrs[i].xyz);
    if (!pixel) continue;
    if ((*pixel - corrs[i].pixel).squaredNorm() < thresh_sq) {
      inliers->push_back(static_cast<int>(i));
    }
  }
  return static_cast<int>(inliers->size());
}

Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

void RefinePose(const std::vector<Correspondence2D3D>& corrs, const CameraIntrinsics& intr,
                Pose* pose, int iterations) {
  double lambda = 1e-6;
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    double cost = 0.0;
    for (const Correspondence2D3D& c : corrs) {
      const Eigen::Vector3d x_cam = pose->ToCamera(c.xyz);
      if (x_cam.z() <= 1e-12) continue;
      const double inv_z = 1.0 / x_cam.z();
      const Eigen::Vector2d predicted(intr.fx * x_cam.x() * inv_z + intr.cx,
                                      intr.fy * x_cam.y() * inv_z + intr.cy);
      const Eigen::Vector2d f = predicted - c.pixel;
      cost += f.squaredNorm();

      Eigen::Matrix<double, 2, 3> j_proj;
      j_proj << intr.fx * inv_z, 0, -intr.fx * x_cam.x() * inv_z * inv_z, 0, intr.fy * inv_z,
          -intr.fy * x_cam.y() * inv_z * inv_z;
      Eigen::Matrix<double, 2, 6> j;
      j.block<2, 3>(0, 0) = -j_proj * Skew(x_cam - pose->translation);
      j.block<2, 3>(0, 3) = j_proj;
      h += j.transpose() * j;
      g += j.transpose() * f;
    }
    Eigen::Matrix<double, 6, 6> h_damped = h;
    h_damped.diagonal() += lambda * h.diagonal();
    const Eigen::Matrix<double, 6, 1> delta = h_damped.ldlt().solve(-g);
    if (!delta.allFinite()) break;

    Pose trial = *pose;
    const Eigen::Vector3d dtheta = delta.head<3>();
    const double angle = dtheta.norm();
    Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
    if (angle > 1e-15) {
      dq = Eigen::Quaterniond(Eigen::AngleAxisd(angle, dtheta / angle));
    }
    trial.rotation = (dq * trial.rotation).normalized();
    trial.translation += delta.tail<3>();

    double trial_cost = 0.0;
    for (const Correspondence2D3D& c : corrs) {
      const auto pixel = Project(intr, trial, c.xyz);
      if (pixel) trial_cost += (*pixel - c.pixel).squaredNorm();
    }
    if (trial_cost < cost) {
      *pose = trial;
      lambda = std::max(lambda * 0.3, 1e-12);
      if (cost - trial_cost < 1e-14 * std::max(cost, 1.0)) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e8) break;
    }
  }
}

PnpResult PnpRansac(const std::vector<Correspondence2D3D>& correspondences,
                    const CameraIntrinsics& intrinsics, const PnpOptions& options) {
  PnpResult result;
  const int n = static_cast<int>(correspondences.size());
  if (n < 6) {
    result.status = PnpStatus::kInsufficient;
    return result;
  }

  Rng rng(HashCombine(options.seed, 0x9e55ULL));
  const double thresh_sq = options.threshold_px * options.threshold_px;

  Pose best_pose;
  std::vector<int> best_inliers;
  std::vector<int> inliers;
  int trials = options.max_iterations;
  for (int it = 0; it < trials; ++it) {
    std::vector<int> sample;
    sample.reserve(6);
    while (static_cast<int>(sample.size()) < 6) {
      const int idx = static_cast<int>(rng.UniformInt(n));
      if (std::find(sample.begin(), sample.end(), idx) == sample.end()) sample.push_back(idx);
    }
    Pose pose;
    if (!DltPose(correspondences, sample, intrinsics, &pose)) continue;
    // The 6-point DLT is projective and degrades badly under noise once the
    // rotation constraint is enforced; a short polish on the sample pulls the
    // pose back onto the metric manifold before scoring.
    std::vector<Correspondence2D3D> sample_corrs;
    sample_corrs.reserve(sample.size());
    for (int idx : sample) sample_corrs.push_back(correspondences[idx]);
    RefinePose(sample_corrs, intrinsics, &pose, 10);
    CountInliers(correspondences, intrinsics, pose, thresh_sq, &inliers);
    if (inliers.size() > best_inliers.size()) {
      best_inliers = inliers;
      best_pose = pose;
      const double w = static_cast<double>(inliers.size()) / n;
      const double p_sample = std::pow(w, 6);
      if (p_sample > 1e-12 && p_sample < 1.0) {
        const double needed = std::log(0.01) / std::log(1.0 - p_sample);
        if (needed < static_cast<double>(options.max_iterations)) {
          trials = std::min(trials, it + 1 + std::max(1, static_cast<int>(std::ceil(needed))));
        }
      }
    }
  }

  if (static_cast<int>(best_inliers.size()) < options.min_inliers) {
    result.status = PnpStatus::kFailed;
    return result;
  }

  if (options.refine) {
    std::vector<Correspondence2D3D> inlier_corrs;
    inlier_corrs.reserve(best_inliers.size());
    for (int idx : best_inliers) inlier_corrs.push_back(correspondences[idx]);
    RefinePose(inlier_corrs, intrinsics, &best_pose, 15);
    CountInliers(correspondences, intrinsics, best_pose, thresh_sq, &best_inliers);
    if (static_cast<int>(best_inliers.size()) < options.min_inliers) {
      result.status = PnpStatus::kFailed;
      return result;
    }
  }

  result.status = PnpStatus::kSuccess;
  result.pose = best_pose;
  result.inliers = std::move(best_inliers);
  return result;
}

}  // namespace streamsfm
