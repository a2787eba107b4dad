#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "streamsfm/estimators.hpp"
#include "streamsfm/rng.hpp"

namespace streamsfm {

namespace {

struct Normalization {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
};

// Hartley normalization: centroid to origin, mean distance sqrt(2).
Normalization NormalizePoints(const std::vector<Eigen::Vector2d>& pts,
                              std::vector<Eigen::Vector2d>* out) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;

  Normalization n;
  n.t << scale, 0, -scale * centroid.x(), 0, scale, -scale * centroid.y(), 0, 0, 1;
  out->resize(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) (*out)[i] = scale * (pts[i] - centroid);
  return n;
}

Eigen::Matrix3d FundamentalFromSample(const std::vector<Correspondence2D>& corrs,
                                      const std::vector<int>& sample) {
  std::vector<Eigen::Vector2d> pa, pb;
  pa.reserve(sample.size());
  pb.reserve(sample.size());
  for (int idx : sample) {
    pa.push_back(corrs[idx].a);
    pb.push_back(corrs[idx].b);
  }
  std::vector<Eigen::Vector2d> na, nb;
  const Normalization ta = NormalizePoints(pa, &na);
  const Normalization tb = NormalizePoints(pb, &nb);

  Eigen::MatrixXd a(sample.size(), 9);
  for (size_t i = 0; i < sample.size(); ++i) {
    const double x1 = na[i].x(), y1 = na[i].y();
    const double x2 = nb[i].x(), y2 = nb[i].y();
    a.row(i) << x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd fv = svd.matrixV().col(8);
  Eigen::Matrix3d f;
  f << fv(0), fv(1), fv(2), fv(3), fv(4), fv(5), fv(6), fv(7), fv(8);

  // Rank-2 enforcement.
  Eigen::JacobiSVD<Eigen::Matrix3d> fsvd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d sing = fsvd.singularValues();
  sing(2) = 0.0;
  f = fsvd.matrixU() * sing.asDiagonal() * fsvd.matrixV().transpose();

  return tb.t.transpose() * f * ta.t;
}

double SampsonError(const Eigen::Matrix3d& f, const Eigen::Vector2d& a,
                    const Eigen::Vector2d& b) {
  const Eigen::Vector3d xa(a.x(), a.y(), 1.0);
  const Eigen::Vector3d xb(b.x(), b.y(), 1.0);
  const Eigen::Vector3d fa = f * xa;
  const Eigen::Vector3d ftb = f.transpose() * xb;
  const double num = xb.dot(fa);
  const double denom = fa.head<2>().squaredNorm() + ftb.head<2>().squaredNorm();
  if (denom < 1e-300) return std::numeric_limits<double>::max();
  return num * num / denom;
}

Eigen::Matrix3d HomographyFromSample(const std::vector<Correspondence2D>& corrs,
                                     const std::vector<int>& sample) {
  std::vector<Eigen::Vector2d> pa, pb;
  for (int idx : sample) {
    pa.push_back(corrs[idx].a);
    pb.push_back(corrs[idx].b);
  }
  std::vector<Eigen::Vector2d> na, nb;
  const Normalization ta = NormalizePoints(pa, &na);
  const Normalization tb = NormalizePoints(pb, &nb);

  Eigen::MatrixXd a(2 * sample.size(), 9);
  for (size_t i = 0; i < sample.size(); ++i) {
    const double x1 = na[i].x(), y1 = na[i].y();
    const double x2 = nb[i].x(), y2 = nb[i].y();
    a.row(2 * i) << -x1, -y1, -1, 0, 0, 0, x2 * x1, x2 * y1, x2;
    a.row(2 * i + 1) << 0, 0, 0, -x1, -y1, -1, y2 * x1, y2 * y1, y2;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d h;
  h << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  return tb.t.inverse() * h * ta.t;
}

double HomographyTransferError(const Eigen::Matrix3d& h, const Eigen::Vector2d& a,
                               const Eigen::Vector2d& b) {
  const Eigen::Vector3d hb = h * Eigen::Vector3d(a.x(), a.y(), 1.0);
  if (std::abs(hb.z()) < 1e-300) return std::numeric_limits<double>::max();
  return (hb.head<2>() / hb.z() - b).squaredNorm();
}

std::vector<int> DrawSample(Rng* rng, int n, int k) {
  std::vector<int> sample;
  sample.reserve(k);
  while (static_cast<int>(sample.size()) < k) {
    const int idx = static_cast<int>(rng->UniformInt(n));
    if (std::find(sample.begin(), sample.end(), idx) == sample.end()) {
      sample.push_back(idx);
    }
  }
  return sample;
}

int AdaptiveTrials(int inliers, int total, int sample_size, int max_trials) {
  if (inliers <= 0) return max_trials;
  const double w = static_cast<double>(inliers) / total;
  const double p_sample = std::pow(w, sample_size);
  if (p_sample >= 1.0 - 1e-12) return 1;
  const double trials = std::log(0.01) / std::log(1.0 - p_sample);
  if (!(trials < static_cast<double>(max_trials))) return max_trials;
  return std::max(1, static_cast<int>(std::ceil(trials)));
}

// Triangulates a normalized-coordinate correspondence under (R, t); returns
// the point in frame A.
Eigen::Vector3d TriangulateNormalized(const Eigen::Matrix3d& r, const Eigen::Vector3d& t,
                                      const Eigen::Vector2d& xa, const Eigen::Vector2d& xb) {
  Eigen::Matrix<double, 3, 4> pa = Eigen::Matrix<double, 3, 4>::Zero();
  pa.block<3, 3>(0, 0).setIdentity();
  Eigen::Matrix<double, 3, 4> pb;
  pb.block<3, 3>(0, 0) = r;
  pb.col(3) = t;

  Eigen::Matrix4d a;
  a.row(0) = xa.x() * pa.row(2) - pa.row(0);
  a.row(1) = xa.y() * pa.row(2) - pa.row(1);
  a.row(2) = xb.x() * pb.row(2) - pb.row(0);
  a.row(3) = xb.y() * pb.row(2) - pb.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d x = svd.matrixV().col(3);
  return x.head<3>() / x(3);
}

}  // namespace

TwoViewResult TwoViewVerify(const std::vector<Correspondence2D>& correspondences,
                            const CameraIntrinsics& intr_a, const CameraIntrinsics& intr_b,
                            const TwoViewOptions& options) {
  TwoViewResult result;
  const int n = static_cast<int>(correspondences.size());
  if (n < 8) {
    result.status = TwoViewStatus::kInsufficient;
    return result;
  }

  Rng rng(HashCombine(options.seed, 0x7f00d));
  const double thresh_sq = options.threshold_px * options.threshold_px;

  // RANSAC over the normalized 8-point fundamental.
  Eigen::Matrix3d best_f = Eigen::Matrix3d::Zero();
  std::vector<int> best_inliers;
  int trials = options.max_iterations;
  for (int it = 0; it < trials; ++it) {
    const std::vector<int> sample = DrawSample(&rng, n, 8);
    const Eigen::Matrix3d f = FundamentalFromSample(correspondences, sample);
    std::vector<int> inliers;
    for (int i = 0; i < n; ++i) {
      if (SampsonError(f, correspondences[i].a, correspondences[i].b) < thresh_sq) {
        inliers.push_back(i);
      }
    }
    if (inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
      best_f = f;
      trials = std::min(trials,
                        it + 1 + AdaptiveTrials(static_cast<int>(best_inliers.size()), n, 8,
                                                options.max_iterations));
    }
  }
  if (best_inliers.size() < 8) {
    result.status = TwoViewStatus::kRejected;
    return result;
  }

  // Re-fit on all inliers for a stable estimate.
  best_f = FundamentalFromSample(correspondences, best_inliers);
  std::vector<int> refined;
  for (int i = 0; i < n; ++i) {
    if (SampsonError(best_f, correspondences[i].a, correspondences[i].b) < thresh_sq) {
      refined.push_back(i);
    }
  }
  if (refined.size() >= 8) best_inliers = std::move(refined);

  // Parallel homography fit flags planar or rotation-only geometry.
  std::vector<int> best_h_inliers;
  int h_trials = options.max_iterations;
  for (int it = 0; it < h_trials; ++it) {
    const std::vector<int> sample = DrawSample(&rng, n, 4);
    const Eigen::Matrix3d h = HomographyFromSample(correspondences, sample);
    std::vector<int> inliers;
    for (int i = 0; i < n; ++i) {
      if (HomographyTransferError(h, correspondences[i].a, correspondences[i].b) < thresh_sq) {
        inliers.push_back(i);
      }
    }
    if (inliers.size() > best_h_inliers.size()) {
      best_h_inliers = std::move(inliers);
      h_trials = std::min(h_trials,
                          it + 1 + AdaptiveTrials(static_cast<int>(best_h_inliers.size()), n, 4,
                                                  options.max_iterations));
    }
  }

  result.num_inliers = static_cast<int>(best_inliers.size());
  result.num_homography_inliers = static_cast<int>(best_h_inliers.size());
  result.inliers = best_inliers;

  // Essential matrix from the fundamental and the known intrinsics.
  Eigen::Matrix3d ka, kb;
  ka << intr_a.fx, 0, intr_a.cx, 0, intr_a.fy, intr_a.cy, 0, 0, 1;
  kb << intr_b.fx, 0, intr_b.cx, 0, intr_b.fy, intr_b.cy, 0, 0, 1;
  Eigen::Matrix3d e = kb.transpose() * best_f * ka;
  Eigen::JacobiSVD<Eigen::Matrix3d> esvd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = esvd.matrixU();
  Eigen::Matrix3d v = esvd.matrixV();
  if (u.determinant() < 0) u.col(2) *= -1;
  if (v.determinant() < 0) v.col(2) *= -1;

  Eigen::Matrix3d w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Eigen::Matrix3d r1 = u * w * v.transpose();
  const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
  const Eigen::Vector3d t_unit = u.col(2);

  // Cheirality: pick the decomposition with the most points in front of both
  // cameras; record the median triangulation angle on the way.
  const Eigen::Matrix3d ka_inv = ka.inverse();
  const Eigen::Matrix3d kb_inv = kb.inverse();
  int best_support = -1;
  for (const Eigen::Matrix3d& r : {r1, r2}) {
    for (const double sign : {1.0, -1.0}) {
      const Eigen::Vector3d t = sign * t_unit;
      int support = 0;
      std::vector<double> angles;
      for (int idx : best_inliers) {
        const Eigen::Vector3d xa =
            ka_inv * Eigen::Vector3d(correspondences[idx].a.x(), correspondences[idx].a.y(), 1.0);
        const Eigen::Vector3d xb =
            kb_inv * Eigen::Vector3d(correspondences[idx].b.x(), correspondences[idx].b.y(), 1.0);
        const Eigen::Vector3d p =
            TriangulateNormalized(r, t, xa.head<2>() / xa.z(), xb.head<2>() / xb.z());
        const double za = p.z();
        const double zb = (r * p + t).z();
        if (za > 0 && zb > 0) {
          ++support;
          const Eigen::Vector3d center_b = -(r.transpose() * t);
          angles.push_back(TriangulationAngle(Eigen::Vector3d::Zero(), center_b, p));
        }
      }
      if (support > best_support) {
        best_support = support;
        result.relative.rotation = Eigen::Quaterniond(r).normalized();
        result.relative.translation = t;
        if (!angles.empty()) {
          std::nth_element(angles.begin(), angles.begin() + angles.size() / 2, angles.end());
          result.median_tri_angle_rad = angles[angles.size() / 2];
        } else {
          result.median_tri_angle_rad = 0.0;
        }
      }
    }
  }

  const bool degenerate =
      result.num_homography_inliers >= options.homography_ratio * result.num_inliers;
  if (degenerate) {
    result.status = TwoViewStatus::kDegenerate;
  } else if (result.num_inliers > options.min_inliers) {
    result.status = TwoViewStatus::kSuccess;
  } else {
    result.status = TwoViewStatus::kRejected;
  }
  return result;
}

}  // namespace streamsfm
