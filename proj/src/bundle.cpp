#include "streamsfm/bundle.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace streamsfm {

namespace {

Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Quaterniond QuaternionExp(const Eigen::Vector3d& theta) {
  const double angle = theta.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * theta.x(), 0.5 * theta.y(), 0.5 * theta.z());
    q.normalize();
    return q;
  }
  const Eigen::Vector3d axis = theta / angle;
  const double half = 0.5 * angle;
  const double s = std::sin(half);
  return Eigen::Quaterniond(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

}  // namespace

EvaluateResult Evaluate(const BaProblem& problem) {
  EvaluateResult result;
  result.blocks.resize(problem.residuals.size());

  for (size_t r = 0; r < problem.residuals.size(); ++r) {
    const BaResidual& res = problem.residuals[r];
    const BaCamera& cam = problem.cameras[res.camera_index];
    const BaPoint& pt = problem.points[res.point_index];
    ResidualBlockEval& block = result.blocks[r];

    const Eigen::Vector3d x_cam = cam.pose.ToCamera(pt.xyz);
    if (x_cam.z() <= 1e-12) {
      ++result.dropped;
      continue;
    }
    block.valid = true;

    const double inv_z = 1.0 / x_cam.z();
    const Eigen::Vector2d predicted(
        cam.intrinsics.fx * x_cam.x() * inv_z + cam.intrinsics.cx,
        cam.intrinsics.fy * x_cam.y() * inv_z + cam.intrinsics.cy);
    block.f = predicted - res.observed;

    // d(pixel)/d(x_cam)
    Eigen::Matrix<double, 2, 3> j_proj;
    j_proj << cam.intrinsics.fx * inv_z, 0.0, -cam.intrinsics.fx * x_cam.x() * inv_z * inv_z,
        0.0, cam.intrinsics.fy * inv_z, -cam.intrinsics.fy * x_cam.y() * inv_z * inv_z;

    // Rotation perturbed on the left in the camera frame:
    // x_cam(dtheta) = Exp(dtheta) * R * p + t  =>  d/dtheta = -[R p]_x.
    const Eigen::Vector3d rotated = x_cam - cam.pose.translation;
    block.j_camera.block<2, 3>(0, 0) = -j_proj * Skew(rotated);
    block.j_camera.block<2, 3>(0, 3) = j_proj;
    block.j_point = j_proj * cam.pose.rotation.toRotationMatrix();

    double cost_term = block.f.squaredNorm();
    if (problem.huber_delta) {
      const double delta = *problem.huber_delta;
      const double s = cost_term;
      if (s > delta * delta) {
        cost_term = 2.0 * delta * std::sqrt(s) - delta * delta;
        const double w = delta / std::sqrt(s);  // rho'(s)
        const double sw = std::sqrt(w);
        block.f *= sw;
        block.j_camera *= sw;
        block.j_point *= sw;
      }
    }
    result.cost += cost_term;
  }
  return result;
}

SchurStep LmStepSchur(const BaProblem& problem, const EvaluateResult& eval, double lambda,
                      bool use_weights) {
  SchurStep step;

  // Compact indices for the free parameters.
  std::vector<int> cam_slot(problem.cameras.size(), -1);
  std::vector<int> pt_slot(problem.points.size(), -1);
  int num_cams = 0, num_pts = 0;
  for (size_t i = 0; i < problem.cameras.size(); ++i) {
    if (!problem.cameras[i].fixed) cam_slot[i] = num_cams++;
  }
  for (size_t i = 0; i < problem.points.size(); ++i) {
    if (!problem.points[i].fixed) pt_slot[i] = num_pts++;
  }
  step.delta_cameras = Eigen::VectorXd::Zero(6 * num_cams);
  step.delta_points = Eigen::VectorXd::Zero(3 * num_pts);
  if (num_cams == 0 && num_pts == 0) return step;

  std::vector<Eigen::Matrix<double, 6, 6>> u(num_cams, Eigen::Matrix<double, 6, 6>::Zero());
  std::vector<Eigen::Matrix<double, 6, 1>> g_c(num_cams, Eigen::Matrix<double, 6, 1>::Zero());
  std::vector<Eigen::Matrix3d> v(num_pts, Eigen::Matrix3d::Zero());
  std::vector<Eigen::Vector3d> g_p(num_pts, Eigen::Vector3d::Zero());
  // Per point, the W blocks that couple it to free cameras.
  std::vector<std::vector<std::pair<int, Eigen::Matrix<double, 6, 3>>>> w_blocks(num_pts);

  for (size_t r = 0; r < problem.residuals.size(); ++r) {
    const ResidualBlockEval& block = eval.blocks[r];
    if (!block.valid) continue;
    const int cs = cam_slot[problem.residuals[r].camera_index];
    const int ps = pt_slot[problem.residuals[r].point_index];
    if (cs >= 0) {
      u[cs] += block.j_camera.transpose() * block.j_camera;
      g_c[cs] += block.j_camera.transpose() * block.f;
    }
    if (ps >= 0) {
      v[ps] += block.j_point.transpose() * block.j_point;
      g_p[ps] += block.j_point.transpose() * block.f;
    }
    if (cs >= 0 && ps >= 0) {
      w_blocks[ps].emplace_back(cs, block.j_camera.transpose() * block.j_point);
    }
  }

  // Damping as a scaled diagonal addition; a camera's weight divides lambda,
  // so small weights clamp its update toward zero.
  std::vector<Eigen::Matrix<double, 6, 6>> u_damped(num_cams);
  {
    int slot = 0;
    for (size_t i = 0; i < problem.cameras.size(); ++i) {
      if (problem.cameras[i].fixed) continue;
      double damp = lambda;
      if (use_weights) {
        const double weight = problem.cameras[i].weight;
        if (!(weight > 0.0)) throw std::invalid_argument("non-positive camera weight");
        damp = lambda / weight;
      }
      u_damped[slot] = u[slot];
      u_damped[slot].diagonal() += damp * u[slot].diagonal();
      ++slot;
    }
  }

  std::vector<Eigen::Matrix3d> v_inv(num_pts);
  for (int i = 0; i < num_pts; ++i) {
    Eigen::Matrix3d v_damped = v[i];
    v_damped.diagonal() += lambda * v[i].diagonal();
    const double det = v_damped.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-300) {
      return step;  // not positive definite; caller raises lambda
    }
    v_inv[i] = v_damped.inverse();
  }

  // Reduced camera system (dense over camera blocks).
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(6 * num_cams, 6 * num_cams);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(6 * num_cams);
  for (int c = 0; c < num_cams; ++c) {
    s.block<6, 6>(6 * c, 6 * c) = u_damped[c];
    rhs.segment<6>(6 * c) = -g_c[c];
  }
  for (int p = 0; p < num_pts; ++p) {
    const Eigen::Vector3d y = v_inv[p] * g_p[p];
    for (const auto& [cj, wj] : w_blocks[p]) {
      rhs.segment<6>(6 * cj) += wj * y;
      const Eigen::Matrix<double, 6, 3> wj_vinv = wj * v_inv[p];
      for (const auto& [ck, wk] : w_blocks[p]) {
        s.block<6, 6>(6 * cj, 6 * ck) -= wj_vinv * wk.transpose();
      }
    }
  }

  if (num_cams > 0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success) return step;
    step.delta_cameras = ldlt.solve(rhs);
    if (!step.delta_cameras.allFinite()) return step;
  }

  // Back-substitution: dp = -V^-1 (g_p + W^T dc).
  for (int p = 0; p < num_pts; ++p) {
    Eigen::Vector3d acc = g_p[p];
    for (const auto& [cj, wj] : w_blocks[p]) {
      acc += wj.transpose() * step.delta_cameras.segment<6>(6 * cj);
    }
    step.delta_points.segment<3>(3 * p) = -(v_inv[p] * acc);
  }
  if (!step.delta_points.allFinite()) return step;

  // Linearized cost ||f + J delta||^2 for the trust-region diagnostics.
  double predicted = eval.cost;
  for (int c = 0; c < num_cams; ++c) {
    const auto dc = step.delta_cameras.segment<6>(6 * c);
    predicted += 2.0 * g_c[c].dot(dc) + dc.dot(u[c] * dc);
  }
  for (int p = 0; p < num_pts; ++p) {
    const auto dp = step.delta_points.segment<3>(3 * p);
    predicted += 2.0 * g_p[p].dot(dp) + dp.dot(v[p] * dp);
    for (const auto& [cj, wj] : w_blocks[p]) {
      predicted += 2.0 * step.delta_cameras.segment<6>(6 * cj).dot(wj * dp);
    }
  }
  step.predicted_cost = predicted;
  step.ok = true;
  return step;
}

void ApplyStep(BaProblem* problem, const SchurStep& step) {
  int slot = 0;
  for (BaCamera& cam : problem->cameras) {
    if (cam.fixed) continue;
    const Eigen::Vector3d dtheta = step.delta_cameras.segment<3>(6 * slot);
    const Eigen::Vector3d dt = step.delta_cameras.segment<3>(6 * slot + 3);
    cam.pose.rotation = (QuaternionExp(dtheta) * cam.pose.rotation).normalized();
    cam.pose.translation += dt;
    ++slot;
  }
  slot = 0;
  for (BaPoint& pt : problem->points) {
    if (pt.fixed) continue;
    pt.xyz += step.delta_points.segment<3>(3 * slot);
    ++slot;
  }
}

namespace {

SolveReport RunLm(BaProblem* problem, const LmConfig& config, bool use_weights) {
  SolveReport report;
  if (problem->residuals.empty()) {
    report.termination = LmTermination::kNoResiduals;
    return report;
  }

  EvaluateResult eval = Evaluate(*problem);
  report.initial_cost = eval.cost;
  report.final_cost = eval.cost;
  double lambda = config.lambda_init;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    if (eval.cost <= config.cost_floor) {
      report.termination = LmTermination::kConverged;
      return report;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const SchurStep step = LmStepSchur(*problem, eval, lambda, use_weights);

    IterationRecord record;
    record.iteration = iter;
    record.cost_before = eval.cost;
    record.lambda = lambda;

    if (!step.ok) {
      lambda *= config.lambda_up;
      record.cost_after = eval.cost;
      record.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      report.iterations.push_back(record);
      if (lambda > config.lambda_max) {
        report.termination = LmTermination::kLambdaOverflow;
        return report;
      }
      continue;
    }

    const double step_norm =
        std::sqrt(step.delta_cameras.squaredNorm() + step.delta_points.squaredNorm());
    record.step_norm = step_norm;

    BaProblem trial = *problem;
    ApplyStep(&trial, step);
    EvaluateResult trial_eval = Evaluate(trial);
    record.cost_after = trial_eval.cost;

    if (trial_eval.cost < eval.cost) {
      record.accepted = true;
      *problem = std::move(trial);
      const double decrease = eval.cost - trial_eval.cost;
      const double relative = eval.cost > 0.0 ? decrease / eval.cost : 0.0;
      eval = std::move(trial_eval);
      report.final_cost = eval.cost;
      ++report.accepted_steps;
      lambda = std::max(config.lambda_down * lambda, 1e-18);

      record.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      report.iterations.push_back(record);

      if (relative < config.cost_tolerance || step_norm < config.param_tolerance ||
          eval.cost == 0.0) {
        report.termination = LmTermination::kConverged;
        return report;
      }
    } else {
      lambda *= config.lambda_up;
      record.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      report.iterations.push_back(record);
      if (step_norm < config.param_tolerance) {
        report.termination = LmTermination::kConverged;
        return report;
      }
      if (lambda > config.lambda_max) {
        report.termination = LmTermination::kLambdaOverflow;
        return report;
      }
    }
  }
  report.termination = LmTermination::kMaxIterations;
  return report;
}

}  // namespace

SolveReport Solve(BaProblem* problem, const LmConfig& config) {
  return RunLm(problem, config, /*use_weights=*/false);
}

SolveReport SolveWeightedLocal(BaProblem* problem, const LmConfig& config) {
  bool any_free = false;
  for (const BaCamera& cam : problem->cameras) {
    if (!cam.fixed) {
      any_free = true;
      break;
    }
  }
  if (!any_free) throw std::invalid_argument("SolveWeightedLocal: all cameras fixed");
  return RunLm(problem, config, /*use_weights=*/true);
}

double MeanReprojectionError(const BaProblem& problem) {
  double sum = 0.0;
  size_t n = 0;
  for (const BaResidual& res : problem.residuals) {
    const BaCamera& cam = problem.cameras[res.camera_index];
    const auto pixel = Project(cam.intrinsics, cam.pose, problem.points[res.point_index].xyz);
    if (!pixel) continue;
    sum += (*pixel - res.observed).norm();
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double RmsReprojectionError(const BaProblem& problem) {
  double sum = 0.0;
  size_t n = 0;
  for (const BaResidual& res : problem.residuals) {
    const BaCamera& cam = problem.cameras[res.camera_index];
    const auto pixel = Project(cam.intrinsics, cam.pose, problem.points[res.point_index].xyz);
    if (!pixel) continue;
    sum += (*pixel - res.observed).squaredNorm();
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

}  // namespace streamsfm
