#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "streamsfm/geometry.hpp"

namespace streamsfm {

struct BaCamera {
  uint64_t image_id = 0;
  Pose pose;
  CameraIntrinsics intrinsics;
  double weight = 1.0;  // per-camera damping scale; 1 = ordinary update
  bool fixed = false;   // pose held constant (the weight-infinity case)
};

struct BaPoint {
  uint64_t point_id = 0;
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  bool fixed = false;
};

struct BaResidual {
  int camera_index = 0;
  int point_index = 0;
  Eigen::Vector2d observed = Eigen::Vector2d::Zero();
};

struct BaProblem {
  std::vector<BaCamera> cameras;
  std::vector<BaPoint> points;
  std::vector<BaResidual> residuals;
  std::optional<double> huber_delta;  // robust loss, off when empty
};

struct LmConfig {
  double lambda_init = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  int max_iterations = 100;
  double cost_tolerance = 1e-8;   // relative decrease per accepted step
  double param_tolerance = 1e-14; // step norm below -> converged
  double cost_floor = 1e-24;      // cost below -> already at the optimum
  double lambda_max = 1e32;
};

// One linearized residual block: 2-vector error, 2x6 camera and 2x3 point
// Jacobians under the local parameterization [rotation increment, dt].
struct ResidualBlockEval {
  bool valid = false;
  Eigen::Vector2d f = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 2, 6> j_camera = Eigen::Matrix<double, 2, 6>::Zero();
  Eigen::Matrix<double, 2, 3> j_point = Eigen::Matrix<double, 2, 3>::Zero();
};

struct EvaluateResult {
  double cost = 0.0;
  size_t dropped = 0;  // residual blocks behind a camera
  std::vector<ResidualBlockEval> blocks;
};

// Residuals, cost and analytic Jacobians at the current parameters.
EvaluateResult Evaluate(const BaProblem& problem);

struct SchurStep {
  bool ok = false;
  // Stacked increments, 6 per non-fixed camera / 3 per non-fixed point, in
  // problem order.
  Eigen::VectorXd delta_cameras;
  Eigen::VectorXd delta_points;
  double predicted_cost = 0.0;
};

// Solves the damped normal equations through the reduced camera system and
// point back-substitution. use_weights scales each camera's damping by
// 1/weight; unit weights reproduce the plain step exactly.
SchurStep LmStepSchur(const BaProblem& problem, const EvaluateResult& eval, double lambda,
                      bool use_weights);

void ApplyStep(BaProblem* problem, const SchurStep& step);

enum class LmTermination {
  kConverged,
  kMaxIterations,
  kLambdaOverflow,  // converged at the current point
  kNoResiduals,
};

struct IterationRecord {
  int iteration = 0;
  double cost_before = 0.0;
  double cost_after = 0.0;
  double lambda = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
  double wall_ms = 0.0;
};

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int accepted_steps = 0;
  LmTermination termination = LmTermination::kConverged;
  std::vector<IterationRecord> iterations;
};

// Standard LM trust loop; camera weights are ignored, fixed flags honored.
SolveReport Solve(BaProblem* problem, const LmConfig& config);

// Hierarchically weighted local solve: fixed cameras stay constant, finite
// weights scale the per-camera damping (smaller weight, smaller update).
// Throws std::invalid_argument when every camera is fixed.
SolveReport SolveWeightedLocal(BaProblem* problem, const LmConfig& config);

// Mean reprojection error (pixels) over valid residual blocks.
double MeanReprojectionError(const BaProblem& problem);
double RmsReprojectionError(const BaProblem& problem);

}  // namespace streamsfm
