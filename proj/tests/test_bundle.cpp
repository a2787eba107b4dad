#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "streamsfm/bundle.hpp"
#include "streamsfm/rng.hpp"
#include "test_support.hpp"

using namespace streamsfm;

TEST_CASE("zero-noise problem at ground truth evaluates to zero") {
  Rng rng(3);
  const BaProblem problem = test::MakeSyntheticProblem(&rng, 4, 12, /*sigma_px=*/0.0);
  const EvaluateResult eval = Evaluate(problem);
  CHECK(eval.cost == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(eval.dropped == 0);
  for (const auto& block : eval.blocks) {
    CHECK(block.valid);
    CHECK(block.f.norm() < 1e-9);
  }
}

TEST_CASE("single residual perturbed by one pixel costs one") {
  Rng rng(4);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 2, 4, 0.0);
  problem.residuals.resize(1);
  problem.residuals[0].observed += Eigen::Vector2d(1.0, 0.0);
  const EvaluateResult eval = Evaluate(problem);
  CHECK(eval.cost == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a point behind a camera is dropped with a diagnostic count") {
  Rng rng(5);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 2, 4, 0.0);
  // Move one point squarely behind camera 0.
  const Pose& pose = problem.cameras[0].pose;
  problem.points[0].xyz = pose.Center() - 5.0 * pose.ViewDirection();
  const EvaluateResult eval = Evaluate(problem);
  CHECK(eval.dropped > 0);
}

TEST_CASE("analytic Jacobians match central finite differences") {
  Rng rng(6);
  int checked = 0;
  for (int trial = 0; trial < 25; ++trial) {
    BaProblem problem = test::MakeSyntheticProblem(&rng, 3, 6, 0.5);
    const double max_rel = test::MaxJacobianRelativeError(problem, &rng, 4);
    CHECK(max_rel <= 1e-4);
    ++checked;
  }
  CHECK(checked == 25);
}

TEST_CASE("Schur step equals the dense full-system solve") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int num_cams = 2 + static_cast<int>(rng.UniformInt(3));
    const int num_pts = 5 + static_cast<int>(rng.UniformInt(11));
    BaProblem problem = test::MakeSyntheticProblem(&rng, num_cams, num_pts, 0.5);
    const double lambda = 1e-3;
    const EvaluateResult eval = Evaluate(problem);
    const SchurStep step = LmStepSchur(problem, eval, lambda, /*use_weights=*/false);
    REQUIRE(step.ok);

    Eigen::VectorXd dense = test::DenseNormalEquationStep(problem, eval, lambda);
    Eigen::VectorXd schur(step.delta_cameras.size() + step.delta_points.size());
    schur << step.delta_cameras, step.delta_points;
    const double rel = (schur - dense).norm() / std::max(dense.norm(), 1e-300);
    CHECK(rel <= 1e-8);
  }
}

TEST_CASE("huge damping shrinks the step toward zero") {
  Rng rng(8);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 3, 8, 1.0);
  const EvaluateResult eval = Evaluate(problem);
  const SchurStep small = LmStepSchur(problem, eval, 1e12, false);
  const SchurStep normal = LmStepSchur(problem, eval, 1e-4, false);
  REQUIRE(small.ok);
  REQUIRE(normal.ok);
  const double n_small =
      std::sqrt(small.delta_cameras.squaredNorm() + small.delta_points.squaredNorm());
  const double n_normal =
      std::sqrt(normal.delta_cameras.squaredNorm() + normal.delta_points.squaredNorm());
  CHECK(n_small < 1e-9 * std::max(n_normal, 1.0));
}

TEST_CASE("step at the optimum is zero") {
  Rng rng(9);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 3, 8, 0.0);
  const EvaluateResult eval = Evaluate(problem);
  const SchurStep step = LmStepSchur(problem, eval, 1e-4, false);
  REQUIRE(step.ok);
  CHECK(step.delta_cameras.norm() < 1e-12);
  CHECK(step.delta_points.norm() < 1e-12);
}

TEST_CASE("solve from ground truth terminates immediately at zero cost") {
  Rng rng(10);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 4, 10, 0.0);
  LmConfig config;
  const SolveReport report = Solve(&problem, config);
  CHECK(report.final_cost <= 1e-18);
  CHECK(report.iterations.size() <= 2);
}

TEST_CASE("solve recovers a perturbed noiseless problem") {
  Rng rng(11);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 6, 40, 0.0);
  test::PerturbProblem(&problem, &rng, /*rot_deg=*/1.0, /*point_rel=*/0.01);
  CHECK(Evaluate(problem).cost > 1.0);

  LmConfig config;
  config.max_iterations = 100;
  config.cost_tolerance = 1e-14;
  const SolveReport report = Solve(&problem, config);
  CHECK(report.final_cost <= report.initial_cost);
  CHECK(RmsReprojectionError(problem) <= 1e-6);
}

TEST_CASE("accepted costs are non-increasing and noisy solve lands near sigma") {
  Rng rng(12);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 10, 60, 0.5);
  test::PerturbProblem(&problem, &rng, 0.5, 0.005);
  LmConfig config;
  config.max_iterations = 60;
  const SolveReport report = Solve(&problem, config);

  double last = report.initial_cost;
  for (const auto& it : report.iterations) {
    if (it.accepted) {
      CHECK(it.cost_after <= last * (1 + 1e-12));
      last = it.cost_after;
    }
  }
  const double rms = RmsReprojectionError(problem);
  CHECK(rms >= 0.3);
  CHECK(rms <= 0.7);
}

TEST_CASE("weighted solve with unit weights steps identically to plain solve") {
  Rng rng(13);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 4, 15, 0.5);
  test::PerturbProblem(&problem, &rng, 0.3, 0.01);
  const EvaluateResult eval = Evaluate(problem);
  const SchurStep plain = LmStepSchur(problem, eval, 1e-4, false);
  const SchurStep weighted = LmStepSchur(problem, eval, 1e-4, true);
  REQUIRE(plain.ok);
  REQUIRE(weighted.ok);
  CHECK((plain.delta_cameras - weighted.delta_cameras).norm() <= 1e-10);
  CHECK((plain.delta_points - weighted.delta_points).norm() <= 1e-10);
}

TEST_CASE("fixed cameras are bitwise unchanged by the weighted solve") {
  Rng rng(14);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 5, 20, 0.5);
  test::PerturbProblem(&problem, &rng, 0.3, 0.01);
  problem.cameras[3].fixed = true;
  problem.cameras[4].fixed = true;
  const Pose before3 = problem.cameras[3].pose;
  const Pose before4 = problem.cameras[4].pose;

  LmConfig config;
  config.max_iterations = 25;
  SolveWeightedLocal(&problem, config);

  CHECK(problem.cameras[3].pose.rotation.coeffs() == before3.rotation.coeffs());
  CHECK(problem.cameras[3].pose.translation == before3.translation);
  CHECK(problem.cameras[4].pose.rotation.coeffs() == before4.rotation.coeffs());
  CHECK(problem.cameras[4].pose.translation == before4.translation);
}

TEST_CASE("all cameras fixed is invalid") {
  Rng rng(15);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 2, 6, 0.0);
  for (auto& cam : problem.cameras) cam.fixed = true;
  LmConfig config;
  CHECK_THROWS_AS((void)SolveWeightedLocal(&problem, config), std::invalid_argument);
}

TEST_CASE("a tiny weight scales the camera update down by orders of magnitude") {
  Rng rng(16);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 3, 12, 0.5);
  test::PerturbProblem(&problem, &rng, 0.5, 0.01);

  const EvaluateResult eval = Evaluate(problem);
  const SchurStep unit = LmStepSchur(problem, eval, /*lambda=*/1.0, true);
  problem.cameras[1].weight = 1e-9;
  const SchurStep damped = LmStepSchur(problem, eval, /*lambda=*/1.0, true);
  REQUIRE(unit.ok);
  REQUIRE(damped.ok);

  const double before = unit.delta_cameras.segment<6>(6).norm();
  const double after = damped.delta_cameras.segment<6>(6).norm();
  CHECK(before / std::max(after, 1e-300) >= 1e6);
}

TEST_CASE("final cost is invariant under a sim3 gauge change") {
  Rng rng(17);
  BaProblem problem = test::MakeSyntheticProblem(&rng, 5, 30, 0.3);
  test::PerturbProblem(&problem, &rng, 0.2, 0.005);
  BaProblem transformed = problem;
  SimilarityTransform t;
  t.scale = 1.7;
  t.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.8, Eigen::Vector3d(1, 2, 3).normalized()));
  t.translation = Eigen::Vector3d(4, -2, 9);
  for (auto& cam : transformed.cameras) cam.pose = TransformPose(t, cam.pose);
  for (auto& pt : transformed.points) pt.xyz = t.Apply(pt.xyz);

  LmConfig config;
  config.max_iterations = 200;
  config.cost_tolerance = 1e-14;
  const SolveReport a = Solve(&problem, config);
  const SolveReport b = Solve(&transformed, config);
  CHECK(std::abs(a.final_cost - b.final_cost) <=
        1e-7 * std::max({1.0, a.final_cost, b.final_cost}));
}

TEST_CASE("huber loss bounds the influence of a gross outlier") {
  Rng rng(18);
  BaProblem clean = test::MakeSyntheticProblem(&rng, 4, 25, 0.3);
  BaProblem robust = clean;
  clean.residuals[0].observed += Eigen::Vector2d(300.0, -200.0);
  robust.residuals[0].observed += Eigen::Vector2d(300.0, -200.0);
  robust.huber_delta = 2.0;

  LmConfig config;
  config.max_iterations = 50;
  Solve(&clean, config);
  Solve(&robust, config);
  // With the robust loss the corrupted observation barely moves the optimum;
  // without it the squared loss drags the block noticeably.
  BaProblem robust_eval = robust;
  robust_eval.huber_delta.reset();
  robust_eval.residuals.erase(robust_eval.residuals.begin());
  clean.residuals.erase(clean.residuals.begin());
  clean.huber_delta.reset();
  CHECK(RmsReprojectionError(robust_eval) < RmsReprojectionError(clean));
}
