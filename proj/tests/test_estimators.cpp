#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "streamsfm/estimators.hpp"
#include "streamsfm/rng.hpp"
#include "test_support.hpp"

using namespace streamsfm;

namespace {

CameraIntrinsics Intr() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 800.0;
  intr.cx = 400.0;
  intr.cy = 300.0;
  intr.width = 800;
  intr.height = 600;
  return intr;
}

struct Rig {
  Pose pose_a, pose_b;
  std::vector<Eigen::Vector3d> points;
  std::vector<Correspondence2D> corrs;  // only points seen by both
};

Rig MakeRig(Rng* rng, int num_points, double sigma_px, double baseline = 2.0) {
  Rig rig;
  rig.pose_a = test::LookAt(Eigen::Vector3d(-baseline / 2, -8.0, 0.3),
                            Eigen::Vector3d::Zero());
  rig.pose_b = test::LookAt(Eigen::Vector3d(baseline / 2, -8.0, -0.2),
                            Eigen::Vector3d::Zero());
  const CameraIntrinsics intr = Intr();
  while (static_cast<int>(rig.corrs.size()) < num_points) {
    const Eigen::Vector3d p(rng->Uniform(-3, 3), rng->Uniform(-3, 3), rng->Uniform(-3, 3));
    const auto pa = Project(intr, rig.pose_a, p);
    const auto pb = Project(intr, rig.pose_b, p);
    if (!pa || !pb) continue;
    rig.points.push_back(p);
    Correspondence2D c;
    c.a = *pa + sigma_px * Eigen::Vector2d(rng->Gaussian(), rng->Gaussian());
    c.b = *pb + sigma_px * Eigen::Vector2d(rng->Gaussian(), rng->Gaussian());
    rig.corrs.push_back(c);
  }
  return rig;
}

Pose RelativePose(const Pose& a, const Pose& b) {
  // x_b = R_rel x_a + t_rel.
  Pose rel;
  rel.rotation = (b.rotation * a.rotation.conjugate()).normalized();
  rel.translation = b.translation - rel.rotation * a.translation;
  return rel;
}

}  // namespace

TEST_CASE("two-view verify recovers the relative rotation exactly on clean data") {
  Rng rng(21);
  const Rig rig = MakeRig(&rng, 120, 0.0);
  TwoViewOptions options;
  options.seed = 5;
  const TwoViewResult result = TwoViewVerify(rig.corrs, Intr(), Intr(), options);
  REQUIRE(result.status == TwoViewStatus::kSuccess);
  CHECK(result.num_inliers > 100);

  const Pose truth = RelativePose(rig.pose_a, rig.pose_b);
  CHECK(RotationAngle(result.relative.rotation, truth.rotation) < 1e-6);
  // Translation matches up to the scale that a two-view estimate cannot fix.
  const Eigen::Vector3d t_truth = truth.translation.normalized();
  CHECK((result.relative.translation.normalized() - t_truth).norm() < 1e-6);
}

TEST_CASE("two-view verify flags pure rotation as degenerate") {
  Rng rng(22);
  const CameraIntrinsics intr = Intr();
  const Pose pose_a = test::LookAt(Eigen::Vector3d(0, -8, 0), Eigen::Vector3d::Zero());
  Pose pose_b = pose_a;
  pose_b.rotation = (Eigen::Quaterniond(Eigen::AngleAxisd(0.12, Eigen::Vector3d::UnitZ())) *
                     pose_b.rotation)
                        .normalized();
  // Same center: pure rotation.
  pose_b.translation = -(pose_b.rotation * pose_a.Center());

  std::vector<Correspondence2D> corrs;
  while (corrs.size() < 120) {
    const Eigen::Vector3d p(rng.Uniform(-3, 3), rng.Uniform(-3, 3), rng.Uniform(-3, 3));
    const auto pa = Project(intr, pose_a, p);
    const auto pb = Project(intr, pose_b, p);
    if (!pa || !pb) continue;
    corrs.push_back({*pa, *pb});
  }
  TwoViewOptions options;
  options.seed = 6;
  const TwoViewResult result = TwoViewVerify(corrs, intr, intr, options);
  CHECK(result.status == TwoViewStatus::kDegenerate);
}

TEST_CASE("two-view verify flags a planar scene as degenerate") {
  Rng rng(23);
  const CameraIntrinsics intr = Intr();
  const Pose pose_a = test::LookAt(Eigen::Vector3d(-1, -8, 0), Eigen::Vector3d::Zero());
  const Pose pose_b = test::LookAt(Eigen::Vector3d(1.5, -7.5, 0.4), Eigen::Vector3d::Zero());
  std::vector<Correspondence2D> corrs;
  while (corrs.size() < 120) {
    const Eigen::Vector3d p(rng.Uniform(-3, 3), 0.0, rng.Uniform(-3, 3));  // y = 0 plane
    const auto pa = Project(intr, pose_a, p);
    const auto pb = Project(intr, pose_b, p);
    if (!pa || !pb) continue;
    corrs.push_back({*pa, *pb});
  }
  TwoViewOptions options;
  options.seed = 7;
  const TwoViewResult result = TwoViewVerify(corrs, intr, intr, options);
  CHECK(result.status == TwoViewStatus::kDegenerate);
}

TEST_CASE("two-view verify boundary and rejection cases") {
  Rng rng(24);
  const Rig rig = MakeRig(&rng, 7, 0.0);
  TwoViewOptions options;
  CHECK(TwoViewVerify(rig.corrs, Intr(), Intr(), options).status ==
        TwoViewStatus::kInsufficient);

  // 30 clean correspondences: verified geometry but not enough inliers.
  const Rig small = MakeRig(&rng, 30, 0.0);
  const TwoViewResult r = TwoViewVerify(small.corrs, Intr(), Intr(), options);
  CHECK(r.status == TwoViewStatus::kRejected);
}

TEST_CASE("two-view verify tolerates noise and outliers") {
  Rng rng(25);
  Rig rig = MakeRig(&rng, 150, 0.5);
  // 20% gross mismatches.
  for (int i = 0; i < 30; ++i) {
    const size_t idx = rng.UniformInt(rig.corrs.size());
    rig.corrs[idx].b = Eigen::Vector2d(rng.Uniform(0, 800), rng.Uniform(0, 600));
  }
  TwoViewOptions options;
  options.seed = 8;
  const TwoViewResult result = TwoViewVerify(rig.corrs, Intr(), Intr(), options);
  REQUIRE(result.status == TwoViewStatus::kSuccess);
  const Pose truth = RelativePose(rig.pose_a, rig.pose_b);
  CHECK(RotationAngle(result.relative.rotation, truth.rotation) < 0.01);
}

TEST_CASE("two-view verify is deterministic under a fixed seed") {
  Rng rng(26);
  Rig rig = MakeRig(&rng, 120, 0.5);
  TwoViewOptions options;
  options.seed = 99;
  const TwoViewResult r1 = TwoViewVerify(rig.corrs, Intr(), Intr(), options);
  const TwoViewResult r2 = TwoViewVerify(rig.corrs, Intr(), Intr(), options);
  CHECK(r1.num_inliers == r2.num_inliers);
  CHECK(r1.relative.rotation.coeffs() == r2.relative.rotation.coeffs());
  CHECK(r1.relative.translation == r2.relative.translation);
}

TEST_CASE("pnp recovers an exact pose from clean correspondences") {
  Rng rng(31);
  const CameraIntrinsics intr = Intr();
  const Pose truth = test::LookAt(Eigen::Vector3d(2, -9, 1), Eigen::Vector3d(0.2, 0, 0.1));
  std::vector<Correspondence2D3D> corrs;
  while (corrs.size() < 50) {
    const Eigen::Vector3d p(rng.Uniform(-3, 3), rng.Uniform(-3, 3), rng.Uniform(-3, 3));
    const auto pixel = Project(intr, truth, p);
    if (!pixel) continue;
    corrs.push_back({*pixel, p});
  }
  PnpOptions options;
  options.seed = 11;
  const PnpResult result = PnpRansac(corrs, intr, options);
  REQUIRE(result.status == PnpStatus::kSuccess);
  CHECK(RotationAngle(result.pose.rotation, truth.rotation) < 1e-6);
  CHECK((result.pose.translation - truth.translation).norm() < 1e-6);
  CHECK(result.inliers.size() == corrs.size());
}

TEST_CASE("pnp tolerates 30 percent outliers at half-pixel noise") {
  Rng rng(32);
  const CameraIntrinsics intr = Intr();
  const Pose truth = test::LookAt(Eigen::Vector3d(-1, -10, 0.5), Eigen::Vector3d::Zero());
  std::vector<Correspondence2D3D> corrs;
  while (corrs.size() < 50) {
    const Eigen::Vector3d p(rng.Uniform(-3, 3), rng.Uniform(-3, 3), rng.Uniform(-3, 3));
    const auto pixel = Project(intr, truth, p);
    if (!pixel) continue;
    Correspondence2D3D c;
    c.xyz = p;
    c.pixel = *pixel + 0.5 * Eigen::Vector2d(rng.Gaussian(), rng.Gaussian());
    corrs.push_back(c);
  }
  for (int i = 0; i < 15; ++i) {
    corrs[rng.UniformInt(corrs.size())].pixel =
        Eigen::Vector2d(rng.Uniform(0, 800), rng.Uniform(0, 600));
  }
  PnpOptions options;
  options.seed = 12;
  const PnpResult result = PnpRansac(corrs, intr, options);
  REQUIRE(result.status == PnpStatus::kSuccess);
  CHECK(RotationAngle(result.pose.rotation, truth.rotation) < 0.2 * M_PI / 180.0);
}

TEST_CASE("pnp is deterministic under a fixed seed") {
  Rng rng(34);
  const CameraIntrinsics intr = Intr();
  const Pose truth = test::LookAt(Eigen::Vector3d(1, -9, 0.4), Eigen::Vector3d::Zero());
  std::vector<Correspondence2D3D> corrs;
  while (corrs.size() < 40) {
    const Eigen::Vector3d p(rng.Uniform(-3, 3), rng.Uniform(-3, 3), rng.Uniform(-3, 3));
    const auto pixel = Project(intr, truth, p);
    if (!pixel) continue;
    corrs.push_back({*pixel + 0.5 * Eigen::Vector2d(rng.Gaussian(), rng.Gaussian()), p});
  }
  PnpOptions options;
  options.seed = 77;
  const PnpResult a = PnpRansac(corrs, intr, options);
  const PnpResult b = PnpRansac(corrs, intr, options);
  REQUIRE(a.status == PnpStatus::kSuccess);
  CHECK(a.pose.rotation.coeffs() == b.pose.rotation.coeffs());
  CHECK(a.pose.translation == b.pose.translation);
  CHECK(a.inliers == b.inliers);
}

TEST_CASE("triangulation is deterministic") {
  Rng rng(35);
  const CameraIntrinsics intr = Intr();
  const Eigen::Vector3d point(0.2, -0.4, 0.9);
  std::vector<RayObservation> obs;
  for (int i = 0; i < 4; ++i) {
    const double angle = -0.6 + 0.4 * i;
    const Pose pose =
        test::LookAt(Eigen::Vector3d(9 * std::sin(angle), -9 * std::cos(angle), 0.4), point);
    obs.push_back({pose, intr,
                   *Project(intr, pose, point) +
                       0.5 * Eigen::Vector2d(rng.Gaussian(), rng.Gaussian())});
  }
  const TriangulationResult a = TriangulateMultiviewRansac(obs, {});
  const TriangulationResult b = TriangulateMultiviewRansac(obs, {});
  REQUIRE(a.status == TriangulationStatus::kSuccess);
  CHECK(a.xyz == b.xyz);
  CHECK(a.inliers == b.inliers);
}

TEST_CASE("pnp boundary cases") {
  const CameraIntrinsics intr = Intr();
  std::vector<Correspondence2D3D> five(5);
  CHECK(PnpRansac(five, intr, {}).status == PnpStatus::kInsufficient);

  // Enough correspondences but hopeless data: registration fails.
  Rng rng(33);
  std::vector<Correspondence2D3D> junk;
  for (int i = 0; i < 30; ++i) {
    junk.push_back({Eigen::Vector2d(rng.Uniform(0, 800), rng.Uniform(0, 600)),
                    Eigen::Vector3d(rng.Gaussian(), rng.Gaussian(), rng.Gaussian())});
  }
  CHECK(PnpRansac(junk, intr, {}).status == PnpStatus::kFailed);
}

TEST_CASE("two exact rays intersect exactly") {
  const CameraIntrinsics intr = Intr();
  const Eigen::Vector3d point(0.4, 0.2, 0.7);
  // ~30 degrees apart.
  const Pose pose_a = test::LookAt(Eigen::Vector3d(-3, -9, 0), point);
  const Pose pose_b = test::LookAt(Eigen::Vector3d(3, -8, 1), point);
  std::vector<RayObservation> obs = {
      {pose_a, intr, *Project(intr, pose_a, point)},
      {pose_b, intr, *Project(intr, pose_b, point)},
  };
  const TriangulationResult result = TriangulateMultiviewRansac(obs, {});
  REQUIRE(result.status == TriangulationStatus::kSuccess);
  CHECK((result.xyz - point).norm() < 1e-9);
  CHECK(result.inliers.size() == 2);
}

TEST_CASE("a gross outlier ray is excluded from the inlier set") {
  Rng rng(41);
  const CameraIntrinsics intr = Intr();
  const Eigen::Vector3d point(0.0, 0.5, -0.3);
  std::vector<RayObservation> obs;
  for (int i = 0; i < 5; ++i) {
    const double angle = -0.8 + 0.4 * i;
    const Pose pose =
        test::LookAt(Eigen::Vector3d(10 * std::sin(angle), -10 * std::cos(angle), 0.5), point);
    obs.push_back({pose, intr, *Project(intr, pose, point)});
  }
  obs[2].pixel += Eigen::Vector2d(120.0, -60.0);  // corrupt one ray
  const TriangulationResult result = TriangulateMultiviewRansac(obs, {});
  REQUIRE(result.status == TriangulationStatus::kSuccess);
  CHECK(result.inliers.size() == 4);
  CHECK(std::find(result.inliers.begin(), result.inliers.end(), 2) == result.inliers.end());
  CHECK((result.xyz - point).norm() < 1e-6);
}

TEST_CASE("thin-baseline pair is rejected by the angle guard") {
  const CameraIntrinsics intr = Intr();
  const Eigen::Vector3d point(0, 0, 0);
  // Two cameras ~0.5 degrees apart as seen from the point.
  const double r = 10.0;
  const double half = 0.25 * M_PI / 180.0;
  const Pose pose_a = test::LookAt(Eigen::Vector3d(r * std::sin(-half), -r * std::cos(-half), 0), point);
  const Pose pose_b = test::LookAt(Eigen::Vector3d(r * std::sin(half), -r * std::cos(half), 0), point);
  std::vector<RayObservation> obs = {
      {pose_a, intr, *Project(intr, pose_a, point)},
      {pose_b, intr, *Project(intr, pose_b, point)},
  };
  const TriangulationResult result = TriangulateMultiviewRansac(obs, {});
  CHECK(result.status == TriangulationStatus::kShallowAngle);
}

TEST_CASE("one ray is insufficient") {
  const CameraIntrinsics intr = Intr();
  const Pose pose = test::LookAt(Eigen::Vector3d(0, -10, 0), Eigen::Vector3d::Zero());
  std::vector<RayObservation> obs = {{pose, intr, Eigen::Vector2d(400, 300)}};
  CHECK(TriangulateMultiviewRansac(obs, {}).status == TriangulationStatus::kInsufficient);
}
