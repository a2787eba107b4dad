// Acceptance suite: one criterion per function, one [PASS]/[FAIL] line each,
// nonzero exit when any criterion fails. Printed numbers are measured values.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "streamsfm/association.hpp"
#include "streamsfm/bundle.hpp"
#include "streamsfm/dataset.hpp"
#include "streamsfm/engine.hpp"
#include "streamsfm/hnsw.hpp"
#include "streamsfm/metrics.hpp"
#include "streamsfm/reconstruction_io.hpp"
#include "streamsfm/rng.hpp"
#include "streamsfm/submap.hpp"
#include "streamsfm/synth_scene.hpp"
#include "streamsfm/wire.hpp"
#include "test_support.hpp"

using namespace streamsfm;

namespace {

struct Criterion {
  const char* name;
  bool (*run)(std::string* detail);
};

double Seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

GlobalDescriptor RandomUnit(uint64_t id, int dim, Rng* rng) {
  std::vector<float> v(dim);
  for (float& x : v) x = static_cast<float>(rng->Gaussian());
  return GlobalDescriptor::Normalized(id, std::move(v));
}

// Image-style descriptors for the retrieval criteria: a long spiral survey
// whose viewpoints keep revisiting the scene, embedded exactly the way the
// engine's frames are.
SyntheticScene SurveyScene(int count, uint64_t seed) {
  SceneSpec spec = DefaultSingleAgentSpec(count, seed);
  spec.agents[0].end_deg = (count / 400.0) * 360.0;
  spec.sigma_px = 0.5;
  return Generate(spec);
}

std::vector<GlobalDescriptor> SceneDescriptors(const SyntheticScene& scene, uint64_t seed) {
  std::vector<GlobalDescriptor> all;
  all.reserve(scene.frames.size());
  for (size_t i = 0; i < scene.frames.size(); ++i) {
    auto d = MakeDescriptor(scene.frames[i].visible_points, 256, HashCombine(seed, i), 0.02);
    d.image_id = i;
    all.push_back(std::move(d));
  }
  return all;
}

// --------------------------------------------------------------------------
// 1. Index recall vs the exhaustive oracle: 5000 synthetic image descriptors,
//    16 connections, ef_construction 200, mean top-30 recall >= 0.95. Probes
//    are fresh images captured at already-seen viewpoints (new jitter).
bool Criterion1(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = 5000, top = 30, queries = 80;
  const SyntheticScene scene = SurveyScene(n, 31);
  const auto all = SceneDescriptors(scene, 31);
  HnswParams params;
  params.max_connections = 16;
  params.ef_construction = 200;
  params.seed = 31;
  HnswIndex index(256, params);
  for (const auto& d : all) index.Insert(d);

  Rng rng(131);
  double recall = 0.0;
  for (int q = 0; q < queries; ++q) {
    const auto& frame = scene.frames[rng.UniformInt(scene.frames.size())];
    const auto query =
        MakeDescriptor(frame.visible_points, 256, HashCombine(777, q), 0.02);
    const auto approx = index.QueryTopN(query.values, top);
    const auto exact = ExhaustiveQuery(all, query.values, top);
    std::set<uint64_t> truth;
    for (const auto& e : exact) truth.insert(e.image_id);
    size_t hits = 0;
    for (const auto& a : approx) hits += truth.count(a.image_id);
    recall += static_cast<double>(hits) / exact.size();
  }
  recall /= queries;
  char buffer[160];
  std::snprintf(buffer, sizeof(buffer), "mean top-30 recall %.4f (need >= 0.95), %.1fs",
                recall, Seconds(t0));
  *detail = buffer;
  return recall >= 0.95 && Seconds(t0) <= 30.0;
}

// --------------------------------------------------------------------------
// 2. Latency shape: mean insert+query cost at N=8000 <= 3x the cost at
//    N=1000 while the exhaustive scan grows >= 5x.
bool Criterion2(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = 8000, top = 30;
  const auto all = SceneDescriptors(SurveyScene(n, 47), 47);
  HnswParams params;
  params.max_connections = 16;
  params.ef_construction = 200;
  params.seed = 47;
  HnswIndex index(256, params);

  double window_low = 0.0, window_high = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto ti = std::chrono::steady_clock::now();
    if (i > 0) (void)index.QueryTopN(all[i].values, top);
    index.Insert(all[i]);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - ti)
                          .count();
    if (i >= 900 && i < 1000) window_low += ms;
    if (i >= 7900) window_high += ms;
  }
  window_low /= 100.0;
  window_high /= 100.0;

  auto exhaustive_ms = [&](size_t count, int queries) {
    const std::vector<GlobalDescriptor> subset(all.begin(), all.begin() + count);
    const auto ts = std::chrono::steady_clock::now();
    for (int q = 0; q < queries; ++q) {
      (void)ExhaustiveQuery(subset, all[q].values, top);
    }
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - ts)
               .count() /
           queries;
  };
  const double ex_low = exhaustive_ms(1000, 60);
  const double ex_high = exhaustive_ms(8000, 60);

  const double hnsw_ratio = window_high / window_low;
  const double ex_ratio = ex_high / ex_low;
  char buffer[200];
  std::snprintf(buffer, sizeof(buffer),
                "insert+query %.2f -> %.2f ms (x%.2f, need <= 3); exhaustive %.2f -> %.2f ms "
                "(x%.2f, need >= 5); %.1fs",
                window_low, window_high, hnsw_ratio, ex_low, ex_high, ex_ratio, Seconds(t0));
  *detail = buffer;
  return hnsw_ratio <= 3.0 && ex_ratio >= 5.0 && Seconds(t0) <= 60.0;
}

// --------------------------------------------------------------------------
// 3. Analytic Jacobians vs central finite differences, 100+ random residual
//    blocks, max relative error <= 1e-4.
bool Criterion3(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(53);
  double worst = 0.0;
  int blocks = 0;
  for (int trial = 0; trial < 30; ++trial) {
    BaProblem problem = test::MakeSyntheticProblem(&rng, 3, 8, 0.5);
    worst = std::max(worst, test::MaxJacobianRelativeError(problem, &rng, 4));
    blocks += 4;
  }
  char buffer[160];
  std::snprintf(buffer, sizeof(buffer), "%d blocks, max relative error %.3e (need <= 1e-4)",
                blocks, worst);
  *detail = buffer;
  return worst <= 1e-4 && Seconds(t0) <= 5.0;
}

// --------------------------------------------------------------------------
// 4. Reduced camera system vs dense full-system solve on 50 random problems.
bool Criterion4(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(59);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int cams = 2 + static_cast<int>(rng.UniformInt(3));
    const int pts = 5 + static_cast<int>(rng.UniformInt(11));
    BaProblem problem = test::MakeSyntheticProblem(&rng, cams, pts, 0.5);
    const EvaluateResult eval = Evaluate(problem);
    const SchurStep step = LmStepSchur(problem, eval, 1e-3, false);
    if (!step.ok) return false;
    const Eigen::VectorXd dense = test::DenseNormalEquationStep(problem, eval, 1e-3);
    Eigen::VectorXd schur(step.delta_cameras.size() + step.delta_points.size());
    schur << step.delta_cameras, step.delta_points;
    worst = std::max(worst, (schur - dense).norm() / std::max(dense.norm(), 1e-300));
  }
  char buffer[160];
  std::snprintf(buffer, sizeof(buffer),
                "50 problems, max relative step difference %.3e (need <= 1e-8)", worst);
  *detail = buffer;
  return worst <= 1e-8 && Seconds(t0) <= 10.0;
}

// --------------------------------------------------------------------------
// 5. Weight limits: unit weights reproduce the plain step to 1e-10, pinned
//    cameras are bitwise constant, and the three closed-form weight cases.
bool Criterion5(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(61);

  BaProblem problem = test::MakeSyntheticProblem(&rng, 5, 18, 0.5);
  test::PerturbProblem(&problem, &rng, 0.4, 0.01);
  const EvaluateResult eval = Evaluate(problem);
  const SchurStep plain = LmStepSchur(problem, eval, 1e-4, false);
  const SchurStep weighted = LmStepSchur(problem, eval, 1e-4, true);
  if (!plain.ok || !weighted.ok) return false;
  const double step_diff =
      std::max((plain.delta_cameras - weighted.delta_cameras).norm(),
               (plain.delta_points - weighted.delta_points).norm());

  BaProblem pinned = test::MakeSyntheticProblem(&rng, 5, 18, 0.5);
  test::PerturbProblem(&pinned, &rng, 0.4, 0.01);
  pinned.cameras[2].fixed = true;
  pinned.cameras[4].fixed = true;
  const Pose before2 = pinned.cameras[2].pose;
  const Pose before4 = pinned.cameras[4].pose;
  LmConfig config;
  config.max_iterations = 25;
  SolveWeightedLocal(&pinned, config);
  const bool pinned_ok =
      pinned.cameras[2].pose.rotation.coeffs() == before2.rotation.coeffs() &&
      pinned.cameras[2].pose.translation == before2.translation &&
      pinned.cameras[4].pose.rotation.coeffs() == before4.rotation.coeffs() &&
      pinned.cameras[4].pose.translation == before4.translation;

  const bool weights_ok = HierarchicalWeight(0, 99.0) == 1.0 &&
                          HierarchicalWeight(1, 99.0) == 1.0 &&
                          HierarchicalWeight(3, 4.0) == 0.0625;

  char buffer[200];
  std::snprintf(buffer, sizeof(buffer),
                "unit-weight step diff %.3e (need <= 1e-10); pinned poses %s; weight cases "
                "{1, 1, 0.0625} %s",
                step_diff, pinned_ok ? "bitwise equal" : "CHANGED",
                weights_ok ? "exact" : "WRONG");
  *detail = buffer;
  return step_diff <= 1e-10 && pinned_ok && weights_ok && Seconds(t0) <= 5.0;
}

// --------------------------------------------------------------------------
// 6. Similarity recovery: closed form on clean points, then the full
//    shared-image RANSAC on a duplicated submap with 30% corrupted points.
bool Criterion6(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(67);

  double worst_scale = 0.0, worst_rot = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    SimilarityTransform truth;
    truth.scale = rng.Uniform(0.2, 4.0);
    truth.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(
        rng.Uniform(0, M_PI),
        Eigen::Vector3d(rng.Gaussian(), rng.Gaussian(), rng.Gaussian()).normalized()));
    truth.translation = 8.0 * Eigen::Vector3d(rng.Gaussian(), rng.Gaussian(), rng.Gaussian());
    std::vector<Eigen::Vector3d> src, dst;
    for (int i = 0; i < 10; ++i) {
      src.emplace_back(rng.Gaussian(), rng.Gaussian(), rng.Gaussian());
      dst.push_back(truth.Apply(src.back()));
    }
    const auto t = EstimateSimilarityUmeyama(src, dst);
    if (!t) return false;
    worst_scale = std::max(worst_scale, std::abs(t->scale - truth.scale) / truth.scale);
    worst_rot = std::max(worst_rot, RotationAngle(t->rotation, truth.rotation));
  }
  const bool closed_form_ok = worst_scale <= 1e-9 && worst_rot <= 1e-7;

  // Duplicated submap under a known transform, 30% of the duplicate's points
  // corrupted; the RANSAC must still recover the transform.
  Submap src_map;
  src_map.id = 0;
  CameraIntrinsics intr;
  intr.fx = intr.fy = 700;
  intr.cx = 480;
  intr.cy = 360;
  intr.width = 960;
  intr.height = 720;
  std::map<std::pair<uint64_t, uint32_t>, Eigen::Vector2d> pixels;
  std::vector<uint64_t> image_ids;
  for (int c = 0; c < 8; ++c) {
    const double angle = 0.25 * c;
    const uint64_t image_id = 10 + c;
    src_map.images[image_id] = test::LookAt(
        Eigen::Vector3d(24 * std::cos(angle), 24 * std::sin(angle), 2.5 + 0.3 * c),
        Eigen::Vector3d::Zero());
    src_map.intrinsics[image_id] = intr;
    image_ids.push_back(image_id);
  }
  for (int p = 0; p < 80; ++p) {
    Track track;
    track.point_id = p;
    track.xyz = Eigen::Vector3d(rng.Uniform(-6, 6), rng.Uniform(-6, 6), rng.Uniform(-3, 3));
    for (uint64_t image_id : image_ids) {
      const auto pixel = Project(intr, src_map.images[image_id], track.xyz);
      if (!pixel) continue;
      pixels[{image_id, static_cast<uint32_t>(p)}] = *pixel;
      track.observations[image_id] = static_cast<uint32_t>(p);
    }
    if (track.observations.size() < 2) continue;
    src_map.tracks[p] = track;
  }

  SimilarityTransform truth;
  truth.scale = 1.7;
  truth.rotation =
      Eigen::Quaterniond(Eigen::AngleAxisd(0.9, Eigen::Vector3d(1, -2, 0.5).normalized()));
  truth.translation = Eigen::Vector3d(10, -4, 6);

  Submap ref_map;
  ref_map.id = 1;
  ref_map.intrinsics = src_map.intrinsics;
  for (const auto& [image_id, pose] : src_map.images) {
    ref_map.images[image_id] = TransformPose(truth, pose);
  }
  int corrupted = 0;
  for (const auto& [point_id, track] : src_map.tracks) {
    Track moved = track;
    moved.point_id = point_id + 1000;
    moved.xyz = truth.Apply(track.xyz);
    if (rng.UniformDouble() < 0.3) {
      moved.xyz += Eigen::Vector3d(rng.Uniform(2, 6), rng.Uniform(2, 6), rng.Uniform(2, 6));
      ++corrupted;
    }
    ref_map.tracks[moved.point_id] = moved;
  }

  std::vector<SharedImageView> shared;
  for (uint64_t image_id : {10, 11, 13, 14, 16, 17}) {
    SharedImageView view;
    view.image_id = image_id;
    view.intrinsics = intr;
    view.pose_src = src_map.images.at(image_id);
    view.pose_ref = ref_map.images.at(image_id);
    for (const auto& [point_id, track] : src_map.tracks) {
      auto obs = track.observations.find(image_id);
      if (obs == track.observations.end()) continue;
      view.points.push_back({point_id, point_id + 1000, pixels.at({image_id, obs->second})});
    }
    shared.push_back(std::move(view));
  }
  MergeConfig merge_config;
  merge_config.seed = 67;
  const MergeEstimate estimate =
      EstimateMergeTransform(src_map, ref_map, shared, merge_config);
  const double ransac_rot =
      estimate.success ? RotationAngle(estimate.transform.rotation, truth.rotation) : 1e9;
  const double ransac_scale =
      estimate.success ? std::abs(estimate.transform.scale - truth.scale) / truth.scale : 1e9;

  char buffer[240];
  std::snprintf(buffer, sizeof(buffer),
                "closed form: scale err %.2e rot %.2e rad; RANSAC (%d pts corrupted): rot "
                "%.4f deg scale err %.4f%% (need <= 0.5 deg, 1%%)",
                worst_scale, worst_rot, corrupted, ransac_rot * 180 / M_PI,
                100 * ransac_scale);
  *detail = buffer;
  return closed_form_ok && estimate.success && ransac_rot <= 0.5 * M_PI / 180.0 &&
         ransac_scale <= 0.01 && Seconds(t0) <= 10.0;
}

// --------------------------------------------------------------------------
// 7. Two agents, initially disjoint, later overlapping: two submaps mid-run,
//    one after finalize, and the applied merge transform matches the
//    ground-truth relative transform within 0.5 deg / 1% scale.
bool Criterion7(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  SceneSpec spec = DefaultTwoAgentSpec(71);
  spec.sigma_px = 0.5;
  const SyntheticScene scene = Generate(spec);
  const auto packets = RenderPackets(scene);

  EngineConfig config;
  config.seed = 71;
  config.hnsw.seed = 71;
  Engine engine(config, std::make_shared<OracleMatcher>());
  size_t max_submaps = 0;
  for (const auto& packet : packets) {
    max_submaps = std::max(max_submaps, engine.ProcessFrame(packet).submap_count_after);
  }
  const FinalReport report = engine.Finalize();

  // Ground-truth transform for the largest merge: align both sides' camera
  // centers (captured right before the merge) to the true world.
  double rot_err = 1e9, scale_err = 1e9;
  size_t best_size = 0;
  for (const MergeEventRecord& merge : engine.MergeEvents()) {
    const size_t size = std::min(merge.source_centers.size(), merge.reference_centers.size());
    if (size < 3 || size < best_size) continue;
    std::vector<Eigen::Vector3d> src_recon, src_gt, ref_recon, ref_gt;
    for (const auto& [image_id, center] : merge.source_centers) {
      const FrameTruth* truth = scene.FindFrame(image_id);
      if (!truth) continue;
      src_recon.push_back(center);
      src_gt.push_back(truth->pose.Center());
    }
    for (const auto& [image_id, center] : merge.reference_centers) {
      const FrameTruth* truth = scene.FindFrame(image_id);
      if (!truth) continue;
      ref_recon.push_back(center);
      ref_gt.push_back(truth->pose.Center());
    }
    if (src_recon.size() < 3 || ref_recon.size() < 3) continue;
    const auto src_to_world = EstimateSimilarityUmeyama(src_recon, src_gt);
    const auto ref_to_world = EstimateSimilarityUmeyama(ref_recon, ref_gt);
    if (!src_to_world || !ref_to_world) continue;
    const SimilarityTransform truth_transform = ref_to_world->Inverse() * (*src_to_world);
    best_size = size;
    rot_err = RotationAngle(merge.transform.rotation, truth_transform.rotation);
    scale_err = std::abs(merge.transform.scale - truth_transform.scale) / truth_transform.scale;
  }

  char buffer[240];
  std::snprintf(buffer, sizeof(buffer),
                "submaps: %zu mid-run (need >= 2), %zu final (need 1); merge transform err "
                "%.4f deg / %.4f%% scale; %.0fs",
                max_submaps, report.submap_count, rot_err * 180 / M_PI, 100 * scale_err,
                Seconds(t0));
  *detail = buffer;
  return max_submaps >= 2 && report.submap_count == 1 &&
         rot_err <= 0.5 * M_PI / 180.0 && scale_err <= 0.01 && Seconds(t0) <= 180.0;
}

// --------------------------------------------------------------------------
// Shared runner for criteria 8 and 9.
struct ReplayOutcome {
  FinalReport report;
  EvaluationResult evaluation;
  std::string export_text;
  bool evaluated = false;
};

ReplayOutcome RunSingleAgent150(uint64_t engine_seed) {
  SceneSpec spec = DefaultSingleAgentSpec(150, 7);
  spec.sigma_px = 0.5;
  spec.outlier_fraction = 0.1;
  const SyntheticScene scene = Generate(spec);
  const auto packets = RenderPackets(scene);

  EngineConfig config;
  config.seed = engine_seed;
  config.hnsw.seed = engine_seed;
  Engine engine(config, std::make_shared<OracleMatcher>());
  for (const auto& packet : packets) engine.ProcessFrame(packet);

  ReplayOutcome outcome;
  outcome.report = engine.Finalize();
  const ReconstructionExport data = BuildExport(engine.Registry());
  std::stringstream text;
  WriteExport(data, text);
  outcome.export_text = text.str();

  GroundTruth gt;
  for (const FrameTruth& frame : scene.frames) gt.frames[frame.image_id] = frame;
  try {
    outcome.evaluation = Evaluate(data, gt, engine.Keypoints(), scene.Diameter());
    outcome.evaluated = true;
  } catch (const std::exception&) {
    outcome.evaluated = false;
  }
  return outcome;
}

bool Criterion8(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const ReplayOutcome outcome = RunSingleAgent150(7);
  const double registered_fraction =
      outcome.report.frames_seen == 0
          ? 0.0
          : static_cast<double>(outcome.report.frames_registered) / outcome.report.frames_seen;

  char buffer[280];
  std::snprintf(buffer, sizeof(buffer),
                "registered %.1f%% (need >= 95%%); MRE %.3f px (<= 1.5); ATE %.3f%% of "
                "diameter (<= 1%%); MRD %.4f deg (<= 0.5); %.0f ms/frame (cadence 2-3 s); %.0fs",
                100 * registered_fraction, outcome.evaluation.mre,
                100 * outcome.evaluation.ate_fraction, outcome.evaluation.mrd_deg,
                outcome.report.mean_frame_ms, Seconds(t0));
  *detail = buffer;
  return outcome.evaluated && registered_fraction >= 0.95 && outcome.evaluation.mre <= 1.5 &&
         outcome.evaluation.ate_fraction <= 0.01 && outcome.evaluation.mrd_deg <= 0.5 &&
         outcome.report.mean_frame_ms < 1000.0 && Seconds(t0) <= 300.0;
}

bool Criterion9(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const ReplayOutcome first = RunSingleAgent150(7);
  const ReplayOutcome second = RunSingleAgent150(7);
  const bool identical = first.export_text == second.export_text;
  char buffer[160];
  std::snprintf(buffer, sizeof(buffer), "two seeded runs, exports %s (%zu bytes); %.0fs",
                identical ? "bitwise identical" : "DIFFER", first.export_text.size(),
                Seconds(t0));
  *detail = buffer;
  return identical && !first.export_text.empty() && Seconds(t0) <= 600.0;
}

// --------------------------------------------------------------------------
// 10. Wire and persistence round trips.
bool Criterion10(std::string* detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(97);

  int packet_failures = 0;
  for (int i = 0; i < 1000; ++i) {
    FramePacket packet;
    packet.agent_id = static_cast<uint32_t>(rng.UniformInt(4));
    packet.frame_id = rng.UniformInt(1 << 20);
    packet.timestamp = rng.Uniform(0, 1e7);
    packet.intrinsics.fx = rng.Uniform(50, 3000);
    packet.intrinsics.fy = rng.Uniform(50, 3000);
    packet.intrinsics.cx = rng.Uniform(0, 2000);
    packet.intrinsics.cy = rng.Uniform(0, 2000);
    packet.intrinsics.width = 100 + static_cast<uint32_t>(rng.UniformInt(4000));
    packet.intrinsics.height = 100 + static_cast<uint32_t>(rng.UniformInt(4000));
    const int num_kp = static_cast<int>(rng.UniformInt(120));
    const bool oracle = rng.UniformDouble() < 0.5;
    for (int k = 0; k < num_kp; ++k) {
      packet.keypoints.emplace_back(static_cast<float>(rng.Gaussian() * 500),
                                    static_cast<float>(rng.Gaussian() * 500));
      if (oracle) packet.oracle_point_ids.push_back(rng.UniformInt(1 << 24));
    }
    const int dim = 1 + static_cast<int>(rng.UniformInt(300));
    for (int d = 0; d < dim; ++d) {
      packet.descriptor.push_back(static_cast<float>(rng.Gaussian()));
    }

    const std::vector<uint8_t> bytes = EncodeFrame(packet);
    std::stringstream stream(std::string(bytes.begin(), bytes.end()));
    const auto message = ReadMessage(stream);
    if (!message || EncodeFrame(DecodePacketPayload(message->payload)) != bytes) {
      ++packet_failures;
    }
  }

  // Exports via the engine, checking byte stability and residual reproduction.
  int export_failures = 0;
  double worst_residual_diff = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    SceneSpec spec = DefaultSingleAgentSpec(8, 100 + trial);
    spec.sigma_px = 0.3;
    const SyntheticScene scene = Generate(spec);
    const auto packets = RenderPackets(scene);
    EngineConfig config;
    config.seed = trial;
    config.hnsw.seed = trial;
    Engine engine(config, std::make_shared<OracleMatcher>());
    for (const auto& packet : packets) engine.ProcessFrame(packet);
    engine.Finalize();
    const ReconstructionExport data = BuildExport(engine.Registry());

    std::stringstream first;
    WriteExport(data, first);
    const ReconstructionExport reread = ReadExport(first);
    std::stringstream second;
    WriteExport(reread, second);
    if (first.str() != second.str()) ++export_failures;

    const auto res_a = ExportResiduals(data, engine.Keypoints());
    const auto res_b = ExportResiduals(reread, engine.Keypoints());
    if (res_a.size() != res_b.size()) {
      ++export_failures;
      continue;
    }
    for (size_t i = 0; i < res_a.size(); ++i) {
      worst_residual_diff = std::max(worst_residual_diff, std::abs(res_a[i] - res_b[i]));
    }
  }

  char buffer[200];
  std::snprintf(buffer, sizeof(buffer),
                "1000 packets: %d mismatches; 10 exports: %d mismatches, residual diff %.2e "
                "(need <= 1e-9); %.1fs",
                packet_failures, export_failures, worst_residual_diff, Seconds(t0));
  *detail = buffer;
  return packet_failures == 0 && export_failures == 0 && worst_residual_diff <= 1e-9 &&
         Seconds(t0) <= 10.0;
}

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"1 index recall vs exhaustive oracle", Criterion1},
      {"2 index latency shape vs exhaustive growth", Criterion2},
      {"3 analytic Jacobians vs finite differences", Criterion3},
      {"4 reduced camera system vs dense solve", Criterion4},
      {"5 hierarchical weight limits", Criterion5},
      {"6 similarity transform recovery", Criterion6},
      {"7 two-agent merge end to end", Criterion7},
      {"8 single-agent 150-frame replay", Criterion8},
      {"9 seeded determinism (bitwise exports)", Criterion9},
      {"10 protocol and persistence round trips", Criterion10},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(&detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %s: %s\n", ok ? "PASS" : "FAIL", criterion.name,
                detail.c_str());
    std::fflush(stdout);
    failures += !ok;
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
