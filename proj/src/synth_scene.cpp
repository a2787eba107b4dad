#include "streamsfm/synth_scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "streamsfm/rng.hpp"

namespace streamsfm {

namespace {

CameraIntrinsics DefaultIntrinsics() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 700.0;
  intr.cx = 480.0;
  intr.cy = 360.0;
  intr.width = 960;
  intr.height = 720;
  return intr;
}

Pose LookAtPose(const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - position).normalized();
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = forward.cross(Eigen::Vector3d::UnitY());
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right).normalized();
  Eigen::Matrix3d r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  Pose pose;
  pose.rotation = Eigen::Quaterniond(r).normalized();
  pose.translation = -(pose.rotation * position);
  return pose;
}

}  // namespace

SceneSpec DefaultSingleAgentSpec(int frames, uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  AgentArc arc;
  arc.agent_id = 0;
  arc.frames = frames;
  arc.radius = 65.0;
  arc.start_deg = 0.0;
  arc.end_deg = 340.0;
  arc.height = 10.0;
  arc.intrinsics = DefaultIntrinsics();
  spec.agents.push_back(arc);
  return spec;
}

SceneSpec DefaultTwoAgentSpec(uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  // Two arcs that start on opposite sides and grow toward each other; the
  // second agent keeps shooting into the first agent's sector at the end.
  AgentArc a;
  a.agent_id = 0;
  a.frames = 60;
  a.radius = 65.0;
  a.start_deg = 0.0;
  a.end_deg = 130.0;
  a.height = 10.0;
  a.first_timestamp = 0.0;
  a.timestamp_step = 1.0;
  a.intrinsics = DefaultIntrinsics();
  AgentArc b = a;
  b.agent_id = 1;
  b.frames = 80;
  b.start_deg = 200.0;
  b.end_deg = 360.0 + 60.0;  // wraps into agent 0 territory
  b.first_timestamp = 0.5;
  spec.agents = {a, b};
  return spec;
}

const FrameTruth* SyntheticScene::FindFrame(uint64_t image_id) const {
  for (const FrameTruth& f : frames) {
    if (f.image_id == image_id) return &f;
  }
  return nullptr;
}

double SyntheticScene::Diameter() const { return spec.diameter; }

SyntheticScene Generate(const SceneSpec& spec) {
  if (spec.agents.empty() || spec.descriptor_dim <= 0) {
    throw std::invalid_argument("Generate: empty agent list or bad descriptor dim");
  }
  SyntheticScene scene;
  scene.spec = spec;
  Rng rng(HashCombine(spec.seed, 0x5ce9eULL));

  // Points: a ring of planar facades around the center plus volumetric
  // clutter; everything scaled so the bounding sphere matches the diameter.
  // Each point carries an outward facing normal so cameras on the far side
  // cannot see it (a cheap stand-in for opacity).
  const int num_facades = 6;
  for (int i = 0; i < spec.facade_points; ++i) {
    const int facade = i % num_facades;
    const double angle = 2.0 * M_PI * facade / num_facades;
    const Eigen::Vector3d center(18.0 * std::cos(angle), 18.0 * std::sin(angle), 6.0);
    const Eigen::Vector3d normal(std::cos(angle), std::sin(angle), 0.0);
    const Eigen::Vector3d tangent(-std::sin(angle), std::cos(angle), 0.0);
    const Eigen::Vector3d p = center + tangent * rng.Uniform(-9.0, 9.0) +
                              Eigen::Vector3d::UnitZ() * rng.Uniform(-6.0, 6.0) +
                              normal * rng.Uniform(-0.4, 0.4);
    scene.points.push_back(p);
    scene.normals.push_back(normal);
  }
  for (int i = 0; i < spec.clutter_points; ++i) {
    const Eigen::Vector3d p(rng.Uniform(-22, 22), rng.Uniform(-22, 22), rng.Uniform(-2, 14));
    Eigen::Vector3d normal(p.x(), p.y(), 0.0);
    if (normal.norm() < 1e-9) normal = Eigen::Vector3d::UnitX();
    scene.points.push_back(p);
    scene.normals.push_back(normal.normalized());
  }
  if (scene.points.empty()) throw std::invalid_argument("Generate: no points");

  // Normalize to the requested bounding-sphere diameter.
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : scene.points) centroid += p;
  centroid /= static_cast<double>(scene.points.size());
  double max_r = 0.0;
  for (const auto& p : scene.points) max_r = std::max(max_r, (p - centroid).norm());
  const double scale = spec.diameter / (2.0 * max_r);
  for (auto& p : scene.points) p = scale * (p - centroid);

  for (const AgentArc& arc : spec.agents) {
    for (int f = 0; f < arc.frames; ++f) {
      const double u = arc.frames > 1 ? static_cast<double>(f) / (arc.frames - 1) : 0.0;
      const double angle = (arc.start_deg + u * (arc.end_deg - arc.start_deg)) * M_PI / 180.0;
      const Eigen::Vector3d position(scale * arc.radius * std::cos(angle),
                                     scale * arc.radius * std::sin(angle), scale * arc.height);
      FrameTruth frame;
      frame.agent_id = arc.agent_id;
      frame.frame_id = static_cast<uint64_t>(f);
      frame.image_id = MakeImageId(arc.agent_id, frame.frame_id);
      frame.timestamp = arc.first_timestamp + f * arc.timestamp_step;
      frame.intrinsics = arc.intrinsics;
      frame.pose = LookAtPose(position, Eigen::Vector3d::Zero());

      const double cos_cutoff = std::cos(spec.max_view_angle_deg * M_PI / 180.0);
      const Eigen::Vector3d center = frame.pose.Center();
      for (size_t pid = 0; pid < scene.points.size(); ++pid) {
        const Eigen::Vector3d x_cam = frame.pose.ToCamera(scene.points[pid]);
        if (x_cam.z() <= 0.0 || x_cam.norm() > spec.max_view_range) continue;
        const Eigen::Vector3d to_camera = (center - scene.points[pid]).normalized();
        if (to_camera.dot(scene.normals[pid]) < cos_cutoff) continue;
        const auto pixel = ProjectCameraPoint(frame.intrinsics, x_cam);
        if (!pixel) continue;
        if (pixel->x() < 0 || pixel->x() >= frame.intrinsics.width || pixel->y() < 0 ||
            pixel->y() >= frame.intrinsics.height) {
          continue;
        }
        frame.visible_points.push_back(pid);
      }
      if (static_cast<int>(frame.visible_points.size()) < spec.min_points_per_frame) {
        throw std::invalid_argument("Generate: frame sees too few points (infeasible spec)");
      }
      scene.frames.push_back(std::move(frame));
    }
  }

  std::sort(scene.frames.begin(), scene.frames.end(),
            [](const FrameTruth& a, const FrameTruth& b) {
              if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
              if (a.agent_id != b.agent_id) return a.agent_id < b.agent_id;
              return a.frame_id < b.frame_id;
            });
  return scene;
}

OverlapStats Overlap(const FrameTruth& a, const FrameTruth& b) {
  OverlapStats stats;
  size_t i = 0, j = 0;  // visible_points are ascending by construction
  while (i < a.visible_points.size() && j < b.visible_points.size()) {
    if (a.visible_points[i] == b.visible_points[j]) {
      ++stats.shared;
      ++i;
      ++j;
    } else if (a.visible_points[i] < b.visible_points[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const size_t uni = a.visible_points.size() + b.visible_points.size() - stats.shared;
  stats.jaccard = uni == 0 ? 0.0 : static_cast<double>(stats.shared) / uni;
  stats.true_overlap = stats.shared > 50;
  return stats;
}

GlobalDescriptor MakeDescriptor(const std::vector<uint64_t>& visible_ids, int dim,
                                uint64_t seed, double jitter) {
  if (visible_ids.empty()) throw std::invalid_argument("MakeDescriptor: empty visible set");
  std::vector<double> acc(dim, 0.0);
  for (uint64_t id : visible_ids) {
    // Deterministic +-1 signature per point id, independent of the call seed
    // so the same world point always contributes the same direction.
    uint64_t h = SplitMix64(id * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL);
    int bits_left = 0;
    uint64_t bits = 0;
    for (int d = 0; d < dim; ++d) {
      if (bits_left == 0) {
        h = SplitMix64(h);
        bits = h;
        bits_left = 64;
      }
      acc[d] += (bits & 1) ? 1.0 : -1.0;
      bits >>= 1;
      --bits_left;
    }
  }
  if (jitter > 0.0) {
    Rng rng(HashCombine(seed, 0x71773ULL));
    // Jitter relative to the pre-normalization magnitude.
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    const double sigma = jitter * std::sqrt(norm / dim);
    for (double& v : acc) v += sigma * rng.Gaussian();
  }
  std::vector<float> values(dim);
  for (int d = 0; d < dim; ++d) values[d] = static_cast<float>(acc[d]);
  return GlobalDescriptor::Normalized(0, std::move(values));
}

std::vector<FramePacket> RenderPackets(const SyntheticScene& scene) {
  std::vector<FramePacket> packets;
  packets.reserve(scene.frames.size());
  const SceneSpec& spec = scene.spec;

  for (const FrameTruth& frame : scene.frames) {
    Rng rng(HashCombine(HashCombine(spec.seed, 0xfeedULL), frame.image_id));
    FramePacket packet;
    packet.agent_id = frame.agent_id;
    packet.frame_id = frame.frame_id;
    packet.timestamp = frame.timestamp;
    packet.intrinsics = frame.intrinsics;
    packet.keypoints.reserve(frame.visible_points.size());
    packet.oracle_point_ids.reserve(frame.visible_points.size());

    for (uint64_t pid : frame.visible_points) {
      const auto pixel = Project(frame.intrinsics, frame.pose, scene.points[pid]);
      Eigen::Vector2d noisy = *pixel;
      uint64_t oracle_id = pid;
      if (rng.UniformDouble() < spec.outlier_fraction) {
        noisy = Eigen::Vector2d(rng.Uniform(0, frame.intrinsics.width),
                                rng.Uniform(0, frame.intrinsics.height));
        oracle_id = kOutlierPointId;
      } else if (spec.sigma_px > 0.0) {
        noisy += spec.sigma_px * Eigen::Vector2d(rng.Gaussian(), rng.Gaussian());
      }
      packet.keypoints.push_back(noisy.cast<float>());
      packet.oracle_point_ids.push_back(oracle_id);
    }

    GlobalDescriptor desc =
        MakeDescriptor(frame.visible_points, spec.descriptor_dim,
                       HashCombine(spec.seed, frame.image_id), spec.descriptor_jitter);
    packet.descriptor = std::move(desc.values);
    packets.push_back(std::move(packet));
  }
  return packets;
}

}  // namespace streamsfm
