#include "streamsfm/metrics.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace streamsfm {

using nlohmann::json;

EvaluationResult Evaluate(const ReconstructionExport& data, const GroundTruth& gt,
                          const KeypointLookup& keypoints, double scene_diameter) {
  EvaluationResult result;
  result.registered_images = data.images.size();

  const std::vector<double> residuals = ExportResiduals(data, keypoints);
  double err_sum = 0.0;
  size_t err_n = 0;
  for (double r : residuals) {
    if (r >= 0.0) {
      err_sum += r;
      ++err_n;
    }
  }
  result.mre = err_n == 0 ? 0.0 : err_sum / static_cast<double>(err_n);

  size_t obs = 0;
  for (const ExportPoint& point : data.points) obs += point.track.size();
  result.mtl = data.points.empty() ? 0.0 : static_cast<double>(obs) / data.points.size();

  // Group images by submap and align each group to the ground truth.
  std::map<uint64_t, std::vector<const ExportImage*>> by_submap;
  for (const ExportImage& image : data.images) {
    if (gt.frames.count(image.image_id)) by_submap[image.submap_id].push_back(&image);
  }

  double rot_sum = 0.0;
  double center_sq_sum = 0.0;
  size_t pose_n = 0;
  for (const auto& [submap_id, images] : by_submap) {
    if (images.size() < 3) continue;
    std::vector<Eigen::Vector3d> recon_centers, gt_centers;
    for (const ExportImage* image : images) {
      recon_centers.push_back(image->pose.Center());
      gt_centers.push_back(gt.frames.at(image->image_id).pose.Center());
    }
    const auto align = EstimateSimilarityUmeyama(recon_centers, gt_centers);
    if (!align) continue;
    ++result.aligned_submaps;
    for (const ExportImage* image : images) {
      const Pose aligned = TransformPose(*align, image->pose);
      const FrameTruth& truth = gt.frames.at(image->image_id);
      rot_sum += RotationAngle(aligned.rotation, truth.pose.rotation);
      center_sq_sum += (aligned.Center() - truth.pose.Center()).squaredNorm();
      ++pose_n;
    }
  }
  if (result.aligned_submaps == 0) {
    throw std::runtime_error("evaluation impossible: no submap has 3 alignable images");
  }
  result.evaluated_images = pose_n;
  result.mrd_deg = pose_n == 0 ? 0.0 : (rot_sum / pose_n) * 180.0 / M_PI;
  result.ate = pose_n == 0 ? 0.0 : std::sqrt(center_sq_sum / pose_n);
  result.ate_fraction = scene_diameter > 0.0 ? result.ate / scene_diameter : 0.0;
  return result;
}

RetrievalStats ScoreRetrieval(const std::vector<FrameEvent>& events, const GroundTruth& gt) {
  RetrievalStats stats;
  std::set<uint64_t> arrived;
  double precision_sum = 0.0, recall_sum = 0.0;
  for (const FrameEvent& event : events) {
    auto truth = gt.frames.find(event.image_id);
    if (truth == gt.frames.end()) continue;
    // Reference set: previously arrived frames with true overlap.
    std::set<uint64_t> relevant;
    for (uint64_t other : arrived) {
      if (Overlap(truth->second, gt.frames.at(other)).true_overlap) relevant.insert(other);
    }
    arrived.insert(event.image_id);
    if (relevant.empty() || event.retrieved.empty()) continue;

    size_t hits = 0;
    for (uint64_t id : event.retrieved) hits += relevant.count(id);
    precision_sum += static_cast<double>(hits) / event.retrieved.size();
    recall_sum +=
        static_cast<double>(hits) / std::min(relevant.size(), event.retrieved.size());
    ++stats.frames_scored;
  }
  if (stats.frames_scored > 0) {
    stats.mean_precision = precision_sum / stats.frames_scored;
    stats.mean_recall = recall_sum / stats.frames_scored;
  }
  return stats;
}

std::string MetricsReportJson(const FinalReport& report,
                              const std::vector<FrameEvent>& frame_events,
                              const std::vector<MergeEventRecord>& merge_events,
                              const std::optional<EvaluationResult>& evaluation,
                              const std::optional<RetrievalStats>& retrieval) {
  json root;
  root["final"] = {
      {"frames_seen", report.frames_seen},
      {"frames_registered", report.frames_registered},
      {"submap_count", report.submap_count},
      {"amre_px", report.amre},
      {"mfre_px", report.mfre},
      {"mtl", report.mtl},
      {"mean_frame_ms", report.mean_frame_ms},
      {"submap_count_timeline", report.submap_count_timeline},
  };

  json frames = json::array();
  for (const FrameEvent& event : frame_events) {
    json f = {
        {"image_id", event.image_id},
        {"agent_id", event.agent_id},
        {"wall_ms", event.wall_ms},
        {"registered", event.registered},
        {"pooled", event.pooled},
        {"rejected", event.rejected},
        {"submap_count", event.submap_count_after},
    };
    if (event.rejected) f["reject_reason"] = event.reject_reason;
    if (event.registered) {
      f["submap_id"] = event.submap_id;
      f["mean_reproj_after_local_ba"] = event.mean_reproj_after_local_ba;
    }
    if (event.shared_image) {
      f["shared_image"] = true;
      f["second_submap_id"] = event.second_submap_id;
    }
    frames.push_back(std::move(f));
  }
  root["frames"] = std::move(frames);

  json merges = json::array();
  for (const MergeEventRecord& merge : merge_events) {
    merges.push_back({
        {"frame_index", merge.frame_index},
        {"source", merge.source},
        {"reference", merge.reference},
        {"reversed", merge.reversed},
        {"shared_count", merge.shared_count},
        {"inlier_images", merge.inlier_images},
        {"scale", merge.transform.scale},
        {"rotation_wxyz",
         {merge.transform.rotation.w(), merge.transform.rotation.x(),
          merge.transform.rotation.y(), merge.transform.rotation.z()}},
        {"translation",
         {merge.transform.translation.x(), merge.transform.translation.y(),
          merge.transform.translation.z()}},
    });
  }
  root["merge_events"] = std::move(merges);

  json global_ba = json::array();
  for (const auto& [submap_id, solve] : report.global_ba_reports) {
    json iterations = json::array();
    for (const IterationRecord& it : solve.iterations) {
      iterations.push_back({
          {"iteration", it.iteration},
          {"cost_before", it.cost_before},
          {"cost_after", it.cost_after},
          {"lambda", it.lambda},
          {"step_norm", it.step_norm},
          {"accepted", it.accepted},
          {"wall_ms", it.wall_ms},
      });
    }
    global_ba.push_back({
        {"submap_id", submap_id},
        {"initial_cost", solve.initial_cost},
        {"final_cost", solve.final_cost},
        {"accepted_steps", solve.accepted_steps},
        {"iterations", std::move(iterations)},
    });
  }
  root["global_ba"] = std::move(global_ba);

  if (evaluation) {
    root["evaluation"] = {
        {"mre_px", evaluation->mre},           {"mtl", evaluation->mtl},
        {"mrd_deg", evaluation->mrd_deg},      {"ate", evaluation->ate},
        {"ate_fraction", evaluation->ate_fraction},
        {"aligned_submaps", evaluation->aligned_submaps},
        {"registered_images", evaluation->registered_images},
    };
  }
  if (retrieval) {
    root["retrieval"] = {
        {"mean_precision", retrieval->mean_precision},
        {"mean_recall", retrieval->mean_recall},
        {"frames_scored", retrieval->frames_scored},
    };
  }
  return root.dump(2);
}

}  // namespace streamsfm
