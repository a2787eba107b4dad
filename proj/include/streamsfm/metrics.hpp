#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "streamsfm/dataset.hpp"
#include "streamsfm/engine.hpp"
#include "streamsfm/reconstruction_io.hpp"

namespace streamsfm {

// Reconstruction-vs-ground-truth comparison. Pose errors are measured after a
// per-submap sim(3) alignment of camera centers, which absorbs each submap's
// gauge freedom.
struct EvaluationResult {
  double mre = 0.0;       // mean reprojection error, pixels
  double mtl = 0.0;       // mean track length
  double mrd_deg = 0.0;   // mean rotation discrepancy after alignment
  double ate = 0.0;       // RMS aligned camera-center error, scene units
  double ate_fraction = 0.0;  // ate / ground-truth scene diameter
  size_t aligned_submaps = 0;
  size_t registered_images = 0;
  size_t evaluated_images = 0;
};

// Throws std::runtime_error when no submap shares 3 registered images with
// the ground truth (alignment impossible).
EvaluationResult Evaluate(const ReconstructionExport& data, const GroundTruth& gt,
                          const KeypointLookup& keypoints, double scene_diameter);

// Retrieval quality of the engine's per-frame candidate lists against the
// visibility overlap oracle (pairs sharing more than 50 points).
struct RetrievalStats {
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  size_t frames_scored = 0;
};

RetrievalStats ScoreRetrieval(const std::vector<FrameEvent>& events, const GroundTruth& gt);

// Full run report serialized as JSON: final metrics, per-frame events, merge
// events, and (when ground truth is supplied) the evaluation block.
std::string MetricsReportJson(const FinalReport& report,
                              const std::vector<FrameEvent>& frame_events,
                              const std::vector<MergeEventRecord>& merge_events,
                              const std::optional<EvaluationResult>& evaluation,
                              const std::optional<RetrievalStats>& retrieval);

}  // namespace streamsfm
