#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "streamsfm/association.hpp"
#include "streamsfm/bundle.hpp"
#include "streamsfm/geometry.hpp"

namespace streamsfm {

using KeypointLookup = std::function<Eigen::Vector2d(uint64_t image_id, uint32_t keypoint_index)>;

// One self-consistent reconstruction: registered images with poses plus the
// tracks they observe, in its own gauge (seed camera at identity, unit
// baseline).
struct Submap {
  uint64_t id = 0;
  uint64_t creation_order = 0;
  uint64_t gauge_image = kInvalidId;
  std::map<uint64_t, Pose> images;
  std::map<uint64_t, CameraIntrinsics> intrinsics;
  std::map<uint64_t, Track> tracks;
  std::map<std::pair<uint64_t, uint32_t>, uint64_t> observation_to_point;
  std::set<uint32_t> agents;

  size_t NumImages() const { return images.size(); }
  size_t NumTracks() const { return tracks.size(); }

  void AddObservation(uint64_t point_id, uint64_t image_id, uint32_t keypoint_index);
  void RemoveTrack(uint64_t point_id);
  std::vector<uint64_t> PointsSeenBy(uint64_t image_id) const;
  // Applies a similarity to every pose and point in place.
  void Transform(const SimilarityTransform& t);
};

// Structural checks used by tests: observations reference registered images,
// every track has >= 2 observations, the reverse index is consistent.
bool ValidateSubmap(const Submap& submap, std::string* error = nullptr);

class SubmapRegistry {
 public:
  Submap& Create();
  void Erase(uint64_t submap_id) { submaps_.erase(submap_id); }
  Submap* Find(uint64_t submap_id);
  const Submap* Find(uint64_t submap_id) const;
  uint64_t NewPointId() { return next_point_id_++; }
  const std::map<uint64_t, Submap>& All() const { return submaps_; }
  std::map<uint64_t, Submap>& All() { return submaps_; }
  size_t Count() const { return submaps_.size(); }

 private:
  std::map<uint64_t, Submap> submaps_;
  uint64_t next_submap_id_ = 0;
  uint64_t next_point_id_ = 0;
  uint64_t creation_counter_ = 0;
};

// ---------------------------------------------------------------------------
// Shared images across submap pairs

struct SharedPointPair {
  uint64_t point_a = 0;  // point id in the lower-id submap
  uint64_t point_b = 0;  // point id in the higher-id submap
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct SharedImageRecord {
  uint64_t image_id = 0;
  Pose pose_a, pose_b;  // pose in the lower-/higher-id submap frame
  CameraIntrinsics intrinsics;
  std::vector<SharedPointPair> common_points;
};

struct LedgerEntry {
  std::map<uint64_t, SharedImageRecord> shared_images;
  // Merge attempts are re-armed only when new shared images arrive.
  int failed_at_count = 0;
};

// Orientation-resolved view of one shared image for a specific src/ref choice.
struct SharedImageView {
  uint64_t image_id = 0;
  Pose pose_src, pose_ref;
  CameraIntrinsics intrinsics;
  std::vector<SharedPointPair> points;  // point_a = src point, point_b = ref point
};

class SharedImageLedger {
 public:
  // Records (idempotently) a shared image for an unordered submap pair and
  // reports whether the pair has reached the merge threshold. The record's
  // a/b fields are oriented to the argument order and normalized here.
  bool Record(uint64_t submap_a, uint64_t submap_b, const SharedImageRecord& record, int n_si);

  int SharedCount(uint64_t submap_a, uint64_t submap_b) const;
  std::vector<SharedImageView> View(uint64_t src_id, uint64_t ref_id) const;
  // Pairs at or above the threshold whose count grew since the last failure.
  std::vector<std::pair<uint64_t, uint64_t>> TriggeredPairs(int n_si) const;
  void MarkFailed(uint64_t submap_a, uint64_t submap_b);
  void ErasePair(uint64_t submap_a, uint64_t submap_b);
  // After "merged" was absorbed into "into": drops the merged pair and re-keys
  // every other entry touching "merged", transforming its poses by t and
  // renaming its point ids through the given map.
  void Rekey(uint64_t merged, uint64_t into, const SimilarityTransform& t,
             const std::map<uint64_t, uint64_t>& point_rename);
  bool Empty() const { return entries_.empty(); }
  const std::map<std::pair<uint64_t, uint64_t>, LedgerEntry>& Entries() const {
    return entries_;
  }

 private:
  static std::pair<uint64_t, uint64_t> Key(uint64_t a, uint64_t b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }
  std::map<std::pair<uint64_t, uint64_t>, LedgerEntry> entries_;
};

// ---------------------------------------------------------------------------
// Merging

struct MergeConfig {
  int n_si = 3;
  double min_ior = 0.25;
  double max_re = 8.0;  // pixels
  int num_trials = 64;
  uint64_t seed = 0;
  // Re-fit the winning transform on the inlier images' centers and common
  // points after the trial loop.
  bool refine_final = true;
  // Run a full solve on both submaps before estimating, so the seam-local
  // transform and the map-level transform agree.
  bool consolidate_before_estimate = true;
};

struct MergeEstimate {
  bool success = false;
  SimilarityTransform transform;  // maps src frame into ref frame
  int inlier_images = 0;
  std::vector<uint64_t> inlier_image_ids;
};

// RANSAC over shared-image triples: camera centers give the similarity
// hypothesis, bidirectional reprojection of the common points scores it.
// An image is an inlier when its inlier-point ratio reaches min_ior; success
// needs at least 3 inlier images.
MergeEstimate EstimateMergeTransform(const Submap& src, const Submap& ref,
                                     const std::vector<SharedImageView>& shared,
                                     const MergeConfig& config);

struct MergeDeps {
  KeypointLookup keypoints;
  RetrieveFn retrieve;  // over the merged submap, for the seam refinement
  LmConfig lm;          // weighted local solves at the seam
  LmConfig lm_global;   // pre-merge consolidation solves
  std::optional<double> huber_delta = 2.0;
  int tree_depth = 4;
  int tree_fanout = 8;
};

// Ledger view with poses brought up to date: member images read the live
// submap pose, the opposite side re-polishes its stored pose against the
// current tracks.
std::vector<SharedImageView> RefreshSharedViews(const Submap& src, const Submap& ref,
                                                std::vector<SharedImageView> views);

// Absorbs src into ref under T: poses and points transformed, shared images
// keep the reference pose, duplicate tracks unified, a weighted local solve
// run around every shared image to relax the seam.
void MergeSubmaps(SubmapRegistry* registry, SharedImageLedger* ledger, uint64_t src_id,
                  uint64_t ref_id, const SimilarityTransform& t, const MergeDeps& deps,
                  const std::vector<SharedImageView>& shared_views);

struct FuseReport {
  bool merged = false;
  uint64_t source = 0, reference = 0;  // as attempted / applied
  bool reversed = false;               // larger-into-smaller fallback used
  SimilarityTransform transform;
  int inlier_images = 0;
  int shared_count = 0;
};

// Tries smaller-into-larger first, then the reverse; on double failure the
// pair stays disconnected and is re-armed by the next shared image.
FuseReport AttemptFuse(SubmapRegistry* registry, SharedImageLedger* ledger,
                       std::pair<uint64_t, uint64_t> pair, const MergeConfig& config,
                       const MergeDeps& deps);

// Recursive pairwise fusion until no triggered pair remains.
std::vector<FuseReport> FuseAllTriggered(SubmapRegistry* registry, SharedImageLedger* ledger,
                                         const MergeConfig& config, const MergeDeps& deps);

// ---------------------------------------------------------------------------
// Bundle-problem builders over a submap

struct SubmapProblem {
  BaProblem problem;
  std::vector<uint64_t> camera_ids;  // aligned with problem.cameras
  std::vector<uint64_t> point_ids;   // aligned with problem.points
};

// Local problem scoped by association weights: weighted cameras, the root's
// tracks as free points, outside observers pinned. The submap gauge camera is
// always pinned when present.
SubmapProblem BuildLocalProblem(const Submap& submap, const std::vector<ImageWeight>& weights,
                                const KeypointLookup& keypoints,
                                std::optional<double> huber_delta);

// Full problem over the submap; every camera free except the gauge.
SubmapProblem BuildGlobalProblem(const Submap& submap, const KeypointLookup& keypoints,
                                 std::optional<double> huber_delta);

void WriteBack(const SubmapProblem& solved, Submap* submap);

// Mean reprojection error over all observations of the submap.
double SubmapMeanReprojectionError(const Submap& submap, const KeypointLookup& keypoints);
double SubmapRmsReprojectionError(const Submap& submap, const KeypointLookup& keypoints);

}  // namespace streamsfm
