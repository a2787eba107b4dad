#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "streamsfm/association.hpp"
#include "streamsfm/bundle.hpp"
#include "streamsfm/estimators.hpp"
#include "streamsfm/hnsw.hpp"
#include "streamsfm/matcher.hpp"
#include "streamsfm/packet.hpp"
#include "streamsfm/submap.hpp"

namespace streamsfm {

enum class GlobalBaPolicy { kFinalOnly, kEveryK };

struct EngineConfig {
  int top_n = 30;        // retrieval candidates per new image
  int tree_depth = 4;    // association layers
  int tree_fanout = 8;   // top-k per expansion
  int n_si = 3;          // shared images that trigger a merge
  int min_matches = 15;  // below this a candidate pair is not verified
  int descriptor_dim = 256;
  double keypoint_bounds_margin = 64.0;  // px outside the image still accepted
  HnswParams hnsw;                       // ef_construction 200, 16 connections
  TwoViewOptions two_view;               // 2 px epipolar, >50 inliers
  PnpOptions pnp;                        // 4 px, >=12 inliers
  TriangulationOptions triangulation;    // 4 px, 2 degree guard
  MergeConfig merge;
  LmConfig lm_local;
  LmConfig lm_global;
  std::optional<double> huber_delta = 2.0;
  GlobalBaPolicy global_ba = GlobalBaPolicy::kFinalOnly;
  int global_ba_every_k = 25;
  uint64_t seed = 0;

  EngineConfig() {
    lm_local.max_iterations = 25;
    lm_global.max_iterations = 100;
  }
};

struct FrameEvent {
  uint64_t image_id = 0;
  uint32_t agent_id = 0;
  double wall_ms = 0.0;
  bool rejected = false;
  std::string reject_reason;
  bool registered = false;
  bool pooled = false;
  uint64_t submap_id = kInvalidId;
  bool spawned_submap = false;
  bool shared_image = false;
  uint64_t second_submap_id = kInvalidId;
  std::vector<uint64_t> retrieved;  // candidate image ids, best first
  double mean_reproj_after_local_ba = 0.0;
  size_t submap_count_after = 0;
  size_t registered_frames_after = 0;
};

struct MergeEventRecord {
  size_t frame_index = 0;  // event-log position when the merge ran
  uint64_t source = 0, reference = 0;
  bool reversed = false;
  int shared_count = 0;
  int inlier_images = 0;
  SimilarityTransform transform;
  // Camera centers of both submaps immediately before merging; lets an
  // evaluator reconstruct the ground-truth relative transform.
  std::vector<std::pair<uint64_t, Eigen::Vector3d>> source_centers;
  std::vector<std::pair<uint64_t, Eigen::Vector3d>> reference_centers;
};

struct FinalReport {
  size_t frames_seen = 0;
  size_t frames_registered = 0;
  size_t submap_count = 0;
  double amre = 0.0;  // mean over per-frame post-local-BA means
  double mfre = 0.0;  // mean reprojection error after the final global solve
  double mtl = 0.0;   // mean observations per track
  double mean_frame_ms = 0.0;
  std::vector<size_t> submap_count_timeline;
  // Iteration traces of the final per-submap global solves.
  std::vector<std::pair<uint64_t, SolveReport>> global_ba_reports;
};

// The sequential ingest loop: one frame is fully processed (retrieve, match,
// verify, register or pool, triangulate, weighted local solve, merge) before
// the next. Single-threaded by contract; feed it from a queue.
class Engine {
 public:
  explicit Engine(EngineConfig config, std::shared_ptr<const Matcher> matcher);

  FrameEvent ProcessFrame(const FramePacket& packet);
  FinalReport Finalize();

  const SubmapRegistry& Registry() const { return registry_; }
  const HnswIndex& Index() const { return index_; }
  const SharedImageLedger& Ledger() const { return ledger_; }
  const std::map<uint64_t, FrameRecord>& Frames() const { return frames_; }
  const std::set<uint64_t>& Pool() const { return pool_; }
  const std::vector<FrameEvent>& FrameEvents() const { return frame_events_; }
  const std::vector<MergeEventRecord>& MergeEvents() const { return merge_events_; }
  const EngineConfig& Config() const { return config_; }
  KeypointLookup Keypoints() const;

 private:
  struct PairGeometry {
    TwoViewResult two_view;
    bool usable = false;       // enough inliers, any model
    bool init_quality = false; // non-degenerate and wide enough for seeding
  };

  const PairGeometry& PairInfo(uint64_t id_a, uint64_t id_b);
  const KeypointMatches& MatchesFor(uint64_t id_a, uint64_t id_b);
  std::vector<uint64_t> Candidates(uint64_t image_id, int n);
  RetrieveFn SubmapRetrieve(uint64_t submap_id);

  bool TryRegister(uint64_t image_id, const std::vector<uint64_t>& candidates,
                   FrameEvent* event);
  bool TryInitializeSubmap(FrameEvent* event);
  void RunLocalBa(uint64_t submap_id, uint64_t root_image, FrameEvent* event);
  void TriangulateNewTracks(uint64_t submap_id, uint64_t image_id,
                            const std::vector<uint64_t>& verified_candidates);
  void RecordSharedImage(uint64_t image_id, uint64_t primary, uint64_t secondary,
                         const Pose& secondary_pose,
                         const std::vector<std::pair<uint32_t, uint64_t>>& secondary_points);
  void FuseTriggeredPairs();
  void SweepPool();
  void MaybeGlobalBa();

  EngineConfig config_;
  std::shared_ptr<const Matcher> matcher_;
  HnswIndex index_;
  SubmapRegistry registry_;
  SharedImageLedger ledger_;
  std::map<uint64_t, FrameRecord> frames_;
  std::set<uint64_t> pool_;
  std::map<std::pair<uint64_t, uint64_t>, KeypointMatches> match_cache_;
  std::map<std::pair<uint64_t, uint64_t>, PairGeometry> pair_cache_;
  std::vector<FrameEvent> frame_events_;
  std::vector<MergeEventRecord> merge_events_;
  size_t registrations_since_global_ba_ = 0;
  std::vector<double> amre_samples_;
};

}  // namespace streamsfm
