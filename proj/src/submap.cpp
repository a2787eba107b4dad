#include "streamsfm/submap.hpp"

#include "streamsfm/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "streamsfm/rng.hpp"

namespace streamsfm {

void Submap::AddObservation(uint64_t point_id, uint64_t image_id, uint32_t keypoint_index) {
  auto it = tracks.find(point_id);
  if (it == tracks.end()) return;
  if (it->second.observations.count(image_id)) return;  // one observation per image
  it->second.observations[image_id] = keypoint_index;
  observation_to_point[{image_id, keypoint_index}] = point_id;
}

void Submap::RemoveTrack(uint64_t point_id) {
  auto it = tracks.find(point_id);
  if (it == tracks.end()) return;
  for (const auto& [image_id, kp] : it->second.observations) {
    observation_to_point.erase({image_id, kp});
  }
  tracks.erase(it);
}

std::vector<uint64_t> Submap::PointsSeenBy(uint64_t image_id) const {
  std::vector<uint64_t> out;
  auto it = observation_to_point.lower_bound({image_id, 0});
  for (; it != observation_to_point.end() && it->first.first == image_id; ++it) {
    out.push_back(it->second);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void Submap::Transform(const SimilarityTransform& t) {
  for (auto& [id, pose] : images) pose = TransformPose(t, pose);
  for (auto& [id, track] : tracks) track.xyz = t.Apply(track.xyz);
}

bool ValidateSubmap(const Submap& submap, std::string* error) {
  auto fail = [&](const std::string& message) {
    if (error) *error = message;
    return false;
  };
  for (const auto& [point_id, track] : submap.tracks) {
    if (track.observations.size() < 2) return fail("track with fewer than 2 observations");
    for (const auto& [image_id, kp] : track.observations) {
      if (!submap.images.count(image_id)) return fail("observation of unregistered image");
      auto it = submap.observation_to_point.find({image_id, kp});
      if (it == submap.observation_to_point.end() || it->second != point_id) {
        return fail("reverse observation index inconsistent");
      }
    }
  }
  for (const auto& [obs, point_id] : submap.observation_to_point) {
    auto it = submap.tracks.find(point_id);
    if (it == submap.tracks.end()) return fail("reverse index references dead track");
    auto obs_it = it->second.observations.find(obs.first);
    if (obs_it == it->second.observations.end() || obs_it->second != obs.second) {
      return fail("reverse index does not match track observation");
    }
  }
  for (const auto& [image_id, pose] : submap.images) {
    if (!submap.intrinsics.count(image_id)) return fail("image without intrinsics");
    if (!pose.Center().allFinite()) return fail("non-finite camera center");
  }
  return true;
}

Submap& SubmapRegistry::Create() {
  const uint64_t id = next_submap_id_++;
  Submap& submap = submaps_[id];
  submap.id = id;
  submap.creation_order = creation_counter_++;
  return submap;
}

Submap* SubmapRegistry::Find(uint64_t submap_id) {
  auto it = submaps_.find(submap_id);
  return it == submaps_.end() ? nullptr : &it->second;
}

const Submap* SubmapRegistry::Find(uint64_t submap_id) const {
  auto it = submaps_.find(submap_id);
  return it == submaps_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------

bool SharedImageLedger::Record(uint64_t submap_a, uint64_t submap_b,
                               const SharedImageRecord& record, int n_si) {
  LedgerEntry& entry = entries_[Key(submap_a, submap_b)];
  SharedImageRecord stored = record;
  if (submap_a > submap_b) {
    std::swap(stored.pose_a, stored.pose_b);
    for (auto& pair : stored.common_points) std::swap(pair.point_a, pair.point_b);
  }
  entry.shared_images[record.image_id] = std::move(stored);  // set semantics
  return static_cast<int>(entry.shared_images.size()) >= n_si;
}

int SharedImageLedger::SharedCount(uint64_t submap_a, uint64_t submap_b) const {
  auto it = entries_.find(Key(submap_a, submap_b));
  return it == entries_.end() ? 0 : static_cast<int>(it->second.shared_images.size());
}

std::vector<SharedImageView> SharedImageLedger::View(uint64_t src_id, uint64_t ref_id) const {
  std::vector<SharedImageView> out;
  auto it = entries_.find(Key(src_id, ref_id));
  if (it == entries_.end()) return out;
  const bool src_is_a = src_id < ref_id;
  for (const auto& [image_id, rec] : it->second.shared_images) {
    SharedImageView view;
    view.image_id = image_id;
    view.intrinsics = rec.intrinsics;
    view.pose_src = src_is_a ? rec.pose_a : rec.pose_b;
    view.pose_ref = src_is_a ? rec.pose_b : rec.pose_a;
    view.points = rec.common_points;
    if (!src_is_a) {
      for (auto& p : view.points) std::swap(p.point_a, p.point_b);
    }
    out.push_back(std::move(view));
  }
  return out;
}

std::vector<std::pair<uint64_t, uint64_t>> SharedImageLedger::TriggeredPairs(int n_si) const {
  std::vector<std::pair<uint64_t, uint64_t>> out;
  for (const auto& [key, entry] : entries_) {
    const int count = static_cast<int>(entry.shared_images.size());
    if (count >= n_si && count > entry.failed_at_count) out.push_back(key);
  }
  return out;
}

void SharedImageLedger::MarkFailed(uint64_t submap_a, uint64_t submap_b) {
  auto it = entries_.find(Key(submap_a, submap_b));
  if (it != entries_.end()) {
    it->second.failed_at_count = static_cast<int>(it->second.shared_images.size());
  }
}

void SharedImageLedger::ErasePair(uint64_t submap_a, uint64_t submap_b) {
  entries_.erase(Key(submap_a, submap_b));
}

void SharedImageLedger::Rekey(uint64_t merged, uint64_t into,
                              const SimilarityTransform& t,
                              const std::map<uint64_t, uint64_t>& point_rename) {
  ErasePair(merged, into);
  std::vector<std::pair<std::pair<uint64_t, uint64_t>, LedgerEntry>> moved;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->first.first == merged || it->first.second == merged) {
      const uint64_t other = it->first.first == merged ? it->first.second : it->first.first;
      const bool merged_is_a = it->first.first == merged;
      LedgerEntry entry = std::move(it->second);
      for (auto& [image_id, rec] : entry.shared_images) {
        Pose& merged_pose = merged_is_a ? rec.pose_a : rec.pose_b;
        merged_pose = TransformPose(t, merged_pose);
        for (auto& pair : rec.common_points) {
          uint64_t& merged_point = merged_is_a ? pair.point_a : pair.point_b;
          auto rename = point_rename.find(merged_point);
          if (rename != point_rename.end()) merged_point = rename->second;
        }
        // Normalize the record to the new key orientation.
        if ((into < other) != merged_is_a) {
          std::swap(rec.pose_a, rec.pose_b);
          for (auto& pair : rec.common_points) std::swap(pair.point_a, pair.point_b);
        }
      }
      moved.push_back({Key(into, other), std::move(entry)});
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto& [key, entry] : moved) {
    LedgerEntry& target = entries_[key];
    for (auto& [image_id, rec] : entry.shared_images) {
      target.shared_images.emplace(image_id, std::move(rec));
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

struct ImageScore {
  int inlier_points = 0;
  int common_points = 0;
  bool inlier = false;
};

int ScoreTransform(const Submap& src, const Submap& ref,
                   const std::vector<SharedImageView>& shared, const SimilarityTransform& t,
                   const MergeConfig& config, std::vector<uint64_t>* inlier_ids) {
  const SimilarityTransform t_inv = t.Inverse();
  int inlier_images = 0;
  if (inlier_ids) inlier_ids->clear();
  for (const SharedImageView& view : shared) {
    ImageScore score;
    for (const SharedPointPair& pair : view.points) {
      auto src_track = src.tracks.find(pair.point_a);
      auto ref_track = ref.tracks.find(pair.point_b);
      if (src_track == src.tracks.end() || ref_track == ref.tracks.end()) continue;
      ++score.common_points;

      // Forward: src point into the ref frame, imaged by the ref-side pose.
      const auto fwd = Project(view.intrinsics, view.pose_ref, t.Apply(src_track->second.xyz));
      // Backward: ref point into the src frame, imaged by the src-side pose.
      const auto bwd =
          Project(view.intrinsics, view.pose_src, t_inv.Apply(ref_track->second.xyz));
      if (!fwd || !bwd) continue;
      if ((*fwd - pair.pixel).norm() <= config.max_re &&
          (*bwd - pair.pixel).norm() <= config.max_re) {
        ++score.inlier_points;
      }
    }
    if (score.common_points > 0 &&
        static_cast<double>(score.inlier_points) / score.common_points >= config.min_ior) {
      ++inlier_images;
      if (inlier_ids) inlier_ids->push_back(view.image_id);
    }
  }
  return inlier_images;
}

}  // namespace

MergeEstimate EstimateMergeTransform(const Submap& src, const Submap& ref,
                                     const std::vector<SharedImageView>& shared,
                                     const MergeConfig& config) {
  MergeEstimate result;
  const int n = static_cast<int>(shared.size());
  if (n < 3) return result;

  Rng rng(HashCombine(config.seed, 0x3d51ULL));
  int best_inliers = 0;
  SimilarityTransform best_t;
  std::vector<uint64_t> best_ids;

  for (int trial = 0; trial < config.num_trials; ++trial) {
    int i = static_cast<int>(rng.UniformInt(n));
    int j = static_cast<int>(rng.UniformInt(n));
    int k = static_cast<int>(rng.UniformInt(n));
    if (i == j || j == k || i == k) continue;

    const std::vector<Eigen::Vector3d> centers_src = {shared[i].pose_src.Center(),
                                                      shared[j].pose_src.Center(),
                                                      shared[k].pose_src.Center()};
    const std::vector<Eigen::Vector3d> centers_ref = {shared[i].pose_ref.Center(),
                                                      shared[j].pose_ref.Center(),
                                                      shared[k].pose_ref.Center()};
    const auto t = EstimateSimilarityUmeyama(centers_src, centers_ref);
    if (!t) continue;  // collinear sample, resample

    std::vector<uint64_t> ids;
    const int inliers = ScoreTransform(src, ref, shared, *t, config, &ids);
    if (inliers > best_inliers) {
      best_inliers = inliers;
      best_t = *t;
      best_ids = std::move(ids);
    }
  }
  if (best_inliers < 3) return result;

  if (config.refine_final) {
    // Re-fit on the paired 3D points of the inlier images: they span the
    // whole overlap region and are far better determined than the camera
    // centers (the off-membership side of a shared image is only a PnP
    // estimate). Centers enter only when points are too few.
    std::vector<Eigen::Vector3d> from, to;
    std::set<std::pair<uint64_t, uint64_t>> seen_pairs;
    for (const SharedImageView& view : shared) {
      if (std::find(best_ids.begin(), best_ids.end(), view.image_id) == best_ids.end()) {
        continue;
      }
      for (const SharedPointPair& pair : view.points) {
        if (!seen_pairs.insert({pair.point_a, pair.point_b}).second) continue;
        auto src_track = src.tracks.find(pair.point_a);
        auto ref_track = ref.tracks.find(pair.point_b);
        if (src_track == src.tracks.end() || ref_track == ref.tracks.end()) continue;
        from.push_back(src_track->second.xyz);
        to.push_back(ref_track->second.xyz);
      }
    }
    if (from.size() < 8) {
      for (const SharedImageView& view : shared) {
        if (std::find(best_ids.begin(), best_ids.end(), view.image_id) == best_ids.end()) {
          continue;
        }
        from.push_back(view.pose_src.Center());
        to.push_back(view.pose_ref.Center());
      }
    }
    if (from.size() >= 3) {
      const auto refined = EstimateSimilarityUmeyama(from, to);
      if (refined) {
        std::vector<uint64_t> ids;
        const int inliers = ScoreTransform(src, ref, shared, *refined, config, &ids);
        if (inliers >= best_inliers) {
          best_inliers = inliers;
          best_t = *refined;
          best_ids = std::move(ids);
        }
      }
    }
  }

  result.success = true;
  result.transform = best_t;
  result.inlier_images = best_inliers;
  result.inlier_image_ids = std::move(best_ids);
  return result;
}

std::vector<SharedImageView> RefreshSharedViews(const Submap& src, const Submap& ref,
                                                std::vector<SharedImageView> views) {
  for (SharedImageView& view : views) {
    const bool in_src = src.images.count(view.image_id) > 0;
    const bool in_ref = ref.images.count(view.image_id) > 0;
    if (in_src) view.pose_src = src.images.at(view.image_id);
    if (in_ref) view.pose_ref = ref.images.at(view.image_id);

    // Polish the non-member side against the current track positions; the
    // stored registration predates later refinements of that submap.
    if (!in_src) {
      std::vector<Correspondence2D3D> corrs;
      for (const SharedPointPair& pair : view.points) {
        auto track = src.tracks.find(pair.point_a);
        if (track != src.tracks.end()) corrs.push_back({pair.pixel, track->second.xyz});
      }
      if (corrs.size() >= 6) RefinePose(corrs, view.intrinsics, &view.pose_src, 10);
    }
    if (!in_ref) {
      std::vector<Correspondence2D3D> corrs;
      for (const SharedPointPair& pair : view.points) {
        auto track = ref.tracks.find(pair.point_b);
        if (track != ref.tracks.end()) corrs.push_back({pair.pixel, track->second.xyz});
      }
      if (corrs.size() >= 6) RefinePose(corrs, view.intrinsics, &view.pose_ref, 10);
    }
  }
  return views;
}

void MergeSubmaps(SubmapRegistry* registry, SharedImageLedger* ledger, uint64_t src_id,
                  uint64_t ref_id, const SimilarityTransform& t, const MergeDeps& deps,
                  const std::vector<SharedImageView>& shared_views) {
  Submap* src = registry->Find(src_id);
  Submap* ref = registry->Find(ref_id);
  if (!src || !ref) return;

  const std::vector<SharedImageView>& shared = shared_views;
  std::vector<uint64_t> shared_ids;
  for (const auto& view : shared) shared_ids.push_back(view.image_id);

  Submap moved = *src;
  moved.Transform(t);

  // Image union. Ledger-shared images take their reference-frame pose; images
  // already present in ref keep the ref pose.
  for (const auto& [image_id, pose] : moved.images) {
    if (ref->images.count(image_id)) continue;
    const auto view = std::find_if(shared.begin(), shared.end(),
                                   [&](const SharedImageView& v) { return v.image_id == image_id; });
    ref->images[image_id] = view != shared.end() ? view->pose_ref : pose;
    ref->intrinsics[image_id] = moved.intrinsics.at(image_id);
  }
  ref->agents.insert(moved.agents.begin(), moved.agents.end());

  // Track unification support: ledger correspondences plus literal common
  // observations both count; two agreeing hits unify a pair of tracks.
  std::map<std::pair<uint64_t, uint64_t>, int> support;
  for (const SharedImageView& view : shared) {
    for (const SharedPointPair& pair : view.points) {
      if (moved.tracks.count(pair.point_a) && ref->tracks.count(pair.point_b)) {
        support[{pair.point_a, pair.point_b}] += 1;
      }
    }
  }
  for (const auto& [point_id, track] : moved.tracks) {
    std::map<uint64_t, int> hits;  // ref point -> common observation count
    for (const auto& [image_id, kp] : track.observations) {
      auto it = ref->observation_to_point.find({image_id, kp});
      if (it != ref->observation_to_point.end()) hits[it->second] += 1;
    }
    for (const auto& [ref_point, count] : hits) support[{point_id, ref_point}] += count;
  }

  std::map<uint64_t, uint64_t> rename;  // src point id -> merged point id
  for (const auto& [pair, count] : support) {
    if (count >= 2 && !rename.count(pair.first)) rename[pair.first] = pair.second;
  }

  for (const auto& [point_id, track] : moved.tracks) {
    auto renamed = rename.find(point_id);
    if (renamed != rename.end()) {
      Track& target = ref->tracks.at(renamed->second);
      for (const auto& [image_id, kp] : track.observations) {
        if (target.observations.count(image_id)) continue;
        if (ref->observation_to_point.count({image_id, kp})) continue;  // claimed elsewhere
        target.observations[image_id] = kp;
        ref->observation_to_point[{image_id, kp}] = renamed->second;
      }
    } else {
      Track fresh;
      fresh.xyz = track.xyz;
      for (const auto& [image_id, kp] : track.observations) {
        if (!ref->observation_to_point.count({image_id, kp})) {
          fresh.observations[image_id] = kp;
        }
      }
      if (fresh.observations.size() < 2) continue;  // swallowed by existing tracks
      const uint64_t new_id = registry->NewPointId();
      rename[point_id] = new_id;
      fresh.point_id = new_id;
      for (const auto& [image_id, kp] : fresh.observations) {
        ref->observation_to_point[{image_id, kp}] = new_id;
      }
      ref->tracks[new_id] = std::move(fresh);
    }
  }

  ledger->Rekey(src_id, ref_id, t, rename);
  registry->Erase(src_id);

  // Seam refinement: weighted local solve rooted at every shared image.
  if (deps.retrieve && deps.keypoints) {
    for (uint64_t root : shared_ids) {
      if (!ref->images.count(root)) continue;
      const AssociationTree tree =
          BuildAssociationTree(root, deps.retrieve, deps.tree_depth, deps.tree_fanout);
      const std::vector<ImageWeight> weights = ComputeWeights(tree);
      SubmapProblem local = BuildLocalProblem(*ref, weights, deps.keypoints, deps.huber_delta);
      if (local.problem.residuals.empty()) continue;
      bool any_free = false;
      for (const auto& cam : local.problem.cameras) any_free |= !cam.fixed;
      if (!any_free) continue;
      SolveWeightedLocal(&local.problem, deps.lm);
      WriteBack(local, ref);
    }
  }
}

FuseReport AttemptFuse(SubmapRegistry* registry, SharedImageLedger* ledger,
                       std::pair<uint64_t, uint64_t> pair, const MergeConfig& config,
                       const MergeDeps& deps) {
  FuseReport report;
  Submap* a = registry->Find(pair.first);
  Submap* b = registry->Find(pair.second);
  if (!a || !b) return report;
  report.shared_count = ledger->SharedCount(pair.first, pair.second);

  // Tighten both maps before trying to relate them; per-frame local solves
  // leave low-frequency bending that otherwise ends up in the transform.
  if (config.consolidate_before_estimate && deps.keypoints) {
    for (Submap* submap : {a, b}) {
      SubmapProblem problem = BuildGlobalProblem(*submap, deps.keypoints, deps.huber_delta);
      if (problem.problem.residuals.empty()) continue;
      Solve(&problem.problem, deps.lm_global);
      WriteBack(problem, submap);
    }
  }

  // Smaller submap merges into the larger (the reference); ties by id.
  uint64_t src_id = a->NumImages() <= b->NumImages() ? a->id : b->id;
  uint64_t ref_id = src_id == a->id ? b->id : a->id;

  for (int attempt = 0; attempt < 2; ++attempt) {
    const Submap* src = registry->Find(src_id);
    const Submap* ref = registry->Find(ref_id);
    const std::vector<SharedImageView> views =
        RefreshSharedViews(*src, *ref, ledger->View(src_id, ref_id));
    const MergeEstimate estimate = EstimateMergeTransform(*src, *ref, views, config);
    if (estimate.success) {
      MergeSubmaps(registry, ledger, src_id, ref_id, estimate.transform, deps, views);
      report.merged = true;
      report.source = src_id;
      report.reference = ref_id;
      report.reversed = attempt == 1;
      report.transform = estimate.transform;
      report.inlier_images = estimate.inlier_images;
      return report;
    }
    std::swap(src_id, ref_id);  // larger into smaller as the fallback
  }
  ledger->MarkFailed(pair.first, pair.second);
  report.source = src_id;
  report.reference = ref_id;
  return report;
}

std::vector<FuseReport> FuseAllTriggered(SubmapRegistry* registry, SharedImageLedger* ledger,
                                         const MergeConfig& config, const MergeDeps& deps) {
  std::vector<FuseReport> reports;
  while (true) {
    const auto triggered = ledger->TriggeredPairs(config.n_si);
    bool progressed = false;
    for (const auto& pair : triggered) {
      const FuseReport report = AttemptFuse(registry, ledger, pair, config, deps);
      reports.push_back(report);
      if (report.merged) {
        progressed = true;
        break;  // keys changed; re-derive the triggered set
      }
    }
    if (!progressed) break;
  }
  return reports;
}

// ---------------------------------------------------------------------------

namespace {

void AppendResiduals(const Submap& submap, const std::vector<uint64_t>& point_ids,
                     const std::map<uint64_t, int>& camera_slots,
                     const KeypointLookup& keypoints, SubmapProblem* out) {
  std::map<uint64_t, int> point_slots;
  for (size_t i = 0; i < point_ids.size(); ++i) {
    point_slots[point_ids[i]] = static_cast<int>(i);
  }
  for (const uint64_t point_id : point_ids) {
    const Track& track = submap.tracks.at(point_id);
    for (const auto& [image_id, kp] : track.observations) {
      auto cam = camera_slots.find(image_id);
      if (cam == camera_slots.end()) continue;
      BaResidual res;
      res.camera_index = cam->second;
      res.point_index = point_slots.at(point_id);
      res.observed = keypoints(image_id, kp);
      out->problem.residuals.push_back(res);
    }
  }
  // A free camera that ends up with no residual block would make the reduced
  // system singular; pin it instead.
  std::vector<int> counts(out->problem.cameras.size(), 0);
  for (const BaResidual& res : out->problem.residuals) ++counts[res.camera_index];
  for (size_t i = 0; i < out->problem.cameras.size(); ++i) {
    if (counts[i] == 0) out->problem.cameras[i].fixed = true;
  }
}

}  // namespace

SubmapProblem BuildLocalProblem(const Submap& submap, const std::vector<ImageWeight>& weights,
                                const KeypointLookup& keypoints,
                                std::optional<double> huber_delta) {
  SubmapProblem out;
  out.problem.huber_delta = huber_delta;
  if (weights.empty()) return out;
  const uint64_t root = weights.front().image_id;

  // Points: the root's tracks (two or more observations each by invariant).
  for (uint64_t point_id : submap.PointsSeenBy(root)) {
    const Track& track = submap.tracks.at(point_id);
    if (track.observations.size() < 2) continue;
    BaPoint pt;
    pt.point_id = point_id;
    pt.xyz = track.xyz;
    out.point_ids.push_back(point_id);
    out.problem.points.push_back(pt);
  }

  // Cameras: the weighted tree, plus any outside observer pinned in place.
  std::map<uint64_t, int> camera_slots;
  auto add_camera = [&](uint64_t image_id, double weight, bool fixed) {
    if (camera_slots.count(image_id) || !submap.images.count(image_id)) return;
    BaCamera cam;
    cam.image_id = image_id;
    cam.pose = submap.images.at(image_id);
    cam.intrinsics = submap.intrinsics.at(image_id);
    cam.weight = weight;
    cam.fixed = fixed || image_id == submap.gauge_image;
    camera_slots[image_id] = static_cast<int>(out.problem.cameras.size());
    out.camera_ids.push_back(image_id);
    out.problem.cameras.push_back(cam);
  };
  for (const ImageWeight& w : weights) {
    add_camera(w.image_id, w.fixed ? 1.0 : w.weight, w.fixed);
  }
  for (uint64_t point_id : out.point_ids) {
    for (const auto& [image_id, kp] : submap.tracks.at(point_id).observations) {
      add_camera(image_id, 1.0, /*fixed=*/true);
    }
  }

  AppendResiduals(submap, out.point_ids, camera_slots, keypoints, &out);
  return out;
}

SubmapProblem BuildGlobalProblem(const Submap& submap, const KeypointLookup& keypoints,
                                 std::optional<double> huber_delta) {
  SubmapProblem out;
  out.problem.huber_delta = huber_delta;
  std::map<uint64_t, int> camera_slots;
  for (const auto& [image_id, pose] : submap.images) {
    BaCamera cam;
    cam.image_id = image_id;
    cam.pose = pose;
    cam.intrinsics = submap.intrinsics.at(image_id);
    cam.fixed = image_id == submap.gauge_image;
    camera_slots[image_id] = static_cast<int>(out.problem.cameras.size());
    out.camera_ids.push_back(image_id);
    out.problem.cameras.push_back(cam);
  }
  for (const auto& [point_id, track] : submap.tracks) {
    if (track.observations.size() < 2) continue;
    BaPoint pt;
    pt.point_id = point_id;
    pt.xyz = track.xyz;
    out.point_ids.push_back(point_id);
    out.problem.points.push_back(pt);
  }
  AppendResiduals(submap, out.point_ids, camera_slots, keypoints, &out);
  return out;
}

void WriteBack(const SubmapProblem& solved, Submap* submap) {
  for (size_t i = 0; i < solved.camera_ids.size(); ++i) {
    submap->images.at(solved.camera_ids[i]) = solved.problem.cameras[i].pose;
  }
  for (size_t i = 0; i < solved.point_ids.size(); ++i) {
    submap->tracks.at(solved.point_ids[i]).xyz = solved.problem.points[i].xyz;
  }
}

double SubmapMeanReprojectionError(const Submap& submap, const KeypointLookup& keypoints) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& [point_id, track] : submap.tracks) {
    for (const auto& [image_id, kp] : track.observations) {
      const auto pixel =
          Project(submap.intrinsics.at(image_id), submap.images.at(image_id), track.xyz);
      if (!pixel) continue;
      sum += (*pixel - keypoints(image_id, kp)).norm();
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double SubmapRmsReprojectionError(const Submap& submap, const KeypointLookup& keypoints) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& [point_id, track] : submap.tracks) {
    for (const auto& [image_id, kp] : track.observations) {
      const auto pixel =
          Project(submap.intrinsics.at(image_id), submap.images.at(image_id), track.xyz);
      if (!pixel) continue;
      sum += (*pixel - keypoints(image_id, kp)).squaredNorm();
      ++n;
    }
  }
  return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

}  // namespace streamsfm
