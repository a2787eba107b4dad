#include "streamsfm/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "streamsfm/rng.hpp"

namespace streamsfm {

KeypointMatches OracleMatcher::Match(const FrameRecord& a, const FrameRecord& b) const {
  KeypointMatches matches;
  if (!a.packet.HasOracle() || !b.packet.HasOracle()) return matches;

  std::map<uint64_t, uint32_t> points_in_b;
  for (uint32_t k = 0; k < b.packet.oracle_point_ids.size(); ++k) {
    const uint64_t id = b.packet.oracle_point_ids[k];
    if (id != kOutlierPointId) points_in_b.emplace(id, k);
  }
  for (uint32_t k = 0; k < a.packet.oracle_point_ids.size(); ++k) {
    const uint64_t id = a.packet.oracle_point_ids[k];
    if (id == kOutlierPointId) continue;
    auto it = points_in_b.find(id);
    if (it != points_in_b.end()) matches.emplace_back(k, it->second);
  }
  if (mismatch_fraction_ > 0.0 && matches.size() > 2) {
    Rng rng(HashCombine(HashCombine(seed_, a.image_id), b.image_id));
    for (auto& match : matches) {
      if (rng.UniformDouble() < mismatch_fraction_) {
        match.second = matches[rng.UniformInt(matches.size())].second;
      }
    }
  }
  return matches;
}

void DescriptorNnMatcher::SetKeypointDescriptors(uint64_t image_id, Eigen::MatrixXf descriptors) {
  descriptors_[image_id] = std::move(descriptors);
}

KeypointMatches DescriptorNnMatcher::Match(const FrameRecord& a, const FrameRecord& b) const {
  KeypointMatches matches;
  auto ita = descriptors_.find(a.image_id);
  auto itb = descriptors_.find(b.image_id);
  if (ita == descriptors_.end() || itb == descriptors_.end()) return matches;
  const Eigen::MatrixXf& da = ita->second;  // dim x Ka
  const Eigen::MatrixXf& db = itb->second;  // dim x Kb
  if (da.rows() != db.rows() || da.cols() == 0 || db.cols() == 0) return matches;

  auto best_two = [](const Eigen::MatrixXf& from, const Eigen::MatrixXf& to, int col,
                     int* best) {
    float d1 = std::numeric_limits<float>::max(), d2 = d1;
    *best = -1;
    for (int j = 0; j < to.cols(); ++j) {
      const float d = (to.col(j) - from.col(col)).squaredNorm();
      if (d < d1) {
        d2 = d1;
        d1 = d;
        *best = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    return std::make_pair(d1, d2);
  };

  for (int i = 0; i < da.cols(); ++i) {
    int best_j = -1;
    const auto [d1, d2] = best_two(da, db, i, &best_j);
    if (best_j < 0) continue;
    if (d2 > 0 && d1 / d2 > max_ratio_ * max_ratio_) continue;
    int back = -1;
    best_two(db, da, best_j, &back);
    if (back == i) matches.emplace_back(i, best_j);
  }
  return matches;
}

// ---------------------------------------------------------------------------

Engine::Engine(EngineConfig config, std::shared_ptr<const Matcher> matcher)
    : config_(config),
      matcher_(std::move(matcher)),
      index_(config.descriptor_dim, config.hnsw) {}

KeypointLookup Engine::Keypoints() const {
  return [this](uint64_t image_id, uint32_t kp) { return frames_.at(image_id).keypoints[kp]; };
}

const KeypointMatches& Engine::MatchesFor(uint64_t id_a, uint64_t id_b) {
  const auto key = id_a < id_b ? std::make_pair(id_a, id_b) : std::make_pair(id_b, id_a);
  auto it = match_cache_.find(key);
  if (it == match_cache_.end()) {
    KeypointMatches matches = matcher_->Match(frames_.at(key.first), frames_.at(key.second));
    it = match_cache_.emplace(key, std::move(matches)).first;
  }
  return it->second;
}

const Engine::PairGeometry& Engine::PairInfo(uint64_t id_a, uint64_t id_b) {
  const auto key = id_a < id_b ? std::make_pair(id_a, id_b) : std::make_pair(id_b, id_a);
  auto it = pair_cache_.find(key);
  if (it != pair_cache_.end()) return it->second;

  PairGeometry geometry;
  const KeypointMatches& matches = MatchesFor(key.first, key.second);
  if (static_cast<int>(matches.size()) >= std::max(8, config_.min_matches)) {
    const FrameRecord& a = frames_.at(key.first);
    const FrameRecord& b = frames_.at(key.second);
    std::vector<Correspondence2D> corrs;
    corrs.reserve(matches.size());
    for (const auto& [ka, kb] : matches) {
      corrs.push_back({a.keypoints[ka], b.keypoints[kb]});
    }
    TwoViewOptions options = config_.two_view;
    options.seed = HashCombine(HashCombine(config_.seed, key.first), key.second);
    geometry.two_view = TwoViewVerify(corrs, a.packet.intrinsics, b.packet.intrinsics, options);
    const bool enough = geometry.two_view.num_inliers > config_.two_view.min_inliers;
    geometry.usable = enough && (geometry.two_view.status == TwoViewStatus::kSuccess ||
                                 geometry.two_view.status == TwoViewStatus::kDegenerate);
    geometry.init_quality =
        geometry.two_view.status == TwoViewStatus::kSuccess &&
        geometry.two_view.median_tri_angle_rad >=
            config_.triangulation.min_angle_deg * M_PI / 180.0;
  }
  return pair_cache_.emplace(key, std::move(geometry)).first->second;
}

std::vector<uint64_t> Engine::Candidates(uint64_t image_id, int n) {
  const FrameRecord& record = frames_.at(image_id);
  const auto results = index_.QueryTopN(record.packet.descriptor, n + 1);
  std::vector<uint64_t> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    if (r.image_id == image_id) continue;
    out.push_back(r.image_id);
    if (static_cast<int>(out.size()) >= n) break;
  }
  return out;
}

RetrieveFn Engine::SubmapRetrieve(uint64_t submap_id) {
  // Membership comes from the submap itself so the function keeps working
  // while a merge is rewiring frame bookkeeping.
  return [this, submap_id](uint64_t image_id, int k) {
    std::vector<RetrievedNeighbor> out;
    auto frame = frames_.find(image_id);
    const Submap* submap = registry_.Find(submap_id);
    if (frame == frames_.end() || !submap) return out;
    const auto results =
        index_.QueryTopN(frame->second.packet.descriptor, std::max(config_.top_n, 4 * k + 8));
    for (const auto& r : results) {
      if (r.image_id == image_id) continue;
      if (!submap->images.count(r.image_id)) continue;
      out.push_back({r.image_id, r.distance});
      if (static_cast<int>(out.size()) >= k) break;
    }
    return out;
  };
}

void Engine::RunLocalBa(uint64_t submap_id, uint64_t root_image, FrameEvent* event) {
  Submap* submap = registry_.Find(submap_id);
  if (!submap) return;
  const AssociationTree tree = BuildAssociationTree(
      root_image, SubmapRetrieve(submap_id), config_.tree_depth, config_.tree_fanout);
  const std::vector<ImageWeight> weights = ComputeWeights(tree);
  SubmapProblem local = BuildLocalProblem(*submap, weights, Keypoints(), config_.huber_delta);
  if (!local.problem.residuals.empty()) {
    bool any_free = false;
    for (const auto& cam : local.problem.cameras) any_free |= !cam.fixed;
    if (any_free) {
      SolveWeightedLocal(&local.problem, config_.lm_local);
      WriteBack(local, submap);
    }
  }
  // Mean reprojection error of the newly oriented image feeds the AMRE.
  double sum = 0.0;
  size_t n = 0;
  const KeypointLookup keypoints = Keypoints();
  for (uint64_t point_id : submap->PointsSeenBy(root_image)) {
    const Track& track = submap->tracks.at(point_id);
    const auto pixel =
        Project(submap->intrinsics.at(root_image), submap->images.at(root_image), track.xyz);
    if (!pixel) continue;
    sum += (*pixel - keypoints(root_image, track.observations.at(root_image))).norm();
    ++n;
  }
  const double mean = n == 0 ? 0.0 : sum / static_cast<double>(n);
  amre_samples_.push_back(mean);
  if (event) event->mean_reproj_after_local_ba = mean;
}

void Engine::TriangulateNewTracks(uint64_t submap_id, uint64_t image_id,
                                  const std::vector<uint64_t>& verified_candidates) {
  Submap* submap = registry_.Find(submap_id);
  const FrameRecord& record = frames_.at(image_id);
  const Pose& pose = submap->images.at(image_id);
  const CameraIntrinsics& intr = submap->intrinsics.at(image_id);

  // Per new keypoint: either extend an existing track or gather unclaimed
  // partner observations for a fresh triangulation.
  std::map<uint32_t, std::vector<std::pair<uint64_t, uint32_t>>> fresh_groups;
  for (uint64_t candidate : verified_candidates) {
    const FrameRecord& cand = frames_.at(candidate);
    if (!cand.registered || cand.submap_id != submap_id) continue;
    const bool image_first = image_id < candidate;
    for (const auto& match : MatchesFor(image_id, candidate)) {
      const uint32_t k_new = image_first ? match.first : match.second;
      const uint32_t k_cand = image_first ? match.second : match.first;
      if (submap->observation_to_point.count({image_id, k_new})) continue;

      auto claimed = submap->observation_to_point.find({candidate, k_cand});
      if (claimed != submap->observation_to_point.end()) {
        // Continue the existing track if the new view is consistent with it.
        const Track& track = submap->tracks.at(claimed->second);
        const auto pixel = Project(intr, pose, track.xyz);
        if (pixel && (*pixel - record.keypoints[k_new]).norm() <
                         config_.triangulation.threshold_px) {
          submap->AddObservation(claimed->second, image_id, k_new);
        }
      } else {
        fresh_groups[k_new].push_back({candidate, k_cand});
      }
    }
  }

  for (const auto& [k_new, partners] : fresh_groups) {
    if (submap->observation_to_point.count({image_id, k_new})) continue;
    std::vector<RayObservation> rays;
    std::vector<std::pair<uint64_t, uint32_t>> ray_owners;
    rays.push_back({pose, intr, record.keypoints[k_new]});
    ray_owners.push_back({image_id, k_new});
    for (const auto& [cand_id, k_cand] : partners) {
      if (submap->observation_to_point.count({cand_id, k_cand})) continue;
      rays.push_back({submap->images.at(cand_id), submap->intrinsics.at(cand_id),
                      frames_.at(cand_id).keypoints[k_cand]});
      ray_owners.push_back({cand_id, k_cand});
    }
    if (rays.size() < 2) continue;
    const TriangulationResult tri = TriangulateMultiviewRansac(rays, config_.triangulation);
    if (tri.status != TriangulationStatus::kSuccess) continue;
    if (std::find(tri.inliers.begin(), tri.inliers.end(), 0) == tri.inliers.end()) continue;

    const uint64_t point_id = registry_.NewPointId();
    Track track;
    track.point_id = point_id;
    track.xyz = tri.xyz;
    submap->tracks[point_id] = track;
    for (int idx : tri.inliers) {
      submap->AddObservation(point_id, ray_owners[idx].first, ray_owners[idx].second);
    }
    if (submap->tracks.at(point_id).observations.size() < 2) {
      submap->RemoveTrack(point_id);
    }
  }
}

void Engine::RecordSharedImage(uint64_t image_id, uint64_t primary, uint64_t secondary,
                               const Pose& secondary_pose,
                               const std::vector<std::pair<uint32_t, uint64_t>>& secondary_points) {
  const Submap* submap = registry_.Find(primary);
  // Fields are oriented (a = primary, b = secondary); Record normalizes to
  // the unordered-pair convention.
  SharedImageRecord record;
  record.image_id = image_id;
  record.intrinsics = frames_.at(image_id).packet.intrinsics;
  record.pose_a = submap->images.at(image_id);
  record.pose_b = secondary_pose;

  for (const auto& [kp, secondary_point] : secondary_points) {
    auto primary_point = submap->observation_to_point.find({image_id, kp});
    if (primary_point == submap->observation_to_point.end()) continue;
    SharedPointPair pair;
    pair.point_a = primary_point->second;
    pair.point_b = secondary_point;
    pair.pixel = frames_.at(image_id).keypoints[kp];
    record.common_points.push_back(pair);
  }
  ledger_.Record(primary, secondary, record, config_.n_si);
}

bool Engine::TryRegister(uint64_t image_id, const std::vector<uint64_t>& candidates,
                         FrameEvent* event) {
  // Verified candidates grouped by home submap.
  std::map<uint64_t, std::vector<uint64_t>> by_submap;
  for (uint64_t candidate : candidates) {
    const FrameRecord& cand = frames_.at(candidate);
    if (!PairInfo(image_id, candidate).usable) continue;
    if (cand.registered) by_submap[cand.submap_id].push_back(candidate);
  }
  if (by_submap.empty()) return false;

  std::vector<std::pair<uint64_t, std::vector<uint64_t>>> ordered(by_submap.begin(),
                                                                  by_submap.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second.size() != b.second.size()) return a.second.size() > b.second.size();
    return a.first < b.first;
  });

  FrameRecord& record = frames_.at(image_id);
  uint64_t primary = kInvalidId;
  std::vector<uint64_t> primary_candidates;

  for (const auto& [submap_id, submap_candidates] : ordered) {
    Submap* submap = registry_.Find(submap_id);

    // 2D-3D correspondences through the verified candidates' tracks.
    std::map<uint32_t, uint64_t> keypoint_to_point;
    for (uint64_t candidate : submap_candidates) {
      const bool image_first = image_id < candidate;
      for (const auto& match : MatchesFor(image_id, candidate)) {
        const uint32_t k_new = image_first ? match.first : match.second;
        const uint32_t k_cand = image_first ? match.second : match.first;
        auto it = submap->observation_to_point.find({candidate, k_cand});
        if (it == submap->observation_to_point.end()) continue;
        keypoint_to_point.emplace(k_new, it->second);
      }
    }
    if (static_cast<int>(keypoint_to_point.size()) < 6) continue;

    std::vector<Correspondence2D3D> corrs;
    std::vector<uint32_t> corr_keypoints;
    corrs.reserve(keypoint_to_point.size());
    for (const auto& [k_new, point_id] : keypoint_to_point) {
      corrs.push_back({record.keypoints[k_new], submap->tracks.at(point_id).xyz});
      corr_keypoints.push_back(k_new);
    }
    PnpOptions pnp = config_.pnp;
    pnp.seed = HashCombine(HashCombine(config_.seed, image_id), submap_id);
    const PnpResult result = PnpRansac(corrs, record.packet.intrinsics, pnp);
    if (result.status != PnpStatus::kSuccess) continue;

    if (primary == kInvalidId) {
      primary = submap_id;
      primary_candidates = submap_candidates;
      submap->images[image_id] = result.pose;
      submap->intrinsics[image_id] = record.packet.intrinsics;
      submap->agents.insert(record.packet.agent_id);
      record.registered = true;
      record.submap_id = submap_id;
      pool_.erase(image_id);

      // Inlier 2D-3D correspondences become observations of existing tracks.
      for (int idx : result.inliers) {
        const uint32_t k_new = corr_keypoints[idx];
        submap->AddObservation(keypoint_to_point.at(k_new), image_id, k_new);
      }
      TriangulateNewTracks(submap_id, image_id, submap_candidates);
      RunLocalBa(submap_id, image_id, event);
      if (event) {
        event->registered = true;
        event->submap_id = submap_id;
      }
    } else {
      // Second registration: a shared image bridging two submaps.
      std::vector<std::pair<uint32_t, uint64_t>> secondary_points;
      for (int idx : result.inliers) {
        secondary_points.push_back({corr_keypoints[idx], keypoint_to_point.at(corr_keypoints[idx])});
      }
      RecordSharedImage(image_id, primary, submap_id, result.pose, secondary_points);
      if (event) {
        event->shared_image = true;
        event->second_submap_id = submap_id;
      }
      break;  // at most two submaps per frame
    }
  }

  if (primary != kInvalidId) {
    ++registrations_since_global_ba_;
    return true;
  }
  return false;
}

bool Engine::TryInitializeSubmap(FrameEvent* event) {
  // Best verified pool pair that passes the angle guard, by inlier count.
  uint64_t best_a = kInvalidId, best_b = kInvalidId;
  int best_inliers = 0;
  for (auto ita = pool_.begin(); ita != pool_.end(); ++ita) {
    for (auto itb = std::next(ita); itb != pool_.end(); ++itb) {
      auto cached = pair_cache_.find({*ita, *itb});
      if (cached == pair_cache_.end() || !cached->second.init_quality) continue;
      if (cached->second.two_view.num_inliers > best_inliers) {
        best_inliers = cached->second.two_view.num_inliers;
        best_a = *ita;
        best_b = *itb;
      }
    }
  }
  if (best_a == kInvalidId) return false;

  // Pool iteration is ordered, so best_a < best_b and the cached relative
  // pose maps the best_a frame into best_b. The lower image id anchors the
  // gauge at identity with a unit baseline.
  const PairGeometry& geometry = pair_cache_.at({best_a, best_b});

  Submap& submap = registry_.Create();
  submap.gauge_image = best_a;
  FrameRecord& rec_a = frames_.at(best_a);
  FrameRecord& rec_b = frames_.at(best_b);
  submap.images[best_a] = Pose{};
  submap.images[best_b] = geometry.two_view.relative;  // x_b = R x_a + t, |t| = 1
  submap.intrinsics[best_a] = rec_a.packet.intrinsics;
  submap.intrinsics[best_b] = rec_b.packet.intrinsics;
  submap.agents.insert(rec_a.packet.agent_id);
  submap.agents.insert(rec_b.packet.agent_id);

  for (const auto& match : MatchesFor(best_a, best_b)) {
    const uint32_t ka = match.first;   // keypoint in the lower image id
    const uint32_t kb = match.second;
    if (submap.observation_to_point.count({best_a, ka})) continue;
    if (submap.observation_to_point.count({best_b, kb})) continue;
    std::vector<RayObservation> rays = {
        {submap.images[best_a], submap.intrinsics[best_a], rec_a.keypoints[ka]},
        {submap.images[best_b], submap.intrinsics[best_b], rec_b.keypoints[kb]},
    };
    const TriangulationResult tri = TriangulateMultiviewRansac(rays, config_.triangulation);
    if (tri.status != TriangulationStatus::kSuccess || tri.inliers.size() != 2) continue;
    const uint64_t point_id = registry_.NewPointId();
    Track track;
    track.point_id = point_id;
    track.xyz = tri.xyz;
    submap.tracks[point_id] = track;
    submap.AddObservation(point_id, best_a, ka);
    submap.AddObservation(point_id, best_b, kb);
  }
  if (submap.tracks.size() < 8) {
    registry_.Erase(submap.id);
    return false;
  }

  rec_a.registered = rec_b.registered = true;
  rec_a.submap_id = rec_b.submap_id = submap.id;
  pool_.erase(best_a);
  pool_.erase(best_b);
  if (event) event->spawned_submap = true;
  registrations_since_global_ba_ += 2;
  return true;
}

void Engine::FuseTriggeredPairs() {
  const auto triggered = ledger_.TriggeredPairs(config_.n_si);
  if (triggered.empty()) return;

  MergeConfig merge = config_.merge;
  merge.n_si = config_.n_si;
  merge.seed = HashCombine(config_.seed, 0xf05eULL + frame_events_.size());
  // Consolidation runs here so the recorded pre-merge centers describe the
  // state the estimated transform actually relates.
  merge.consolidate_before_estimate = false;
  MergeDeps deps;
  deps.keypoints = Keypoints();
  deps.lm = config_.lm_local;
  deps.lm_global = config_.lm_global;
  deps.huber_delta = config_.huber_delta;
  deps.tree_depth = config_.tree_depth;
  deps.tree_fanout = config_.tree_fanout;

  while (true) {
    const auto pairs = ledger_.TriggeredPairs(config_.n_si);
    bool progressed = false;
    for (const auto& pair : pairs) {
      Submap* a = registry_.Find(pair.first);
      Submap* b = registry_.Find(pair.second);
      if (!a || !b) continue;

      if (config_.merge.consolidate_before_estimate) {
        for (Submap* submap : {a, b}) {
          SubmapProblem problem =
              BuildGlobalProblem(*submap, Keypoints(), config_.huber_delta);
          if (problem.problem.residuals.empty()) continue;
          Solve(&problem.problem, config_.lm_global);
          WriteBack(problem, submap);
        }
      }

      MergeEventRecord record;
      record.frame_index = frame_events_.size();
      record.shared_count = ledger_.SharedCount(pair.first, pair.second);
      for (const auto& [image_id, pose] : a->images) {
        record.source_centers.push_back({image_id, pose.Center()});
      }
      for (const auto& [image_id, pose] : b->images) {
        record.reference_centers.push_back({image_id, pose.Center()});
      }

      // AttemptFuse resolves the merge direction internally, so the seam
      // solve retrieves within whichever of the two submaps survives.
      MergeDeps bound = deps;
      bound.retrieve = [this, pair](uint64_t image_id, int k) {
        const uint64_t survivor = registry_.Find(pair.first) ? pair.first : pair.second;
        return SubmapRetrieve(survivor)(image_id, k);
      };

      const FuseReport report = AttemptFuse(&registry_, &ledger_, pair, merge, bound);
      if (report.merged) {
        // Swap the center lists if the direction was reversed relative to the
        // (first, second) order captured above.
        if (report.source != pair.first) {
          std::swap(record.source_centers, record.reference_centers);
        }
        record.source = report.source;
        record.reference = report.reference;
        record.reversed = report.reversed;
        record.inlier_images = report.inlier_images;
        record.transform = report.transform;
        merge_events_.push_back(std::move(record));

        // Frame bookkeeping: everything from the source now lives in the
        // reference submap.
        for (auto& [id, frame] : frames_) {
          if (frame.submap_id == report.source) frame.submap_id = report.reference;
        }
        progressed = true;
        break;
      }
    }
    if (!progressed) break;
  }
}

void Engine::SweepPool() {
  bool progressed = true;
  while (progressed) {
    progressed = false;
    const std::vector<uint64_t> pooled(pool_.begin(), pool_.end());
    for (uint64_t image_id : pooled) {
      if (!pool_.count(image_id)) continue;
      const auto candidates = Candidates(image_id, config_.top_n);
      if (TryRegister(image_id, candidates, nullptr)) {
        progressed = true;
        FuseTriggeredPairs();
      }
    }
    if (!progressed && pool_.size() >= 2) {
      // A fresh registration may have consumed matches; see whether the
      // remaining pool can seed another reconstruction.
      if (TryInitializeSubmap(nullptr)) progressed = true;
    }
  }
}

void Engine::MaybeGlobalBa() {
  if (config_.global_ba != GlobalBaPolicy::kEveryK || config_.global_ba_every_k <= 0) return;
  if (registrations_since_global_ba_ < static_cast<size_t>(config_.global_ba_every_k)) return;
  registrations_since_global_ba_ = 0;
  for (auto& [id, submap] : registry_.All()) {
    SubmapProblem problem = BuildGlobalProblem(submap, Keypoints(), config_.huber_delta);
    if (problem.problem.residuals.empty()) continue;
    Solve(&problem.problem, config_.lm_global);
    WriteBack(problem, &submap);
  }
}

FrameEvent Engine::ProcessFrame(const FramePacket& packet) {
  const auto t0 = std::chrono::steady_clock::now();
  FrameEvent event;
  event.image_id = MakeImageId(packet.agent_id, packet.frame_id);
  event.agent_id = packet.agent_id;

  auto reject = [&](const std::string& reason) {
    event.rejected = true;
    event.reject_reason = reason;
    event.submap_count_after = registry_.Count();
    event.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    frame_events_.push_back(event);
    return event;
  };

  if (static_cast<int>(packet.descriptor.size()) != config_.descriptor_dim) {
    return reject("descriptor dimension mismatch");
  }
  if (!packet.intrinsics.Valid()) return reject("invalid intrinsics");
  if (frames_.count(event.image_id)) return reject("duplicate frame");
  if (packet.oracle_point_ids.size() != 0 &&
      packet.oracle_point_ids.size() != packet.keypoints.size()) {
    return reject("oracle block size mismatch");
  }
  const double margin = config_.keypoint_bounds_margin;
  for (const auto& kp : packet.keypoints) {
    if (!std::isfinite(kp.x()) || !std::isfinite(kp.y()) || kp.x() < -margin ||
        kp.y() < -margin || kp.x() > packet.intrinsics.width + margin ||
        kp.y() > packet.intrinsics.height + margin) {
      return reject("keypoint out of bounds");
    }
  }

  // Retrieval first, then the index is extended with the newcomer.
  GlobalDescriptor descriptor;
  descriptor.image_id = event.image_id;
  descriptor.values = packet.descriptor;
  std::vector<uint64_t> candidates;
  if (index_.Size() > 0) {
    const auto results = index_.QueryTopN(packet.descriptor, config_.top_n);
    for (const auto& r : results) {
      candidates.push_back(r.image_id);
      event.retrieved.push_back(r.image_id);
    }
  }
  index_.Insert(descriptor);

  FrameRecord record;
  record.image_id = event.image_id;
  record.packet = packet;
  record.keypoints.reserve(packet.keypoints.size());
  for (const auto& kp : packet.keypoints) record.keypoints.push_back(kp.cast<double>());
  frames_.emplace(event.image_id, std::move(record));

  if (!TryRegister(event.image_id, candidates, &event)) {
    pool_.insert(event.image_id);
    if (TryInitializeSubmap(&event)) {
      SweepPool();
    }
  } else {
    FuseTriggeredPairs();
    SweepPool();
  }
  MaybeGlobalBa();

  size_t registered = 0;
  for (const auto& [id, frame] : frames_) registered += frame.registered;
  event.registered = frames_.at(event.image_id).registered;
  event.pooled = pool_.count(event.image_id) > 0;
  if (event.registered) {
    event.submap_id = frames_.at(event.image_id).submap_id;
  }
  event.registered_frames_after = registered;
  event.submap_count_after = registry_.Count();
  event.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  frame_events_.push_back(event);
  return event;
}

FinalReport Engine::Finalize() {
  SweepPool();
  FuseTriggeredPairs();

  FinalReport report;
  for (auto& [id, submap] : registry_.All()) {
    SubmapProblem problem = BuildGlobalProblem(submap, Keypoints(), config_.huber_delta);
    if (problem.problem.residuals.empty()) continue;
    report.global_ba_reports.emplace_back(id, Solve(&problem.problem, config_.lm_global));
    WriteBack(problem, &submap);
  }

  report.frames_seen = frame_events_.size();
  for (const auto& [id, frame] : frames_) report.frames_registered += frame.registered;
  report.submap_count = registry_.Count();

  double amre_sum = 0.0;
  for (double a : amre_samples_) amre_sum += a;
  report.amre = amre_samples_.empty() ? 0.0 : amre_sum / amre_samples_.size();

  double err_sum = 0.0;
  size_t err_n = 0, obs_n = 0, track_n = 0;
  const KeypointLookup keypoints = Keypoints();
  for (const auto& [id, submap] : registry_.All()) {
    for (const auto& [point_id, track] : submap.tracks) {
      track_n += 1;
      obs_n += track.observations.size();
      for (const auto& [image_id, kp] : track.observations) {
        const auto pixel =
            Project(submap.intrinsics.at(image_id), submap.images.at(image_id), track.xyz);
        if (!pixel) continue;
        err_sum += (*pixel - keypoints(image_id, kp)).norm();
        ++err_n;
      }
    }
  }
  report.mfre = err_n == 0 ? 0.0 : err_sum / static_cast<double>(err_n);
  report.mtl = track_n == 0 ? 0.0 : static_cast<double>(obs_n) / track_n;

  double ms_sum = 0.0;
  for (const auto& e : frame_events_) {
    ms_sum += e.wall_ms;
    report.submap_count_timeline.push_back(e.submap_count_after);
  }
  report.mean_frame_ms = frame_events_.empty() ? 0.0 : ms_sum / frame_events_.size();
  return report;
}

}  // namespace streamsfm
