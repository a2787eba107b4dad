#include "streamsfm/association.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace streamsfm {

AssociationTree BuildAssociationTree(uint64_t root_id, const RetrieveFn& retrieve, int max_depth,
                                     int fanout) {
  AssociationTree tree;
  tree.root_id = root_id;
  tree.max_depth = max_depth;
  tree.fanout = fanout;

  std::set<uint64_t> in_tree = {root_id};

  std::vector<AssociationEntry> frontier;
  for (const RetrievedNeighbor& nb : retrieve(root_id, fanout)) {
    if (nb.image_id == root_id || in_tree.count(nb.image_id)) continue;
    AssociationEntry e;
    e.image_id = nb.image_id;
    e.layer = 1;
    e.parent_id = root_id;
    e.parent_edge = nb.distance;
    e.path_distance_sum = nb.distance;
    e.path_inverse_sum = 1.0 / std::max(nb.distance, kMinEdgeDistance);
    frontier.push_back(e);
    in_tree.insert(nb.image_id);
  }
  if (frontier.empty()) return tree;
  std::sort(frontier.begin(), frontier.end(),
            [](const AssociationEntry& a, const AssociationEntry& b) {
              return a.image_id < b.image_id;
            });
  tree.layers.push_back(frontier);

  for (int depth = 2; depth <= max_depth; ++depth) {
    // Best candidate path per image: minimal cumulative edge distance,
    // parent id as the deterministic tie-break.
    std::map<uint64_t, AssociationEntry> candidates;
    for (const AssociationEntry& parent : tree.layers.back()) {
      for (const RetrievedNeighbor& nb : retrieve(parent.image_id, fanout)) {
        if (in_tree.count(nb.image_id)) continue;  // already at a shallower layer
        AssociationEntry e;
        e.image_id = nb.image_id;
        e.layer = depth;
        e.parent_id = parent.image_id;
        e.parent_edge = nb.distance;
        e.path_distance_sum = parent.path_distance_sum + nb.distance;
        e.path_inverse_sum =
            parent.path_inverse_sum + 1.0 / std::max(nb.distance, kMinEdgeDistance);
        auto it = candidates.find(nb.image_id);
        if (it == candidates.end() || e.path_distance_sum < it->second.path_distance_sum ||
            (e.path_distance_sum == it->second.path_distance_sum &&
             e.parent_id < it->second.parent_id)) {
          candidates[nb.image_id] = e;
        }
      }
    }
    if (candidates.empty()) break;
    std::vector<AssociationEntry> layer;
    layer.reserve(candidates.size());
    for (auto& [id, e] : candidates) {
      layer.push_back(e);
      in_tree.insert(id);
    }
    tree.layers.push_back(std::move(layer));
  }
  return tree;
}

double HierarchicalWeight(int layer, double path_inverse_sum) {
  if (layer <= 0) return 1.0;  // the root
  if (layer == 1) return 1.0;  // exponent vanishes
  return std::pow(path_inverse_sum, -static_cast<double>(layer - 1));
}

std::vector<ImageWeight> ComputeWeights(const AssociationTree& tree) {
  std::vector<ImageWeight> weights;
  weights.push_back({tree.root_id, 0, 1.0, false});
  for (const auto& layer : tree.layers) {
    for (const AssociationEntry& e : layer) {
      ImageWeight w;
      w.image_id = e.image_id;
      w.layer = e.layer;
      if (e.layer == tree.max_depth) {
        w.weight = 0.0;
        w.fixed = true;
      } else {
        w.weight = HierarchicalWeight(e.layer, e.path_inverse_sum);
        w.fixed = false;
      }
      weights.push_back(w);
    }
  }
  return weights;
}

}  // namespace streamsfm
