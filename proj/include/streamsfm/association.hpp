#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace streamsfm {

// Minimum edge distance; duplicate descriptors (distance 0) would otherwise
// blow up the inverse-distance sums.
constexpr double kMinEdgeDistance = 1e-6;

struct AssociationEntry {
  uint64_t image_id = 0;
  int layer = 0;                  // 1..depth
  uint64_t parent_id = 0;         // predecessor on the kept path
  double parent_edge = 0.0;       // similarity distance of the parent edge
  double path_distance_sum = 0.0; // sum of raw edge distances along the path
  double path_inverse_sum = 0.0;  // sum of 1/clamped edge distances
};

// Layered neighborhood of a newly registered image: layer 1 holds its top-k
// retrieval results, layer i+1 the top-k of layer-i members, down to max_depth.
// Every image lands in its shallowest reachable layer, keeping the path with
// the smallest cumulative edge distance among equal-depth alternatives.
struct AssociationTree {
  uint64_t root_id = 0;
  int max_depth = 4;
  int fanout = 8;
  std::vector<std::vector<AssociationEntry>> layers;  // layers[0] = layer 1

  size_t TotalEntries() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }
};

struct RetrievedNeighbor {
  uint64_t image_id = 0;
  double distance = 0.0;
};

using RetrieveFn = std::function<std::vector<RetrievedNeighbor>(uint64_t image_id, int k)>;

AssociationTree BuildAssociationTree(uint64_t root_id, const RetrieveFn& retrieve, int max_depth,
                                     int fanout);

struct ImageWeight {
  uint64_t image_id = 0;
  int layer = 0;  // 0 for the root
  double weight = 1.0;
  bool fixed = false;  // the bottom layer: pose held constant
};

// Per-image weight from the layer index and the shortest-path inverse sum:
// 1 for the root and (by the vanishing exponent) for layer 1, fixed at the
// bottom layer, (sum 1/s)^-(layer-1) in between.
double HierarchicalWeight(int layer, double path_inverse_sum);

// Weights for the whole tree, root first, then layer order, ascending ids.
std::vector<ImageWeight> ComputeWeights(const AssociationTree& tree);

}  // namespace streamsfm
