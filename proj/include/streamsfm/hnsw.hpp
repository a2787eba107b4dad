#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamsfm/rng.hpp"

namespace streamsfm {

// Fixed-dimension, L2-normalized image-level feature used as retrieval key.
struct GlobalDescriptor {
  uint64_t image_id = 0;
  std::vector<float> values;

  // Normalizes a raw vector; throws std::invalid_argument on zero norm.
  static GlobalDescriptor Normalized(uint64_t image_id, std::vector<float> raw);
};

// Euclidean distance, accumulated in double for a platform-stable ordering.
double DescriptorDistance(const std::vector<float>& a, const std::vector<float>& b);

struct HnswParams {
  size_t max_elements = 10000;
  int ef_construction = 200;
  int max_connections = 16;   // per node per layer; doubled at layer 0
  double level_norm = 0.0;    // 0 -> use 1/ln(max_connections)
  // Query-time candidate list. The plain closest-M neighbor selection needs a
  // generous ef to hold 0.95+ top-30 recall on unstructured descriptors.
  int ef_search = 256;
  uint64_t seed = 0;

  double LevelNorm() const;
};

struct RetrievalResult {
  uint64_t image_id = 0;
  double distance = 0.0;
};

// Number of layers a fresh node starts at, given one uniform draw in (0, 1].
// Throws std::invalid_argument for draws outside (0, 1].
int AssignLayer(double rng_draw, const HnswParams& params);

// Incrementally built multi-layer proximity graph over global descriptors.
// Greedy per-layer search with a dynamic candidate list; all adjacency kept
// bidirectional, node degree bounded by max_connections (2x at layer 0).
// Single writer: Insert must not run concurrently with anything else.
class HnswIndex {
 public:
  explicit HnswIndex(size_t dim, HnswParams params = {});

  size_t Size() const { return nodes_.size(); }
  size_t Dim() const { return dim_; }
  const HnswParams& Params() const { return params_; }
  int TopLayer() const { return top_layer_; }
  size_t EntryPoint() const { return entry_point_; }

  // Adds a descriptor. Throws std::length_error at capacity and
  // std::invalid_argument on dimension mismatch.
  void Insert(const GlobalDescriptor& descriptor);

  // Top-n nearest already-inserted descriptors by ascending Euclidean
  // distance, ties broken by lower image_id. Empty index yields an empty
  // result. The query itself is NOT inserted.
  std::vector<RetrievalResult> QueryTopN(const std::vector<float>& query, int n) const;

  // Introspection used by tests and serialization.
  const std::vector<float>& NodeDescriptor(size_t node) const { return nodes_[node].values; }
  uint64_t NodeImageId(size_t node) const { return nodes_[node].image_id; }
  int NodeLayerCount(size_t node) const { return static_cast<int>(nodes_[node].links.size()); }
  const std::vector<uint32_t>& NodeNeighbors(size_t node, int layer) const {
    return nodes_[node].links[layer];
  }

  // Greedy search of one layer starting from the given entry nodes; returns
  // up to ef nodes ordered closest-first. Throws std::invalid_argument on an
  // empty entry set.
  std::vector<uint32_t> SearchLayer(const std::vector<float>& query,
                                    const std::vector<uint32_t>& entry_points, int ef,
                                    int layer) const;

  void Save(std::ostream& out) const;
  static HnswIndex Load(std::istream& in);
  void SaveFile(const std::string& path) const;
  static HnswIndex LoadFile(const std::string& path);

  bool SameGraph(const HnswIndex& other) const;

 private:
  struct Node {
    uint64_t image_id = 0;
    std::vector<float> values;
    std::vector<std::vector<uint32_t>> links;  // per layer 0..node_top
  };

  int MaxDegree(int layer) const {
    return layer == 0 ? 2 * params_.max_connections : params_.max_connections;
  }
  double Distance(const std::vector<float>& q, uint32_t node) const {
    return DescriptorDistance(q, nodes_[node].values);
  }
  // "a closer than b" with image-id tie-break.
  bool Closer(double da, uint32_t a, double db, uint32_t b) const;

  size_t dim_;
  HnswParams params_;
  std::vector<Node> nodes_;
  size_t entry_point_ = 0;
  int top_layer_ = -1;  // -1 while empty
  Rng rng_;
};

// Exact top-n by linear scan; the oracle the graph search is measured against.
std::vector<RetrievalResult> ExhaustiveQuery(const std::vector<GlobalDescriptor>& all,
                                             const std::vector<float>& query, int n);

}  // namespace streamsfm
