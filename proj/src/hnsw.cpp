#include "streamsfm/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <unordered_set>

#include "streamsfm/wire_io.hpp"

namespace streamsfm {

GlobalDescriptor GlobalDescriptor::Normalized(uint64_t image_id, std::vector<float> raw) {
  double sq = 0.0;
  for (float v : raw) sq += static_cast<double>(v) * v;
  if (sq <= 0.0) throw std::invalid_argument("descriptor has zero norm");
  const double inv = 1.0 / std::sqrt(sq);
  for (float& v : raw) v = static_cast<float>(v * inv);
  GlobalDescriptor d;
  d.image_id = image_id;
  d.values = std::move(raw);
  return d;
}

double DescriptorDistance(const std::vector<float>& a, const std::vector<float>& b) {
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sq += d * d;
  }
  return std::sqrt(sq);
}

double HnswParams::LevelNorm() const {
  return level_norm > 0.0 ? level_norm : 1.0 / std::log(static_cast<double>(max_connections));
}

int AssignLayer(double rng_draw, const HnswParams& params) {
  if (!(rng_draw > 0.0) || rng_draw > 1.0) {
    throw std::invalid_argument("AssignLayer: draw must be in (0, 1]");
  }
  return static_cast<int>(std::floor(-std::log(rng_draw) * params.LevelNorm()));
}

HnswIndex::HnswIndex(size_t dim, HnswParams params)
    : dim_(dim), params_(params), rng_(params.seed) {
  if (dim_ == 0) throw std::invalid_argument("HnswIndex: dimension must be positive");
  if (params_.ef_construction < params_.max_connections) {
    throw std::invalid_argument("HnswIndex: ef_construction must be >= max_connections");
  }
}

bool HnswIndex::Closer(double da, uint32_t a, double db, uint32_t b) const {
  if (da != db) return da < db;
  return nodes_[a].image_id < nodes_[b].image_id;
}

namespace {

struct HeapEntry {
  double dist;
  uint32_t node;
  uint64_t image_id;
};

// Closest-first ordering key.
inline bool CloserEntry(const HeapEntry& a, const HeapEntry& b) {
  if (a.dist != b.dist) return a.dist < b.dist;
  return a.image_id < b.image_id;
}

struct FurtherCmp {  // min-heap on closeness -> top() is the furthest
  bool operator()(const HeapEntry& a, const HeapEntry& b) const { return CloserEntry(a, b); }
};
struct CloserCmp {  // top() is the closest
  bool operator()(const HeapEntry& a, const HeapEntry& b) const { return CloserEntry(b, a); }
};

}  // namespace

std::vector<uint32_t> HnswIndex::SearchLayer(const std::vector<float>& query,
                                             const std::vector<uint32_t>& entry_points, int ef,
                                             int layer) const {
  if (entry_points.empty()) {
    throw std::invalid_argument("SearchLayer: empty entry point set");
  }
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, CloserCmp> candidates;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, FurtherCmp> result;
  std::unordered_set<uint32_t> visited;

  for (uint32_t ep : entry_points) {
    if (!visited.insert(ep).second) continue;
    const HeapEntry e{Distance(query, ep), ep, nodes_[ep].image_id};
    candidates.push(e);
    result.push(e);
  }
  while (result.size() > static_cast<size_t>(ef)) result.pop();

  while (!candidates.empty()) {
    const HeapEntry c = candidates.top();
    candidates.pop();
    const HeapEntry f = result.top();
    if (c.dist > f.dist) {
      break;  // every remaining candidate is further than the current worst
    }
    for (uint32_t nb : nodes_[c.node].links[layer]) {
      if (!visited.insert(nb).second) continue;
      const double d = Distance(query, nb);
      const HeapEntry e{d, nb, nodes_[nb].image_id};
      if (result.size() < static_cast<size_t>(ef) || CloserEntry(e, result.top())) {
        candidates.push(e);
        result.push(e);
        if (result.size() > static_cast<size_t>(ef)) result.pop();
      }
    }
  }

  std::vector<HeapEntry> out;
  out.reserve(result.size());
  while (!result.empty()) {
    out.push_back(result.top());
    result.pop();
  }
  std::sort(out.begin(), out.end(), CloserEntry);
  std::vector<uint32_t> ids;
  ids.reserve(out.size());
  for (const HeapEntry& e : out) ids.push_back(e.node);
  return ids;
}

void HnswIndex::Insert(const GlobalDescriptor& descriptor) {
  if (nodes_.size() >= params_.max_elements) {
    throw std::length_error("HnswIndex: at capacity");
  }
  if (descriptor.values.size() != dim_) {
    throw std::invalid_argument("HnswIndex: descriptor dimension mismatch");
  }

  const int level = AssignLayer(rng_.UniformOpenClosed(), params_);
  const uint32_t new_node = static_cast<uint32_t>(nodes_.size());
  Node node;
  node.image_id = descriptor.image_id;
  node.values = descriptor.values;
  node.links.resize(level + 1);
  nodes_.push_back(std::move(node));

  if (new_node == 0) {
    entry_point_ = 0;
    top_layer_ = level;
    return;
  }

  std::vector<uint32_t> ep = {static_cast<uint32_t>(entry_point_)};

  // Above the node's level: greedy descent keeping only the closest node.
  for (int li = top_layer_; li > level; --li) {
    const std::vector<uint32_t> w = SearchLayer(descriptor.values, ep, 1, li);
    ep = {w.front()};
  }

  for (int li = std::min(top_layer_, level); li >= 0; --li) {
    const std::vector<uint32_t> w = SearchLayer(descriptor.values, ep, params_.ef_construction, li);

    const int want = std::min<int>(params_.max_connections, static_cast<int>(w.size()));
    for (int i = 0; i < want; ++i) {
      const uint32_t nb = w[i];
      nodes_[new_node].links[li].push_back(nb);
      nodes_[nb].links[li].push_back(new_node);
    }
    // Shrink over-full neighbor lists, keeping adjacency symmetric.
    for (int i = 0; i < want; ++i) {
      const uint32_t nb = w[i];
      auto& conns = nodes_[nb].links[li];
      const int max_degree = MaxDegree(li);
      if (static_cast<int>(conns.size()) <= max_degree) continue;

      std::vector<HeapEntry> ranked;
      ranked.reserve(conns.size());
      for (uint32_t c : conns) {
        ranked.push_back({DescriptorDistance(nodes_[nb].values, nodes_[c].values), c,
                          nodes_[c].image_id});
      }
      std::sort(ranked.begin(), ranked.end(), CloserEntry);
      std::vector<uint32_t> kept;
      kept.reserve(max_degree);
      for (int k = 0; k < max_degree; ++k) kept.push_back(ranked[k].node);
      for (size_t k = max_degree; k < ranked.size(); ++k) {
        auto& back_links = nodes_[ranked[k].node].links[li];
        back_links.erase(std::remove(back_links.begin(), back_links.end(), nb),
                         back_links.end());
      }
      conns = std::move(kept);
    }
    ep = w;
  }

  if (level > top_layer_) {
    entry_point_ = new_node;
    top_layer_ = level;
  }
}

std::vector<RetrievalResult> HnswIndex::QueryTopN(const std::vector<float>& query, int n) const {
  std::vector<RetrievalResult> results;
  if (nodes_.empty() || n < 1) return results;
  if (query.size() != dim_) throw std::invalid_argument("QueryTopN: dimension mismatch");

  std::vector<uint32_t> ep = {static_cast<uint32_t>(entry_point_)};
  for (int li = top_layer_; li > 0; --li) {
    const std::vector<uint32_t> w = SearchLayer(query, ep, 1, li);
    ep = {w.front()};
  }
  const int ef = std::max(params_.ef_search, n);
  const std::vector<uint32_t> w = SearchLayer(query, ep, ef, 0);

  results.reserve(std::min<size_t>(w.size(), n));
  for (uint32_t node : w) {
    if (static_cast<int>(results.size()) >= n) break;
    results.push_back({nodes_[node].image_id, Distance(query, node)});
  }
  return results;
}

std::vector<RetrievalResult> ExhaustiveQuery(const std::vector<GlobalDescriptor>& all,
                                             const std::vector<float>& query, int n) {
  std::vector<RetrievalResult> results;
  results.reserve(all.size());
  for (const GlobalDescriptor& d : all) {
    results.push_back({d.image_id, DescriptorDistance(query, d.values)});
  }
  std::sort(results.begin(), results.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.image_id < b.image_id;
  });
  if (static_cast<int>(results.size()) > n) results.resize(n);
  return results;
}

// Snapshot layout (little-endian), header then nodes:
//   magic "HNSW", u32 version=1, u32 dim, u32 max_connections, f64 level_norm,
//   u32 ef_construction, u32 ef_search, u64 max_elements, u64 seed,
//   u64 node_count, u64 entry_point, i32 top_layer.
// Per node: u64 image_id, dim x f32 values, u32 layer_count,
//   per layer: u32 neighbor_count, neighbor_count x u32 node index.
void HnswIndex::Save(std::ostream& out) const {
  WriteBytes(out, "HNSW", 4);
  WriteU32(out, 1);
  WriteU32(out, static_cast<uint32_t>(dim_));
  WriteU32(out, static_cast<uint32_t>(params_.max_connections));
  WriteF64(out, params_.LevelNorm());
  WriteU32(out, static_cast<uint32_t>(params_.ef_construction));
  WriteU32(out, static_cast<uint32_t>(params_.ef_search));
  WriteU64(out, params_.max_elements);
  WriteU64(out, params_.seed);
  WriteU64(out, nodes_.size());
  WriteU64(out, entry_point_);
  WriteU32(out, static_cast<uint32_t>(top_layer_));
  for (const Node& node : nodes_) {
    WriteU64(out, node.image_id);
    for (float v : node.values) WriteF32(out, v);
    WriteU32(out, static_cast<uint32_t>(node.links.size()));
    for (const auto& layer : node.links) {
      WriteU32(out, static_cast<uint32_t>(layer.size()));
      for (uint32_t nb : layer) WriteU32(out, nb);
    }
  }
}

HnswIndex HnswIndex::Load(std::istream& in) {
  char magic[4];
  ReadBytes(in, magic, 4);
  if (std::memcmp(magic, "HNSW", 4) != 0) throw std::runtime_error("bad HNSW snapshot magic");
  if (ReadU32(in) != 1) throw std::runtime_error("unsupported HNSW snapshot version");
  const uint32_t dim = ReadU32(in);
  HnswParams params;
  params.max_connections = static_cast<int>(ReadU32(in));
  params.level_norm = ReadF64(in);
  params.ef_construction = static_cast<int>(ReadU32(in));
  params.ef_search = static_cast<int>(ReadU32(in));
  params.max_elements = ReadU64(in);
  params.seed = ReadU64(in);

  HnswIndex index(dim, params);
  const uint64_t count = ReadU64(in);
  index.entry_point_ = ReadU64(in);
  index.top_layer_ = static_cast<int32_t>(ReadU32(in));
  index.nodes_.resize(count);
  for (Node& node : index.nodes_) {
    node.image_id = ReadU64(in);
    node.values.resize(dim);
    for (float& v : node.values) v = ReadF32(in);
    node.links.resize(ReadU32(in));
    for (auto& layer : node.links) {
      layer.resize(ReadU32(in));
      for (uint32_t& nb : layer) nb = ReadU32(in);
    }
  }
  return index;
}

void HnswIndex::SaveFile(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  Save(out);
}

HnswIndex HnswIndex::LoadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return Load(in);
}

bool HnswIndex::SameGraph(const HnswIndex& other) const {
  if (nodes_.size() != other.nodes_.size() || top_layer_ != other.top_layer_ ||
      entry_point_ != other.entry_point_) {
    return false;
  }
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].image_id != other.nodes_[i].image_id) return false;
    if (nodes_[i].links != other.nodes_[i].links) return false;
  }
  return true;
}

}  // namespace streamsfm
