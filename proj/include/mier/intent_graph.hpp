#pragma once

// The multiplex intent graph: one node per (pair, intent), inter-layer peer
// edges in both typed directions, and directed intra-layer edges from each
// node's k nearest same-layer neighbors. Edge sets are fixed at construction.

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mier/common.hpp"
#include "mier/embedding.hpp"
#include "mier/nn.hpp"

namespace mier {

struct GraphConfig {
  int k = 4;
  // When layers carry different feature dims (mixed import), construction
  // fails unless a projection dim is configured; the model then learns one
  // linear adapter per layer and the run manifest flags it.
  std::optional<std::size_t> project_dim;

  void validate() const {
    if (k < 0) throw ConfigError("graph k must be >= 0");
    if (project_dim.has_value() && *project_dim == 0) throw ConfigError("project_dim must be positive");
  }
};

// Exhaustive k-nearest-neighbor lists under squared Euclidean distance.
// Self is excluded, ties break toward the smaller index, and each list is
// sorted by (distance, index). k >= n clamps to n-1 with a warning.
inline std::vector<std::vector<std::uint32_t>> knn_bruteforce(const DenseMatrix& vectors, int k,
                                                              Warnings* warnings = nullptr) {
  const std::size_t n = vectors.rows();
  const std::size_t d = vectors.cols();
  if (k < 0) throw ConfigError("knn_bruteforce: k must be >= 0");
  std::size_t k_eff = static_cast<std::size_t>(k);
  if (n > 0 && k_eff >= n) {
    k_eff = n - 1;
    if (warnings)
      warnings->add("knn-clamped", "k=" + std::to_string(k) + " clamped to " + std::to_string(k_eff) +
                                       " (only " + std::to_string(n) + " vectors)");
  }
  std::vector<std::vector<std::uint32_t>> out(n);
  if (k_eff == 0) return out;
  parallel_for(n, [&](std::size_t i) {
    const double* a = vectors.row(i);
    std::vector<std::pair<double, std::uint32_t>> dists;
    dists.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* b = vectors.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        double diff = a[c] - b[c];
        s += diff * diff;
      }
      dists.emplace_back(s, static_cast<std::uint32_t>(j));
    }
    std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k_eff), dists.end());
    out[i].reserve(k_eff);
    for (std::size_t t = 0; t < k_eff; ++t) out[i].push_back(dists[t].second);
  });
  return out;
}

enum class Relation { Intra, Inter };

class MultiplexGraph {
 public:
  MultiplexGraph() = default;

  std::size_t layer_count() const { return p_; }
  std::size_t pair_count() const { return n_; }
  int k_configured() const { return k_; }
  std::size_t k_effective() const { return k_eff_; }
  bool mixed_dims() const { return mixed_dims_; }

  std::size_t node_count() const { return n_ * p_; }
  std::size_t inter_edge_count() const { return n_ * p_ * (p_ - 1); }
  std::size_t intra_edge_count() const {
    std::size_t total = 0;
    for (const auto& v : in_intra_) total += v.size();
    return total;
  }

  std::uint32_t flat_id(std::size_t intent, std::size_t pair) const {
    return static_cast<std::uint32_t>(intent * n_ + pair);
  }
  std::size_t intent_of(std::uint32_t node) const { return node / n_; }
  std::size_t pair_of(std::uint32_t node) const { return node % n_; }

  // Nodes with an edge of the given type incoming to `node`, ascending.
  const std::vector<std::uint32_t>& neighbor_sets(std::uint32_t node, Relation r) const {
    return r == Relation::Intra ? in_intra_[node] : in_inter_[node];
  }

  // The typed directed edge set E^{from,to} as (src,dst) pairs, for tests and
  // serialization; distinct from E^{to,from}.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> inter_edges(std::size_t from_layer, std::size_t to_layer) const {
    if (from_layer == to_layer || from_layer >= p_ || to_layer >= p_)
      throw DataError("inter_edges needs two distinct layers");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    out.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) out.emplace_back(flat_id(from_layer, i), flat_id(to_layer, i));
    return out;
  }

  const DenseMatrix& layer_features(std::size_t intent) const { return features_[intent]; }
  std::size_t layer_dim(std::size_t intent) const { return features_[intent].cols(); }

  friend MultiplexGraph build_graph(const std::vector<PairEmbeddingSet>&, const GraphConfig&, Warnings*);
  friend MultiplexGraph load_graph(const std::filesystem::path&);

 private:
  std::size_t p_ = 0, n_ = 0, k_eff_ = 0;
  int k_ = 0;
  bool mixed_dims_ = false;
  std::vector<DenseMatrix> features_;                 // per layer, n x d_p
  std::vector<std::vector<std::uint32_t>> in_intra_;  // per flat node, sorted srcs
  std::vector<std::vector<std::uint32_t>> in_inter_;  // per flat node, sorted srcs
};

// Builds the graph over one embedding set per intent. Intra-layer kNN runs on
// each layer's own vectors over the full candidate set (train, valid and test
// pairs alike); only training labels ever reach a loss.
inline MultiplexGraph build_graph(const std::vector<PairEmbeddingSet>& sets, const GraphConfig& cfg,
                                  Warnings* warnings = nullptr) {
  cfg.validate();
  if (sets.empty()) throw DataError("build_graph: no embedding sets");
  const std::size_t p_count = sets.size();
  const std::size_t n = sets[0].pair_count();
  if (n == 0) throw DataError("build_graph: empty candidate set");
  for (std::size_t p = 0; p < p_count; ++p) {
    if (sets[p].pair_count() != n)
      throw DataError("build_graph: intent " + std::to_string(p) + " covers " + std::to_string(sets[p].pair_count()) +
                      " pairs, intent 0 covers " + std::to_string(n));
    sets[p].vectors.require_finite("graph features");
  }
  bool mixed = false;
  for (std::size_t p = 1; p < p_count; ++p)
    if (sets[p].dim() != sets[0].dim()) mixed = true;
  if (mixed && !cfg.project_dim.has_value())
    throw DataError("build_graph: layers have different feature dims; set project_dim to enable learned projections");

  MultiplexGraph g;
  g.p_ = p_count;
  g.n_ = n;
  g.k_ = cfg.k;
  g.mixed_dims_ = mixed;
  g.features_.reserve(p_count);
  for (const auto& s : sets) g.features_.push_back(s.vectors);
  g.in_intra_.assign(n * p_count, {});
  g.in_inter_.assign(n * p_count, {});

  g.k_eff_ = std::min<std::size_t>(static_cast<std::size_t>(cfg.k), n - 1);
  for (std::size_t p = 0; p < p_count; ++p) {
    auto knn = knn_bruteforce(g.features_[p], cfg.k, p == 0 ? warnings : nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      auto& in = g.in_intra_[g.flat_id(p, i)];
      for (std::uint32_t j : knn[i]) in.push_back(g.flat_id(p, j));
      std::sort(in.begin(), in.end());
    }
  }
  for (std::size_t p = 0; p < p_count; ++p)
    for (std::size_t i = 0; i < n; ++i) {
      auto& in = g.in_inter_[g.flat_id(p, i)];
      for (std::size_t q = 0; q < p_count; ++q)
        if (q != p) in.push_back(g.flat_id(q, i));
      std::sort(in.begin(), in.end());
    }
  return g;
}

// --- Serialization ------------------------------------------------------------

// graph.json manifest + adjacency.bin (typed edge lists, 32-bit little-endian
// indices) + per-layer feature matrices in the embedding file format.
namespace graphfile {
constexpr char kMagic[4] = {'M', 'I', 'E', 'G'};
constexpr std::uint32_t kVersion = 1;
}  // namespace graphfile

inline void save_graph(const std::filesystem::path& dir, const MultiplexGraph& g) {
  std::filesystem::create_directories(dir);
  std::string blob(graphfile::kMagic, 4);
  embfile::put_u32(blob, graphfile::kVersion);
  embfile::put_u32(blob, static_cast<std::uint32_t>(g.layer_count()));
  embfile::put_u32(blob, static_cast<std::uint32_t>(g.pair_count()));
  embfile::put_u32(blob, static_cast<std::uint32_t>(g.k_effective()));
  const std::size_t n_nodes = g.node_count();
  for (Relation rel : {Relation::Intra, Relation::Inter}) {
    for (std::size_t v = 0; v < n_nodes; ++v) {
      const auto& in = g.neighbor_sets(static_cast<std::uint32_t>(v), rel);
      embfile::put_u32(blob, static_cast<std::uint32_t>(in.size()));
      for (std::uint32_t src : in) embfile::put_u32(blob, src);
    }
  }
  write_text_file(dir / "adjacency.bin", blob);

  ordered_json manifest;
  manifest["version"] = graphfile::kVersion;
  manifest["P"] = g.layer_count();
  manifest["pair_count"] = g.pair_count();
  manifest["k"] = g.k_configured();
  manifest["k_effective"] = g.k_effective();
  manifest["mixed_dims"] = g.mixed_dims();
  ordered_json dims = ordered_json::array();
  ordered_json files = ordered_json::array();
  for (std::size_t p = 0; p < g.layer_count(); ++p) {
    dims.push_back(g.layer_dim(p));
    PairEmbeddingSet set;
    set.intent_id = static_cast<int>(p);
    set.vectors = g.layer_features(p);
    std::string name = "features_" + std::to_string(p) + ".emb";
    write_embedding_matrix(dir / name, set);
    files.push_back(name);
  }
  manifest["dims"] = std::move(dims);
  manifest["feature_files"] = std::move(files);
  manifest["adjacency"] = "adjacency.bin";
  write_text_file(dir / "graph.json", manifest.dump(2) + "\n");
}

inline MultiplexGraph load_graph(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "graph.json"));
  } catch (const std::exception& e) {
    throw DataError("bad graph manifest in '" + dir.string() + "': " + e.what());
  }
  MultiplexGraph g;
  g.p_ = manifest.at("P").get<std::size_t>();
  g.n_ = manifest.at("pair_count").get<std::size_t>();
  g.k_ = manifest.at("k").get<int>();
  g.k_eff_ = manifest.at("k_effective").get<std::size_t>();
  g.mixed_dims_ = manifest.at("mixed_dims").get<bool>();
  for (std::size_t p = 0; p < g.p_; ++p) {
    auto name = manifest.at("feature_files").at(p).get<std::string>();
    g.features_.push_back(read_embedding_matrix(dir / name, static_cast<int>(p)).vectors);
    if (g.features_.back().rows() != g.n_) throw DataError("graph feature file '" + name + "' row count mismatch");
  }
  std::string blob = read_text_file(dir / manifest.at("adjacency").get<std::string>());
  if (blob.size() < 20 || std::memcmp(blob.data(), graphfile::kMagic, 4) != 0)
    throw DataError("bad adjacency file in '" + dir.string() + "'");
  std::size_t off = 4;
  if (embfile::get_u32(blob, off) != graphfile::kVersion) throw DataError("unsupported adjacency version");
  if (embfile::get_u32(blob, off) != g.p_ || embfile::get_u32(blob, off) != g.n_)
    throw DataError("adjacency header disagrees with graph manifest");
  off += 4;  // k_effective, already in the manifest
  const std::size_t n_nodes = g.n_ * g.p_;
  for (auto* lists : {&g.in_intra_, &g.in_inter_}) {
    lists->assign(n_nodes, {});
    for (std::size_t v = 0; v < n_nodes; ++v) {
      std::uint32_t count = embfile::get_u32(blob, off);
      (*lists)[v].reserve(count);
      for (std::uint32_t e = 0; e < count; ++e) {
        std::uint32_t src = embfile::get_u32(blob, off);
        if (src >= n_nodes) throw DataError("adjacency references node beyond graph");
        (*lists)[v].push_back(src);
      }
    }
  }
  return g;
}

}  // namespace mier
