#pragma once

// Domain model for multi-intent entity resolution: records, candidate pairs,
// intents, label matrices, resolutions, and the formal checks relating them
// (resolution satisfaction, overlap, subsumption, clean views).

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mier/common.hpp"

namespace mier {

struct Record {
  std::string id;
  std::string source;  // tag for clean-clean settings; empty for dirty datasets
  // Ordered attribute -> nullable value. Order is preserved because pair
  // serialization depends on it.
  std::vector<std::pair<std::string, std::optional<std::string>>> fields;

  const std::optional<std::string>* field(const std::string& name) const {
    for (const auto& [k, v] : fields)
      if (k == name) return &v;
    return nullptr;
  }
  bool has_non_null_field() const {
    for (const auto& [k, v] : fields)
      if (v.has_value()) return true;
    return false;
  }
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Record> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const Record& r = records_[i];
      if (r.id.empty()) throw DataError("record with empty id");
      if (!r.has_non_null_field()) throw DataError("record '" + r.id + "' has no non-null field");
      if (!index_.emplace(r.id, i).second) throw DataError("duplicate record id '" + r.id + "'");
    }
  }

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  const Record& at(std::size_t i) const { return records_[i]; }

  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw DataError("unknown record id '" + id + "'");
    return it->second;
  }
  const Record& by_id(const std::string& id) const { return records_[index_of(id)]; }

 private:
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

using PairId = std::uint32_t;

struct CandidatePair {
  std::string left_id;
  std::string right_id;
};

// The blocked pair universe C. Pairs are stored in canonical order
// (left < right lexicographically, set sorted) and pair_id is the position,
// so label files, embedding rows, and graph nodes stay aligned by index.
class CandidatePairSet {
 public:
  CandidatePairSet() = default;
  CandidatePairSet(std::initializer_list<CandidatePair> pairs)
      : CandidatePairSet(std::vector<CandidatePair>(pairs)) {}
  explicit CandidatePairSet(std::vector<CandidatePair> pairs) {
    for (auto& p : pairs) {
      if (p.left_id == p.right_id) throw DataError("self-pair for record '" + p.left_id + "'");
      if (p.right_id < p.left_id) std::swap(p.left_id, p.right_id);
    }
    std::sort(pairs.begin(), pairs.end(), [](const CandidatePair& a, const CandidatePair& b) {
      return a.left_id != b.left_id ? a.left_id < b.left_id : a.right_id < b.right_id;
    });
    auto dup = std::adjacent_find(pairs.begin(), pairs.end(), [](const CandidatePair& a, const CandidatePair& b) {
      return a.left_id == b.left_id && a.right_id == b.right_id;
    });
    if (dup != pairs.end()) throw DataError("duplicate candidate pair (" + dup->left_id + ", " + dup->right_id + ")");
    pairs_ = std::move(pairs);
  }

  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const CandidatePair& at(PairId id) const { return pairs_[id]; }
  const std::vector<CandidatePair>& pairs() const { return pairs_; }

 private:
  std::vector<CandidatePair> pairs_;
};

struct IntentSpec {
  int intent_id = 0;
  std::string name;
  std::vector<int> subsumed_by;  // ids of intents whose positives contain this intent's
};

// Validates 0..P-1 numbering and acyclic, self-free subsumed_by declarations.
inline void validate_intent_specs(const std::vector<IntentSpec>& specs) {
  const int p_count = static_cast<int>(specs.size());
  for (int i = 0; i < p_count; ++i) {
    if (specs[static_cast<std::size_t>(i)].intent_id != i)
      throw DataError("intent ids must be 0..P-1 in order; got " +
                      std::to_string(specs[static_cast<std::size_t>(i)].intent_id) + " at position " +
                      std::to_string(i));
    for (int s : specs[static_cast<std::size_t>(i)].subsumed_by) {
      if (s == i) throw DataError("intent " + std::to_string(i) + " declared subsumed by itself");
      if (s < 0 || s >= p_count) throw DataError("intent " + std::to_string(i) + " subsumed by unknown intent " + std::to_string(s));
    }
  }
  // Cycle check over the declared subsumption edges.
  std::vector<int> state(specs.size(), 0);
  std::function<void(int)> visit = [&](int u) {
    state[static_cast<std::size_t>(u)] = 1;
    for (int v : specs[static_cast<std::size_t>(u)].subsumed_by) {
      if (state[static_cast<std::size_t>(v)] == 1) throw DataError("cycle in declared intent subsumption");
      if (state[static_cast<std::size_t>(v)] == 0) visit(v);
    }
    state[static_cast<std::size_t>(u)] = 2;
  };
  for (int i = 0; i < p_count; ++i)
    if (state[static_cast<std::size_t>(i)] == 0) visit(i);
}

enum class Split : std::uint8_t { Train = 0, Valid = 1, Test = 2 };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw DataError("unknown split tag '" + s + "'");
}

// Per-pair binary labels for P intents plus a split tag, aligned to pair_id.
class IntentLabelMatrix {
 public:
  IntentLabelMatrix() = default;
  IntentLabelMatrix(std::size_t n_pairs, std::size_t n_intents)
      : n_(n_pairs), p_(n_intents), labels_(n_pairs * n_intents, 0), splits_(n_pairs, Split::Train) {}

  std::size_t pair_count() const { return n_; }
  std::size_t intent_count() const { return p_; }

  std::uint8_t label(PairId pair, std::size_t intent) const { return labels_[pair * p_ + intent]; }
  void set_label(PairId pair, std::size_t intent, std::uint8_t v) {
    if (v > 1) throw DataError("labels must be 0/1");
    labels_[pair * p_ + intent] = v;
  }
  Split split(PairId pair) const { return splits_[pair]; }
  void set_split(PairId pair, Split s) { splits_[pair] = s; }

  std::vector<std::uint8_t> intent_column(std::size_t intent) const {
    std::vector<std::uint8_t> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = labels_[i * p_ + intent];
    return out;
  }
  std::vector<PairId> pairs_in_split(Split s) const {
    std::vector<PairId> out;
    for (std::size_t i = 0; i < n_; ++i)
      if (splits_[i] == s) out.push_back(static_cast<PairId>(i));
    return out;
  }

 private:
  std::size_t n_ = 0, p_ = 0;
  std::vector<std::uint8_t> labels_;
  std::vector<Split> splits_;
};

// The set of pairs declared matching under one intent.
struct Resolution {
  int intent_id = 0;
  std::vector<PairId> matched;  // sorted, unique

  void canonicalize() {
    std::sort(matched.begin(), matched.end());
    matched.erase(std::unique(matched.begin(), matched.end()), matched.end());
  }
  bool contains(PairId id) const { return std::binary_search(matched.begin(), matched.end(), id); }

  static Resolution from_labels(const IntentLabelMatrix& labels, std::size_t intent) {
    Resolution r;
    r.intent_id = static_cast<int>(intent);
    for (std::size_t i = 0; i < labels.pair_count(); ++i)
      if (labels.label(static_cast<PairId>(i), intent)) r.matched.push_back(static_cast<PairId>(i));
    return r;
  }
};

// Ground-truth record -> entity assignment per intent. Only synthetic
// generators and oracle checks use it; real benchmarks expose labels only.
struct EntityMapping {
  // by_intent[p] maps record id to an opaque entity id.
  std::vector<std::unordered_map<std::string, std::int64_t>> by_intent;

  std::int64_t entity_of(std::size_t intent, const std::string& record_id) const {
    const auto& m = by_intent.at(intent);
    auto it = m.find(record_id);
    if (it == m.end()) throw DataError("unknown record id '" + record_id + "' in entity mapping");
    return it->second;
  }
};

// Resolution satisfaction: matched membership must coincide with entity
// equality under the mapping for every candidate pair.
inline bool resolution_satisfies(const Resolution& res, const EntityMapping& mapping, const CandidatePairSet& pairs) {
  const auto intent = static_cast<std::size_t>(res.intent_id);
  if (intent >= mapping.by_intent.size()) throw DataError("entity mapping has no intent " + std::to_string(res.intent_id));
  for (PairId id = 0; id < pairs.size(); ++id) {
    const CandidatePair& cp = pairs.at(id);
    bool same = mapping.entity_of(intent, cp.left_id) == mapping.entity_of(intent, cp.right_id);
    if (same != res.contains(id)) return false;
  }
  return true;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) rank_[a]++;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

// Clean view: connected components of the match graph, one representative per
// component. Representative is the minimum record id; output sorted.
inline std::vector<std::string> derive_clean_view(const Resolution& res, const Dataset& records,
                                                  const CandidatePairSet& pairs) {
  UnionFind uf(records.size());
  for (PairId id : res.matched) {
    if (id >= pairs.size()) throw DataError("resolution references pair_id " + std::to_string(id) + " outside the candidate set");
    const CandidatePair& cp = pairs.at(id);
    uf.unite(records.index_of(cp.left_id), records.index_of(cp.right_id));
  }
  std::unordered_map<std::size_t, std::string> rep;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::size_t root = uf.find(i);
    auto it = rep.find(root);
    if (it == rep.end() || records.at(i).id < it->second) rep[root] = records.at(i).id;
  }
  std::vector<std::string> out;
  out.reserve(rep.size());
  for (const auto& [root, id] : rep) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

// Overlapping intents: some pair is positive under both.
inline bool detect_overlap(const IntentLabelMatrix& labels, std::size_t p, std::size_t q) {
  if (p == q) throw DataError("detect_overlap requires two distinct intents");
  for (std::size_t i = 0; i < labels.pair_count(); ++i)
    if (labels.label(static_cast<PairId>(i), p) && labels.label(static_cast<PairId>(i), q)) return true;
  return false;
}

// Subsumption: q is a sub-intent of p iff no pair is negative under p while
// positive under q.
inline bool detect_subsumption(const IntentLabelMatrix& labels, std::size_t p, std::size_t q) {
  if (p == q) throw DataError("detect_subsumption requires two distinct intents");
  for (std::size_t i = 0; i < labels.pair_count(); ++i)
    if (!labels.label(static_cast<PairId>(i), p) && labels.label(static_cast<PairId>(i), q)) return false;
  return true;
}

// Intents whose positives contain intent q's positives, from training labels.
// Declared subsumption (IntentSpec) may disagree with detection; detection
// wins and the caller is warned.
inline std::vector<int> supersuming_intents(const IntentLabelMatrix& labels, std::size_t q,
                                            const std::vector<IntentSpec>* declared = nullptr,
                                            Warnings* warnings = nullptr) {
  std::vector<int> detected;
  for (std::size_t p = 0; p < labels.intent_count(); ++p)
    if (p != q && detect_subsumption(labels, p, q)) detected.push_back(static_cast<int>(p));
  if (declared != nullptr && q < declared->size()) {
    std::vector<int> decl = (*declared)[q].subsumed_by;
    std::sort(decl.begin(), decl.end());
    if (decl != detected && warnings != nullptr)
      warnings->add("subsumption-mismatch",
                    "intent " + std::to_string(q) + ": declared supersuming set disagrees with detection; using detection");
  }
  return detected;
}

}  // namespace mier
