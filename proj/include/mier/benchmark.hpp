#pragma once

// Benchmark construction: character q-gram blocking, rule-based intent
// labeling, cross-group negative sampling, split assignment, and a seeded
// synthetic generator with a known entity mapping per intent.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mier/common.hpp"
#include "mier/core.hpp"

namespace mier {

// ASCII lowercase + collapse runs of whitespace to single spaces, trimmed.
// Locale-independent so normalized text is identical across environments.
inline std::string normalize_text(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u == ' ' || u == '\t' || u == '\n' || u == '\r' || u == '\f' || u == '\v') {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (u >= 'A' && u <= 'Z') u = static_cast<unsigned char>(u - 'A' + 'a');
    out.push_back(static_cast<char>(u));
  }
  return out;
}

struct BlockingConfig {
  int q = 4;
  bool normalize = true;  // lowercase + whitespace collapse
  int min_shared = 1;     // distinct shared q-grams required
  bool clean_clean = false;
  std::string field = "title";

  void validate() const {
    if (q < 2) throw ConfigError("blocking q must be >= 2");
    if (min_shared < 1) throw ConfigError("blocking min_shared must be >= 1");
    if (field.empty()) throw ConfigError("blocking field must be set");
  }
};

// Distinct character q-grams of a string; strings shorter than q have none.
inline std::set<std::string> qgrams(const std::string& s, int q) {
  std::set<std::string> out;
  if (static_cast<int>(s.size()) < q) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(q) <= s.size(); ++i)
    out.insert(s.substr(i, static_cast<std::size_t>(q)));
  return out;
}

// All unordered record pairs whose designated fields share at least
// `min_shared` distinct q-grams. Same-source pairs are skipped in clean-clean
// mode; records lacking the field are skipped with a warning.
inline CandidatePairSet block_qgram(const Dataset& records, const BlockingConfig& cfg, Warnings* warnings = nullptr) {
  cfg.validate();
  if (records.size() == 0) throw DataError("block_qgram: empty dataset");
  std::vector<std::set<std::string>> grams(records.size());
  std::vector<bool> usable(records.size(), false);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto* v = records.at(i).field(cfg.field);
    if (v == nullptr || !v->has_value()) {
      if (warnings) warnings->add("blocking-missing-field", "record '" + records.at(i).id + "' lacks field '" + cfg.field + "'");
      continue;
    }
    std::string text = cfg.normalize ? normalize_text(**v) : **v;
    grams[i] = qgrams(text, cfg.q);
    usable[i] = true;
  }
  // Inverted index gram -> records, then count distinct shared grams per pair.
  std::map<std::string, std::vector<std::uint32_t>> buckets;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (usable[i])
      for (const auto& g : grams[i]) buckets[g].push_back(static_cast<std::uint32_t>(i));
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> shared;
  for (const auto& [g, members] : buckets) {
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b) shared[{members[a], members[b]}]++;
  }
  std::vector<CandidatePair> out;
  for (const auto& [idx_pair, count] : shared) {
    if (count < cfg.min_shared) continue;
    const Record& l = records.at(idx_pair.first);
    const Record& r = records.at(idx_pair.second);
    if (cfg.clean_clean && l.source == r.source) continue;
    out.push_back({l.id, r.id});
  }
  return CandidatePairSet(std::move(out));
}

// --- Intent rules ---------------------------------------------------------

enum class RuleKind { EquivalenceList, FieldEquality, JaccardSets, Conjunction };

struct IntentRule {
  RuleKind kind = RuleKind::FieldEquality;
  std::string field;
  double threshold = 0.4;
  char set_delimiter = ',';
  std::vector<IntentRule> children;
  // Canonically ordered (left,right) id pairs for equivalence_list.
  std::set<std::pair<std::string, std::string>> duplicates;

  void validate() const {
    switch (kind) {
      case RuleKind::EquivalenceList:
        break;
      case RuleKind::FieldEquality:
        if (field.empty()) throw ConfigError("field_equality rule needs a field");
        break;
      case RuleKind::JaccardSets:
        if (field.empty()) throw ConfigError("jaccard_sets rule needs a field");
        if (threshold <= 0.0 || threshold > 1.0) throw ConfigError("jaccard threshold must be in (0,1]");
        break;
      case RuleKind::Conjunction:
        if (children.size() < 2) throw ConfigError("conjunction needs at least 2 children");
        for (const auto& c : children) c.validate();
        break;
    }
  }
};

inline std::set<std::string> parse_value_set(const std::string& value, char delimiter) {
  std::set<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == delimiter) {
      std::string t = normalize_text(cur);
      if (!t.empty()) out.insert(t);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  std::string t = normalize_text(cur);
  if (!t.empty()) out.insert(t);
  return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Label one pair. A null attribute never yields a positive; both-null is
// counted as a warning.
inline std::uint8_t label_pair(const CandidatePair& pair, const Dataset& records, const IntentRule& rule,
                               Warnings* warnings) {
  switch (rule.kind) {
    case RuleKind::EquivalenceList: {
      auto key = std::make_pair(std::min(pair.left_id, pair.right_id), std::max(pair.left_id, pair.right_id));
      return rule.duplicates.count(key) ? 1 : 0;
    }
    case RuleKind::FieldEquality:
    case RuleKind::JaccardSets: {
      const auto* lv = records.by_id(pair.left_id).field(rule.field);
      const auto* rv = records.by_id(pair.right_id).field(rule.field);
      if (lv == nullptr || rv == nullptr)
        throw DataError("rule field '" + rule.field + "' missing from record schema");
      if (!lv->has_value() && !rv->has_value()) {
        if (warnings) warnings->add("label-null-pair", "both values of '" + rule.field + "' null for (" + pair.left_id + ", " + pair.right_id + ")");
        return 0;
      }
      if (!lv->has_value() || !rv->has_value()) return 0;
      if (rule.kind == RuleKind::FieldEquality) {
        return normalize_text(**lv) == normalize_text(**rv) ? 1 : 0;
      }
      double j = jaccard(parse_value_set(**lv, rule.set_delimiter), parse_value_set(**rv, rule.set_delimiter));
      return j >= rule.threshold ? 1 : 0;
    }
    case RuleKind::Conjunction: {
      for (const auto& child : rule.children)
        if (!label_pair(pair, records, child, warnings)) return 0;
      return 1;
    }
  }
  return 0;
}

inline std::vector<std::uint8_t> label_intent(const CandidatePairSet& pairs, const Dataset& records,
                                              const IntentRule& rule, Warnings* warnings = nullptr) {
  rule.validate();
  std::vector<std::uint8_t> out(pairs.size(), 0);
  for (PairId id = 0; id < pairs.size(); ++id) out[id] = label_pair(pairs.at(id), records, rule, warnings);
  return out;
}

// --- Cross-group negatives --------------------------------------------------

// Blocks across every pair of groups, pools the cross-group candidates, and
// samples n of them without replacement.
inline CandidatePairSet cross_group_negatives(const std::vector<Dataset>& groups, const BlockingConfig& cfg,
                                              std::size_t n, std::uint64_t seed, Warnings* warnings = nullptr) {
  if (groups.size() < 2) throw DataError("cross_group_negatives needs at least 2 groups");
  std::set<std::pair<std::string, std::string>> pool_set;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      std::vector<Record> merged;
      for (const auto& r : groups[a].records()) {
        Record c = r;
        c.source = "group" + std::to_string(a);
        merged.push_back(std::move(c));
      }
      for (const auto& r : groups[b].records()) {
        Record c = r;
        c.source = "group" + std::to_string(b);
        merged.push_back(std::move(c));
      }
      BlockingConfig cross_cfg = cfg;
      cross_cfg.clean_clean = true;  // keep only cross-group pairs
      CandidatePairSet blocked = block_qgram(Dataset(std::move(merged)), cross_cfg, warnings);
      for (PairId id = 0; id < blocked.size(); ++id) {
        const auto& p = blocked.at(id);
        pool_set.emplace(p.left_id, p.right_id);
      }
    }
  }
  std::vector<std::pair<std::string, std::string>> pool(pool_set.begin(), pool_set.end());
  Rng rng = make_rng(seed);
  std::vector<CandidatePair> out;
  if (pool.size() <= n) {
    if (pool.size() < n && warnings)
      warnings->add("cross-group-pool-short",
                    "requested " + std::to_string(n) + " pairs, pool has " + std::to_string(pool.size()));
    for (const auto& [l, r] : pool) out.push_back({l, r});
  } else {
    for (std::size_t i : sample_without_replacement(rng, pool.size(), n)) out.push_back({pool[i].first, pool[i].second});
  }
  return CandidatePairSet(std::move(out));
}

// --- Splits -----------------------------------------------------------------

// Seeded uniform assignment to train/valid/test. Counts follow the largest
// remainder rule, so each split size is within one of its exact proportion.
inline std::vector<Split> assign_splits(std::size_t n_pairs, const std::vector<double>& ratios, std::uint64_t seed) {
  if (ratios.size() != 3) throw ConfigError("split needs exactly 3 ratios (train, valid, test)");
  double total = 0.0;
  for (double r : ratios) {
    if (r <= 0.0) throw ConfigError("split ratios must be positive");
    total += r;
  }
  std::vector<std::size_t> counts(3, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    double exact = static_cast<double>(n_pairs) * ratios[i] / total;
    counts[i] = static_cast<std::size_t>(exact);
    assigned += counts[i];
    remainders.push_back({exact - static_cast<double>(counts[i]), i});
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t k = 0; assigned < n_pairs; ++k, ++assigned) counts[remainders[k % 3].second]++;

  std::vector<std::size_t> order(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
  Rng rng = make_rng(seed);
  shuffle(order, rng);
  std::vector<Split> out(n_pairs, Split::Train);
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t k = 0; k < counts[s]; ++k) out[order[pos++]] = static_cast<Split>(s);
  return out;
}

// --- Positive-rate profile ----------------------------------------------------

struct PositiveRateReport {
  // [intent][split] -> (positives, total)
  std::vector<std::array<std::pair<std::size_t, std::size_t>, 3>> counts;

  double fraction(std::size_t intent, Split s) const {
    auto [pos, tot] = counts[intent][static_cast<std::size_t>(s)];
    return tot == 0 ? 0.0 : static_cast<double>(pos) / static_cast<double>(tot);
  }
};

inline PositiveRateReport positive_rate_report(const IntentLabelMatrix& labels) {
  PositiveRateReport rep;
  rep.counts.resize(labels.intent_count());
  for (auto& row : rep.counts) row.fill({0, 0});
  for (PairId id = 0; id < labels.pair_count(); ++id) {
    auto s = static_cast<std::size_t>(labels.split(id));
    for (std::size_t p = 0; p < labels.intent_count(); ++p) {
      rep.counts[p][s].second++;
      if (labels.label(id, p)) rep.counts[p][s].first++;
    }
  }
  return rep;
}

// --- Synthetic benchmark -------------------------------------------------------

struct SyntheticBenchmark {
  Dataset records;
  CandidatePairSet pairs;
  IntentLabelMatrix labels;
  std::vector<IntentSpec> intents;
  EntityMapping mapping;
};

namespace synth_detail {

inline const std::vector<std::string>& brand_vocab() {
  static const std::vector<std::string> v = {"aurelia", "borealis", "cascade", "dynamo",
                                             "everest", "falcon",   "granite", "horizon"};
  return v;
}
inline const std::vector<std::string>& cat_vocab() {
  static const std::vector<std::string> v = {"audio", "optics", "footwear", "kitchen", "garden"};
  return v;
}
inline const std::vector<std::vector<std::string>>& subcat_vocab() {
  static const std::vector<std::vector<std::string>> v = {
      {"speaker", "headphone", "amplifier", "turntable"},
      {"binocular", "telescope", "microscope", "rangefinder"},
      {"sneaker", "sandal", "trailboot", "slipper"},
      {"blender", "skillet", "kettle", "grinder"},
      {"trimmer", "sprinkler", "pruner", "wheelbarrow"}};
  return v;
}
inline const std::vector<std::string>& series_vocab() {
  static const std::vector<std::string> v = {"alpha", "nova",  "prime", "vertex", "zenith", "omega",
                                             "pulse", "quartz", "titan", "ember",  "frost",  "drift"};
  return v;
}
inline const std::vector<std::string>& qualifier_vocab() {
  static const std::vector<std::string> v = {"black",    "white",    "crimson", "azure",   "compact",
                                             "deluxe",   "portable", "wireless", "classic", "heavyduty"};
  return v;
}
inline const std::vector<std::string>& extra_vocab() {
  static const std::vector<std::string> v = {"northline", "southway", "eastpeak", "westfield", "deltacore", "sigmatec"};
  return v;
}
// Model codes and variants come from closed vocabularies that repeat across
// entities; identity is the full token combination. Reused tokens keep the
// test split inside the training vocabulary.
inline const std::vector<std::string>& code_vocab() {
  static const std::vector<std::string> v = []() {
    std::vector<std::string> out;
    const char* stems[] = {"mk", "zx", "qr", "tv", "bl", "gn"};
    for (const char* stem : stems)
      for (int i = 0; i < 4; ++i) out.push_back(std::string(stem) + std::to_string(410 + 31 * i));
    return out;
  }();
  return v;
}
inline const std::vector<std::string>& variant_vocab() {
  static const std::vector<std::string> v = {"mark",  "elite", "sport", "studio", "core",
                                             "fusion", "plus",  "ultra", "basic",  "edge"};
  return v;
}

struct Entity {
  std::size_t brand, cat, subcat, series, code, variant, qualifier;
  std::vector<std::size_t> extras;  // one per extra attribute when P > 4
};

inline std::string apply_typo(const std::string& token, Rng& rng) {
  if (token.size() < 3) return token;
  std::string t = token;
  std::size_t pos = 1 + static_cast<std::size_t>(rand_below(rng, t.size() - 2));
  switch (rand_below(rng, 3)) {
    case 0: std::swap(t[pos], t[pos - 1]); break;
    case 1: t.erase(pos, 1); break;
    default: t.insert(pos, 1, t[pos]); break;
  }
  return t;
}

inline std::string apply_casing(const std::string& token, Rng& rng) {
  std::uint64_t roll = rand_below(rng, 10);
  std::string t = token;
  if (roll < 2) {
    for (auto& c : t) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  } else if (roll < 4) {
    t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
  }
  return t;
}

}  // namespace synth_detail

// Intent layout of the generated benchmark:
//   0: equivalence (same hidden entity)
//   1: conjunction of brand and category equality     (only when P >= 3)
//   2..: attribute equality on brand, category, extra attributes in order
// The layout guarantees the subsumption chain equivalence < conjunction <
// each conjunct on the emitted labels.
inline SyntheticBenchmark generate_synthetic(std::size_t n_records, std::size_t p_intents, std::uint64_t seed,
                                             Warnings* warnings = nullptr) {
  using namespace synth_detail;
  if (p_intents < 2) throw ConfigError("generate_synthetic requires P >= 2");
  if (n_records < 8) throw ConfigError("generate_synthetic requires at least 8 records");
  const std::size_t n_extra_attrs = p_intents > 4 ? p_intents - 4 : 0;
  if (n_extra_attrs > 4) throw ConfigError("generate_synthetic supports at most P = 8 intents");

  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    Rng rng = make_rng(derive_seed(seed, attempt));

    // Entities with hidden attributes; entity multiplicity drives duplicates.
    // The attribute tuple is unique per entity, so equality of every token
    // slot is exactly entity identity.
    std::vector<Entity> entities;
    std::vector<std::size_t> record_entity;
    std::set<std::vector<std::size_t>> used_tuples;
    std::map<std::size_t, std::size_t> twin_of;
    while (record_entity.size() < n_records) {
      Entity e;
      for (int tries = 0;; ++tries) {
        if (tries > 1000) throw DataError("generate_synthetic: entity space exhausted; reduce n_records");
        e.brand = rand_below(rng, brand_vocab().size());
        e.cat = rand_below(rng, cat_vocab().size());
        e.subcat = rand_below(rng, subcat_vocab()[e.cat].size());
        e.series = rand_below(rng, series_vocab().size());
        e.code = rand_below(rng, code_vocab().size());
        e.variant = rand_below(rng, variant_vocab().size());
        e.qualifier = rand_below(rng, qualifier_vocab().size());
        e.extras.clear();
        for (std::size_t j = 0; j < n_extra_attrs; ++j) e.extras.push_back(rand_below(rng, extra_vocab().size()));
        std::vector<std::size_t> tuple = {e.brand, e.cat, e.subcat, e.series, e.code, e.variant};
        tuple.insert(tuple.end(), e.extras.begin(), e.extras.end());
        if (used_tuples.insert(tuple).second) break;
      }
      std::size_t idx = entities.size();
      entities.push_back(e);
      std::uint64_t roll = rand_below(rng, 100);
      std::size_t multiplicity = roll < 20 ? 1 : roll < 55 ? 2 : roll < 85 ? 3 : 4;
      for (std::size_t m = 0; m < multiplicity && record_entity.size() < n_records; ++m) record_entity.push_back(idx);
      // Occasionally spawn a cross-brand twin: an entity identical in every
      // slot except the brand. Twin pairs look like duplicates but are
      // negatives whose brand intent holds the veto.
      if (rand_below(rng, 100) < 12 && record_entity.size() < n_records) {
        Entity twin = e;
        twin.brand = (e.brand + 1 + rand_below(rng, brand_vocab().size() - 1)) % brand_vocab().size();
        std::vector<std::size_t> tuple = {twin.brand, twin.cat, twin.subcat, twin.series, twin.code, twin.variant};
        tuple.insert(tuple.end(), twin.extras.begin(), twin.extras.end());
        if (used_tuples.insert(tuple).second) {
          std::size_t twin_idx = entities.size();
          entities.push_back(twin);
          twin_of[idx] = twin_idx;
          std::size_t twin_mult = 1 + rand_below(rng, 2);
          for (std::size_t m = 0; m < twin_mult && record_entity.size() < n_records; ++m)
            record_entity.push_back(twin_idx);
        }
      }
    }

    // Records: noisy titles over the entity tokens.
    std::vector<Record> records;
    for (std::size_t i = 0; i < n_records; ++i) {
      const Entity& e = entities[record_entity[i]];
      // Constant token count per title keeps pair-text lengths stable, so the
      // normalized gram magnitudes are comparable across pairs.
      std::vector<std::string> tokens = {brand_vocab()[e.brand], series_vocab()[e.series], code_vocab()[e.code],
                                         variant_vocab()[e.variant], subcat_vocab()[e.cat][e.subcat],
                                         cat_vocab()[e.cat]};
      for (std::size_t j = 0; j < n_extra_attrs; ++j) tokens.push_back(extra_vocab()[e.extras[j]]);
      // Qualifier follows the entity but is occasionally restated per listing.
      tokens.push_back(qualifier_vocab()[rand_below(rng, 100) < 80
                                             ? e.qualifier
                                             : rand_below(rng, qualifier_vocab().size())]);
      // One typo on a non-identifying token; rarely, on the model code.
      if (rand_below(rng, 100) < 6) {
        std::size_t t = 1 + rand_below(rng, tokens.size() - 1);
        if (t != 2) tokens[t] = apply_typo(tokens[t], rng);
      }
      if (rand_below(rng, 100) < 2) tokens[2] = apply_typo(tokens[2], rng);
      if (tokens.size() >= 2 && rand_below(rng, 100) < 6) {
        std::size_t t = rand_below(rng, tokens.size() - 1);
        std::swap(tokens[t], tokens[t + 1]);
      }
      std::string title;
      for (auto& tok : tokens) {
        if (!title.empty()) title.push_back(' ');
        title += apply_casing(tok, rng);
      }
      Record rec;
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "r%05zu", i);
      rec.id = idbuf;
      rec.fields.emplace_back("title", title);
      records.push_back(std::move(rec));
    }
    Dataset dataset(records);

    // Candidate pairs: block on titles, keep every same-entity pair, then fill
    // a quota with stratified non-matching pairs so positive rates stay stable
    // across seeds.
    BlockingConfig bcfg;
    CandidatePairSet blocked = block_qgram(dataset, bcfg, warnings);
    auto entity_of = [&](const std::string& id) { return record_entity[dataset.index_of(id)]; };
    auto is_twin_pair = [&](std::size_t ea, std::size_t eb) {
      auto it = twin_of.find(ea);
      if (it != twin_of.end() && it->second == eb) return true;
      it = twin_of.find(eb);
      return it != twin_of.end() && it->second == ea;
    };
    std::vector<CandidatePair> kept;
    std::vector<std::vector<std::size_t>> pools(4);  // 0: brand+cat, 1: brand only, 2: cat only, 3: neither
    for (PairId id = 0; id < blocked.size(); ++id) {
      const auto& p = blocked.at(id);
      std::size_t ea = entity_of(p.left_id), eb = entity_of(p.right_id);
      const Entity& le = entities[ea];
      const Entity& re = entities[eb];
      if (ea == eb || is_twin_pair(ea, eb)) {
        kept.push_back(p);  // duplicates and their cross-brand twins always stay
        continue;
      }
      bool sb = le.brand == re.brand, sc = le.cat == re.cat;
      pools[sb && sc ? 0 : sb ? 1 : sc ? 2 : 3].push_back(id);
    }
    const std::size_t target_total = 5 * n_records;
    const double quota_frac[4] = {0.30, 0.25, 0.20, 0.25};
    std::size_t remaining = target_total > kept.size() ? target_total - kept.size() : 0;
    std::vector<std::size_t> leftovers;
    for (std::size_t pool_idx = 0; pool_idx < 4; ++pool_idx) {
      std::size_t want = static_cast<std::size_t>(quota_frac[pool_idx] * static_cast<double>(remaining));
      auto& pool = pools[pool_idx];
      if (pool.size() <= want) {
        for (std::size_t id : pool) kept.push_back(blocked.at(static_cast<PairId>(id)));
      } else {
        auto chosen = sample_without_replacement(rng, pool.size(), want);
        std::vector<bool> taken(pool.size(), false);
        for (std::size_t c : chosen) {
          kept.push_back(blocked.at(static_cast<PairId>(pool[c])));
          taken[c] = true;
        }
        for (std::size_t c = 0; c < pool.size(); ++c)
          if (!taken[c]) leftovers.push_back(pool[c]);
      }
    }
    if (kept.size() < target_total && !leftovers.empty()) {
      std::size_t want = std::min(target_total - kept.size(), leftovers.size());
      std::sort(leftovers.begin(), leftovers.end());
      for (std::size_t c : sample_without_replacement(rng, leftovers.size(), want))
        kept.push_back(blocked.at(static_cast<PairId>(leftovers[c])));
    }
    CandidatePairSet pairs(std::move(kept));

    // Intent specs and per-intent entity mappings over hidden attributes.
    std::vector<IntentSpec> intents;
    EntityMapping mapping;
    auto add_intent = [&](const std::string& name, std::vector<int> subsumed_by,
                          const std::function<std::int64_t(const Entity&, std::size_t)>& key) {
      IntentSpec spec;
      spec.intent_id = static_cast<int>(intents.size());
      spec.name = name;
      spec.subsumed_by = std::move(subsumed_by);
      intents.push_back(spec);
      std::unordered_map<std::string, std::int64_t> m;
      for (std::size_t i = 0; i < dataset.size(); ++i)
        m[dataset.at(i).id] = key(entities[record_entity[i]], record_entity[i]);
      mapping.by_intent.push_back(std::move(m));
    };
    std::vector<int> eq_supers;
    for (std::size_t p = 1; p < p_intents; ++p) eq_supers.push_back(static_cast<int>(p));
    add_intent("equivalence", eq_supers, [](const Entity&, std::size_t ent) { return static_cast<std::int64_t>(ent); });
    if (p_intents >= 3) {
      std::vector<int> conj_supers;
      for (std::size_t p = 2; p < p_intents && p < 4; ++p) conj_supers.push_back(static_cast<int>(p));
      add_intent("brand_and_category", conj_supers, [](const Entity& e, std::size_t) {
        return static_cast<std::int64_t>(e.brand * 100 + e.cat);
      });
    }
    if (intents.size() < p_intents)
      add_intent("brand", {}, [](const Entity& e, std::size_t) { return static_cast<std::int64_t>(e.brand); });
    if (intents.size() < p_intents)
      add_intent("category", {}, [](const Entity& e, std::size_t) { return static_cast<std::int64_t>(e.cat); });
    for (std::size_t j = 0; intents.size() < p_intents; ++j)
      add_intent("region" + std::to_string(j), {}, [j](const Entity& e, std::size_t) {
        return static_cast<std::int64_t>(e.extras[j]);
      });
    validate_intent_specs(intents);

    // Labels from the mappings; split 3:1:1.
    IntentLabelMatrix labels(pairs.size(), p_intents);
    for (PairId id = 0; id < pairs.size(); ++id) {
      const auto& p = pairs.at(id);
      for (std::size_t intent = 0; intent < p_intents; ++intent) {
        bool same = mapping.entity_of(intent, p.left_id) == mapping.entity_of(intent, p.right_id);
        labels.set_label(id, intent, same ? 1 : 0);
      }
    }
    auto splits = assign_splits(pairs.size(), {3, 1, 1}, derive_seed(seed, 1000 + attempt));
    for (PairId id = 0; id < pairs.size(); ++id) labels.set_split(id, splits[id]);

    // Every intent needs both classes in train and valid, or matcher training
    // is undefined; retry with a derived seed otherwise.
    bool ok = true;
    for (std::size_t intent = 0; intent < p_intents && ok; ++intent) {
      for (Split s : {Split::Train, Split::Valid}) {
        std::size_t pos = 0, tot = 0;
        for (PairId id = 0; id < pairs.size(); ++id) {
          if (labels.split(id) != s) continue;
          tot++;
          pos += labels.label(id, intent);
        }
        if (pos == 0 || pos == tot) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) {
      if (warnings) warnings->add("synthetic-retry", "degenerate split on attempt " + std::to_string(attempt));
      continue;
    }
    return SyntheticBenchmark{std::move(dataset), std::move(pairs), std::move(labels), std::move(intents),
                              std::move(mapping)};
  }
  throw DataError("generate_synthetic: could not produce non-degenerate labels; increase n_records");
}

}  // namespace mier
