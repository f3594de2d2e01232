#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>

#include "mier/benchmark.hpp"
#include "mier/common.hpp"
#include "mier/core.hpp"

using namespace mier;

namespace {

Record make_record(const std::string& id, const std::string& title, const std::string& source = "") {
  Record r;
  r.id = id;
  r.source = source;
  r.fields.emplace_back("title", title);
  return r;
}

// Independent gram extraction for the blocking oracle.
std::set<std::string> oracle_grams(std::string s, int q) {
  std::string norm;
  bool space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n') {
      space = !norm.empty();
      continue;
    }
    if (space) norm += ' ';
    space = false;
    norm += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  }
  std::set<std::string> grams;
  for (int i = 0; i + q <= static_cast<int>(norm.size()); ++i) grams.insert(norm.substr(i, q));
  return grams;
}

std::string random_title(Rng& rng) {
  static const char* words[] = {"nike", "adidas", "shoe", "air", "max", "force", "running",
                                "basket", "pro", "lite", "trail", "urban", "retro", "flex"};
  std::size_t n = 2 + rand_below(rng, 4);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += " ";
    out += words[rand_below(rng, std::size(words))];
  }
  return out;
}

}  // namespace

TEST_CASE("blocking keeps pairs sharing a q-gram and drops short strings", "[benchmark]") {
  BlockingConfig cfg;
  SECTION("shared 4-gram from a shared token") {
    Dataset ds({make_record("a", "nike air"), make_record("b", "nike max")});
    CandidatePairSet pairs = block_qgram(ds, cfg);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs.at(0).left_id == "a");
  }
  SECTION("strings shorter than q have no grams at all") {
    Dataset ds({make_record("a", "abc"), make_record("b", "abc")});
    CHECK(block_qgram(ds, cfg).size() == 0);
  }
  SECTION("clean-clean skips same-source pairs") {
    Dataset ds({make_record("a", "nike air", "s1"), make_record("b", "nike max", "s1"),
                make_record("c", "nike pro", "s2")});
    BlockingConfig cc = cfg;
    cc.clean_clean = true;
    CandidatePairSet pairs = block_qgram(ds, cc);
    REQUIRE(pairs.size() == 2);
    for (PairId id = 0; id < pairs.size(); ++id)
      CHECK(ds.by_id(pairs.at(id).left_id).source != ds.by_id(pairs.at(id).right_id).source);
  }
  SECTION("records missing the field are skipped with a warning") {
    Record null_title;
    null_title.id = "n";
    null_title.fields.emplace_back("title", std::nullopt);
    null_title.fields.emplace_back("other", "x");
    Dataset ds({make_record("a", "nike air"), make_record("b", "nike max"), null_title});
    Warnings w;
    CandidatePairSet pairs = block_qgram(ds, cfg, &w);
    CHECK(pairs.size() == 1);
    CHECK(w.count("blocking-missing-field") == 1);
  }
}

TEST_CASE("blocking equals the quadratic oracle on random titles", "[benchmark]") {
  Rng rng = make_rng(2024);
  std::vector<Record> recs;
  for (int i = 0; i < 50; ++i) recs.push_back(make_record("r" + std::to_string(100 + i), random_title(rng)));
  Dataset ds(recs);
  for (int min_shared : {1, 3}) {
    BlockingConfig cfg;
    cfg.min_shared = min_shared;
    CandidatePairSet got = block_qgram(ds, cfg);
    std::set<std::pair<std::string, std::string>> expect;
    for (std::size_t i = 0; i < recs.size(); ++i)
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        auto gi = oracle_grams(*ds.at(i).field("title")->operator->(), cfg.q);
        auto gj = oracle_grams(*ds.at(j).field("title")->operator->(), cfg.q);
        std::size_t shared = 0;
        for (const auto& g : gi) shared += gj.count(g);
        if (shared >= static_cast<std::size_t>(min_shared))
          expect.emplace(std::min(ds.at(i).id, ds.at(j).id), std::max(ds.at(i).id, ds.at(j).id));
      }
    std::set<std::pair<std::string, std::string>> got_set;
    for (PairId id = 0; id < got.size(); ++id) got_set.emplace(got.at(id).left_id, got.at(id).right_id);
    CHECK(got_set == expect);
  }
}

TEST_CASE("intent rules label pairs as stated", "[benchmark]") {
  Record a, b, c;
  a.id = "a";
  a.fields.emplace_back("cats", "a, b, c");
  a.fields.emplace_back("brand", "Nike");
  b.id = "b";
  b.fields.emplace_back("cats", "b, c, d");
  b.fields.emplace_back("brand", "nike ");
  c.id = "c";
  c.fields.emplace_back("cats", std::nullopt);
  c.fields.emplace_back("brand", std::nullopt);
  c.fields.emplace_back("title", "placeholder");
  Dataset ds({a, b, c});
  CandidatePairSet pairs({{"a", "b"}, {"a", "c"}, {"b", "c"}});

  SECTION("jaccard threshold at 0.4") {
    IntentRule rule;
    rule.kind = RuleKind::JaccardSets;
    rule.field = "cats";
    rule.threshold = 0.4;
    auto labels = label_intent(pairs, ds, rule);
    CHECK(labels[0] == 1);  // J({a,b,c},{b,c,d}) = 0.5
    CHECK(labels[1] == 0);  // null side
    Record x = a, y = b;
    x.fields[0].second = "a";
    y.fields[0].second = "b";
    Dataset two({x, y});
    CandidatePairSet one({{"a", "b"}});
    CHECK(label_intent(one, two, rule)[0] == 0);  // J({a},{b}) = 0
  }
  SECTION("field equality normalizes case and whitespace; nulls never match") {
    IntentRule rule;
    rule.kind = RuleKind::FieldEquality;
    rule.field = "brand";
    Warnings w;
    auto labels = label_intent(pairs, ds, rule, &w);
    CHECK(labels[0] == 1);  // "Nike" vs "nike "
    CHECK(labels[1] == 0);
    CHECK(labels[2] == 0);
    CHECK(w.count("label-null-pair") == 0);  // only one side null in these pairs
  }
  SECTION("both-null pairs warn and label 0") {
    Record n1 = c, n2 = c;
    n1.id = "x";
    n2.id = "y";
    n1.fields.emplace_back("title", "t");
    n2.fields.emplace_back("title", "t");
    Dataset ds2({n1, n2});
    CandidatePairSet one({{"x", "y"}});
    IntentRule rule;
    rule.kind = RuleKind::FieldEquality;
    rule.field = "brand";
    Warnings w;
    CHECK(label_intent(one, ds2, rule, &w)[0] == 0);
    CHECK(w.count("label-null-pair") == 1);
  }
  SECTION("equivalence list membership in canonical order") {
    IntentRule rule;
    rule.kind = RuleKind::EquivalenceList;
    rule.duplicates = {{"a", "b"}};
    auto labels = label_intent(pairs, ds, rule);
    CHECK(labels[0] == 1);
    CHECK(labels[1] == 0);
  }
}

TEST_CASE("conjunction labels are the pointwise AND of the children", "[benchmark]") {
  Rng rng = make_rng(5);
  std::vector<Record> recs;
  for (int i = 0; i < 30; ++i) {
    Record r = make_record("r" + std::to_string(10 + i), random_title(rng));
    r.fields.emplace_back("main", std::string(1, static_cast<char>('a' + rand_below(rng, 3))));
    r.fields.emplace_back("cats", std::string(1, static_cast<char>('a' + rand_below(rng, 2))) + ", " +
                                      std::string(1, static_cast<char>('c' + rand_below(rng, 3))));
    recs.push_back(r);
  }
  Dataset ds(recs);
  std::vector<CandidatePair> raw;
  for (std::size_t i = 0; i < recs.size(); ++i)
    for (std::size_t j = i + 1; j < recs.size(); ++j) raw.push_back({recs[i].id, recs[j].id});
  CandidatePairSet pairs(raw);

  IntentRule main_eq;
  main_eq.kind = RuleKind::FieldEquality;
  main_eq.field = "main";
  IntentRule cats_j;
  cats_j.kind = RuleKind::JaccardSets;
  cats_j.field = "cats";
  cats_j.threshold = 0.4;
  IntentRule conj;
  conj.kind = RuleKind::Conjunction;
  conj.children = {main_eq, cats_j};

  auto l_main = label_intent(pairs, ds, main_eq);
  auto l_cats = label_intent(pairs, ds, cats_j);
  auto l_conj = label_intent(pairs, ds, conj);
  for (PairId id = 0; id < pairs.size(); ++id)
    CHECK(l_conj[id] == (l_main[id] & l_cats[id]));
  IntentRule bad;
  bad.kind = RuleKind::Conjunction;
  bad.children = {main_eq};
  CHECK_THROWS_AS(label_intent(pairs, ds, bad), ConfigError);
}

TEST_CASE("cross-group negatives block across groups and sample deterministically", "[benchmark]") {
  std::vector<Dataset> groups;
  groups.push_back(Dataset({make_record("g0a", "lemon kettle pro"), make_record("g0b", "lemon skillet max")}));
  groups.push_back(Dataset({make_record("g1a", "lemon kettle lite"), make_record("g1b", "stone grinder")}));
  BlockingConfig cfg;
  Warnings w;
  CandidatePairSet all = cross_group_negatives(groups, cfg, 100, 9, &w);
  CHECK(w.count("cross-group-pool-short") == 1);
  for (PairId id = 0; id < all.size(); ++id) {
    bool left_g0 = all.at(id).left_id.rfind("g0", 0) == 0;
    bool right_g0 = all.at(id).right_id.rfind("g0", 0) == 0;
    CHECK(left_g0 != right_g0);
  }
  CandidatePairSet s1 = cross_group_negatives(groups, cfg, 2, 9);
  CandidatePairSet s2 = cross_group_negatives(groups, cfg, 2, 9);
  REQUIRE(s1.size() == 2);
  for (PairId id = 0; id < s1.size(); ++id) {
    CHECK(s1.at(id).left_id == s2.at(id).left_id);
    CHECK(s1.at(id).right_id == s2.at(id).right_id);
  }
}

TEST_CASE("splits partition with sizes within one of exact proportions", "[benchmark]") {
  for (std::size_t n : {7, 100, 2001}) {
    auto splits = assign_splits(n, {3, 1, 1}, 4);
    REQUIRE(splits.size() == n);
    std::size_t counts[3] = {0, 0, 0};
    for (Split s : splits) counts[static_cast<std::size_t>(s)]++;
    CHECK(counts[0] + counts[1] + counts[2] == n);
    double exact[3] = {n * 0.6, n * 0.2, n * 0.2};
    for (int s = 0; s < 3; ++s) CHECK(std::abs(static_cast<double>(counts[s]) - exact[s]) <= 1.0);
    CHECK(assign_splits(n, {3, 1, 1}, 4) == splits);       // same seed, same bytes
    CHECK(assign_splits(n, {3, 1, 1}, 5) != splits);       // different seed
  }
  CHECK_THROWS_AS(assign_splits(10, {1, 1}, 0), ConfigError);
  CHECK_THROWS_AS(assign_splits(10, {1, -1, 1}, 0), ConfigError);
}

TEST_CASE("positive rate report on stated cases", "[benchmark]") {
  IntentLabelMatrix all_zero(10, 2);
  PositiveRateReport rep = positive_rate_report(all_zero);
  for (std::size_t p = 0; p < 2; ++p)
    for (Split s : {Split::Train, Split::Valid, Split::Test}) CHECK(rep.fraction(p, s) == 0.0);

  IntentLabelMatrix m(20, 1);
  for (PairId id = 0; id < 3; ++id) m.set_label(id, 0, 1);
  rep = positive_rate_report(m);
  CHECK(rep.fraction(0, Split::Train) == Catch::Approx(0.15));
}

TEST_CASE("synthetic benchmark has the declared subsumption structure", "[benchmark]") {
  Warnings w;
  SyntheticBenchmark b = generate_synthetic(120, 3, 7, &w);
  REQUIRE(b.intents.size() == 3);
  CHECK(b.intents[0].name == "equivalence");
  CHECK(b.labels.intent_count() == 3);
  CHECK(b.labels.pair_count() == b.pairs.size());

  // Labels agree with the hidden entity mapping, intent by intent.
  for (std::size_t p = 0; p < 3; ++p) {
    Resolution res = Resolution::from_labels(b.labels, p);
    CHECK(resolution_satisfies(res, b.mapping, b.pairs));
  }
  // The declared chain holds on the emitted labels: eq < conj < brand.
  CHECK(detect_subsumption(b.labels, 1, 0));
  CHECK(detect_subsumption(b.labels, 2, 0));
  CHECK(detect_subsumption(b.labels, 2, 1));
  for (int s : b.intents[0].subsumed_by) CHECK(detect_subsumption(b.labels, static_cast<std::size_t>(s), 0));
}

TEST_CASE("synthetic generator is reproducible and supports wider intent sets", "[benchmark]") {
  SyntheticBenchmark a = generate_synthetic(100, 5, 11);
  SyntheticBenchmark b = generate_synthetic(100, 5, 11);
  REQUIRE(a.pairs.size() == b.pairs.size());
  CHECK(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records.at(i).id == b.records.at(i).id);
    CHECK(a.records.at(i).field("title")->value() == b.records.at(i).field("title")->value());
  }
  for (PairId id = 0; id < a.pairs.size(); ++id)
    for (std::size_t p = 0; p < 5; ++p) CHECK(a.labels.label(id, p) == b.labels.label(id, p));

  SyntheticBenchmark c = generate_synthetic(100, 5, 12);
  bool any_diff = c.pairs.size() != a.pairs.size();
  if (!any_diff)
    for (std::size_t i = 0; i < a.records.size() && !any_diff; ++i)
      any_diff = a.records.at(i).field("title")->value() != c.records.at(i).field("title")->value();
  CHECK(any_diff);

  // Every conjunction conjunct subsumes the conjunction on generated labels.
  CHECK(detect_subsumption(c.labels, 2, 1));
  CHECK(detect_subsumption(c.labels, 3, 1));
  CHECK_THROWS_AS(generate_synthetic(50, 1, 1), ConfigError);
}
