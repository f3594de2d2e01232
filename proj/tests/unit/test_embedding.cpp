#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>

#include "mier/benchmark.hpp"
#include "mier/common.hpp"
#include "mier/embedding.hpp"

using namespace mier;
namespace fs = std::filesystem;

namespace {

Record one_field(const std::string& id, const std::string& title) {
  Record r;
  r.id = id;
  r.fields.emplace_back("title", title);
  return r;
}

double cosine(const double* a, const double* b, std::size_t n) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("pair serialization puts the left record first with marker tokens", "[embedding]") {
  Dataset ds({one_field("a", "alpha"), one_field("b", "beta")});
  CandidatePairSet pairs({{"b", "a"}});  // canonicalizes to (a, b)
  SerializedPair sp = serialize_pair(pairs.at(0), ds);
  CHECK(sp.text == "\xc2\xabL\xc2\xbb alpha \xc2\xabR\xc2\xbb beta");
}

TEST_CASE("null fields serialize to empty slots", "[embedding]") {
  Record a;
  a.id = "a";
  a.fields.emplace_back("title", "x");
  a.fields.emplace_back("brand", std::nullopt);
  Record b = a;
  b.id = "b";
  b.fields[0].second = "y";
  Dataset ds({a, b});
  CandidatePairSet pairs({{"a", "b"}});
  auto [left, right] = parse_serialized_pair(serialize_pair(pairs.at(0), ds).text);
  REQUIRE(left.size() == 2);
  REQUIRE(right.size() == 2);
  CHECK(left[0] == "x");
  CHECK(left[1] == "");
  CHECK(right[0] == "y");
  CHECK(right[1] == "");
}

TEST_CASE("serialization round-trips field boundaries, including hostile values", "[embedding]") {
  std::vector<std::vector<std::string>> field_sets = {
      {"plain", "two words"},
      {"has \xc2\xabL\xc2\xbb marker inside", "x"},
      {"backslash \\ and \\\xc2\xab", "\xc2\xabA\xc2\xbb"},
      {" leading and trailing ", ""},
  };
  Rng rng = make_rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto& lf = field_sets[rand_below(rng, field_sets.size())];
    const auto& rf = field_sets[rand_below(rng, field_sets.size())];
    Record a, b;
    a.id = "a";
    b.id = "b";
    for (std::size_t i = 0; i < lf.size(); ++i) a.fields.emplace_back("f" + std::to_string(i), lf[i]);
    for (std::size_t i = 0; i < rf.size(); ++i) b.fields.emplace_back("f" + std::to_string(i), rf[i]);
    Dataset ds({a, b});
    CandidatePairSet pairs({{"a", "b"}});
    auto [left, right] = parse_serialized_pair(serialize_pair(pairs.at(0), ds).text);
    CHECK(left == lf);
    CHECK(right == rf);
  }
}

TEST_CASE("lexical embeddings are unit-norm, deterministic, and similarity-ranked", "[embedding]") {
  std::vector<Record> recs = {
      one_field("r1", "granite alpha mk4821 speaker audio"),
      one_field("r2", "granite alpha mk4821 spaeker audio"),   // one typo
      one_field("r3", "falcon zenith qq1032 trimmer garden"),
      one_field("r4", "granite alpha mk4821 speaker audio"),   // identical to r1
  };
  Dataset ds(recs);
  CandidatePairSet pairs({{"r1", "r2"}, {"r1", "r3"}, {"r1", "r4"}, {"r2", "r3"}});
  std::vector<Split> splits(pairs.size(), Split::Train);
  PairEmbeddingSet set = embed_lexical(pairs, ds, 64, 1, splits);
  REQUIRE(set.pair_count() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    double norm = 0;
    for (std::size_t c = 0; c < set.dim(); ++c) norm += set.vectors.at(i, c) * set.vectors.at(i, c);
    CHECK(std::sqrt(norm) == Catch::Approx(1.0).margin(1e-6));
  }
  // (r1,r2) with one typo stays closer to (r1,r4) than the unrelated (r2,r3).
  double near = cosine(set.vectors.row(0), set.vectors.row(2), set.dim());
  double far = cosine(set.vectors.row(3), set.vectors.row(2), set.dim());
  CHECK(near > far);

  PairEmbeddingSet again = embed_lexical(pairs, ds, 64, 1, splits);
  for (std::size_t i = 0; i < set.vectors.size(); ++i) CHECK(set.vectors.data()[i] == again.vectors.data()[i]);
  PairEmbeddingSet other_seed = embed_lexical(pairs, ds, 64, 2, splits);
  bool differs = false;
  for (std::size_t i = 0; i < set.vectors.size(); ++i)
    differs |= set.vectors.data()[i] != other_seed.vectors.data()[i];
  CHECK(differs);
  CHECK_THROWS_AS(embed_lexical(pairs, ds, 8, 1, splits), ConfigError);
}

TEST_CASE("identical pair content embeds identically regardless of other pairs", "[embedding]") {
  std::vector<Record> recs = {
      one_field("r1", "granite alpha mk4821 speaker audio"),
      one_field("r2", "granite alpha mk4821 speaker audio deluxe"),
      one_field("r3", "falcon zenith qq1032 trimmer garden"),
      one_field("r4", "borealis prime zz7001 kettle kitchen"),
  };
  Dataset ds(recs);
  CandidatePairSet small({{"r1", "r2"}, {"r1", "r3"}});
  CandidatePairSet big({{"r1", "r2"}, {"r1", "r3"}, {"r3", "r4"}});
  // Train split frozen to the shared pairs; the extra pair is test-only, so
  // the IDF table and therefore the shared pairs' vectors cannot move.
  std::vector<Split> small_splits = {Split::Train, Split::Train};
  std::vector<Split> big_splits = {Split::Train, Split::Train, Split::Test};
  PairEmbeddingSet a = embed_lexical(small, ds, 64, 3, small_splits);
  PairEmbeddingSet b = embed_lexical(big, ds, 64, 3, big_splits);
  std::map<std::pair<std::string, std::string>, std::size_t> row_of;
  for (PairId id = 0; id < big.size(); ++id) row_of[{big.at(id).left_id, big.at(id).right_id}] = id;
  for (PairId id = 0; id < small.size(); ++id) {
    std::size_t brow = row_of.at({small.at(id).left_id, small.at(id).right_id});
    for (std::size_t c = 0; c < a.dim(); ++c) CHECK(a.vectors.at(id, c) == b.vectors.at(brow, c));
  }
}

TEST_CASE("embedding export and import are a bit-exact identity", "[embedding]") {
  Rng rng = make_rng(8);
  std::vector<PairEmbeddingSet> sets;
  for (int p = 0; p < 3; ++p) {
    PairEmbeddingSet s;
    s.intent_id = p;
    s.vectors = DenseMatrix(17, 24);
    for (std::size_t i = 0; i < s.vectors.size(); ++i) s.vectors.data()[i] = quantize_f32(rand_range(rng, -2, 2));
    sets.push_back(std::move(s));
  }
  fs::path dir = fs::temp_directory_path() / "mier_emb_roundtrip";
  fs::remove_all(dir);
  fs::path manifest = export_embeddings(sets, dir);
  auto back = import_embeddings(manifest);
  REQUIRE(back.size() == 3);
  for (int p = 0; p < 3; ++p) {
    REQUIRE(back[p].vectors.rows() == 17);
    REQUIRE(back[p].vectors.cols() == 24);
    for (std::size_t i = 0; i < back[p].vectors.size(); ++i)
      CHECK(back[p].vectors.data()[i] == sets[p].vectors.data()[i]);
  }
}

TEST_CASE("embedding import rejects corrupted inputs with the offender named", "[embedding]") {
  PairEmbeddingSet s;
  s.intent_id = 0;
  s.vectors = DenseMatrix(3, 16, 0.5);
  fs::path dir = fs::temp_directory_path() / "mier_emb_bad";
  fs::remove_all(dir);
  fs::path manifest = export_embeddings({s}, dir);

  SECTION("dimension mismatch against the manifest") {
    json m = json::parse(read_text_file(manifest));
    m["dim"] = 99;
    write_text_file(manifest, m.dump());
    CHECK_THROWS_WITH(import_embeddings(manifest), Catch::Matchers::ContainsSubstring("dim"));
  }
  SECTION("missing pair in the sidecar index") {
    write_text_file(dir / "intent_0.emb.idx", "0\n1\n1\n");
    CHECK_THROWS_WITH(import_embeddings(manifest), Catch::Matchers::ContainsSubstring("repeats pair_id 1"));
  }
  SECTION("non-finite payload value") {
    std::string blob = read_text_file(dir / "intent_0.emb");
    float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(blob.data() + 16, &nan, 4);
    write_text_file(dir / "intent_0.emb", blob);
    CHECK_THROWS_WITH(import_embeddings(manifest), Catch::Matchers::ContainsSubstring("non-finite"));
  }
  SECTION("missing manifest key") {
    json m = json::parse(read_text_file(manifest));
    m.erase("pair_count");
    write_text_file(manifest, m.dump());
    CHECK_THROWS_WITH(import_embeddings(manifest), Catch::Matchers::ContainsSubstring("pair_count"));
  }
}
