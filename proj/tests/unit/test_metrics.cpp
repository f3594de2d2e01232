#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mier/common.hpp"
#include "mier/core.hpp"
#include "mier/metrics.hpp"

using namespace mier;

namespace {

std::vector<PairId> full_universe(std::size_t n) {
  std::vector<PairId> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = static_cast<PairId>(i);
  return u;
}

Resolution res_of(std::initializer_list<PairId> ids, int intent = 0) {
  Resolution r;
  r.intent_id = intent;
  r.matched = ids;
  r.canonicalize();
  return r;
}

}  // namespace

TEST_CASE("precision, recall, F1, accuracy on stated cases", "[metrics]") {
  auto universe = full_universe(6);
  SECTION("perfect prediction") {
    Resolution m = res_of({1, 3});
    PrfResult r = prf(m, m, universe);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(r.accuracy == 1.0);
  }
  SECTION("empty prediction against a nonempty gold") {
    Resolution gold = res_of({0, 5});
    PrfResult r = prf(res_of({}), gold, universe);
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);
    CHECK(r.f1 == 0.0);
    CHECK(r.accuracy == Catch::Approx(4.0 / 6.0));
    CHECK(r.empty_prediction_convention);
  }
  SECTION("both empty uses the stated conventions") {
    PrfResult r = prf(res_of({}), res_of({}), universe);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.accuracy == 1.0);
    CHECK(r.empty_gold_convention);
  }
}

TEST_CASE("prf equals an exhaustive confusion-matrix oracle on random instances", "[metrics]") {
  Rng rng = make_rng(50);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 100;
    auto universe = full_universe(n);
    Resolution pred, gold;
    std::vector<std::uint8_t> pv(n), gv(n);
    for (std::size_t i = 0; i < n; ++i) {
      pv[i] = rand_below(rng, 3) == 0 ? 1 : 0;
      gv[i] = rand_below(rng, 4) == 0 ? 1 : 0;
      if (pv[i]) pred.matched.push_back(static_cast<PairId>(i));
      if (gv[i]) gold.matched.push_back(static_cast<PairId>(i));
    }
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pv[i] && gv[i]) tp++;
      else if (pv[i]) fp++;
      else if (gv[i]) fn++;
      else tn++;
    }
    PrfResult r = prf(pred, gold, universe);
    double want_p = tp + fp == 0 ? (tp + fn == 0 ? 1.0 : 0.0) : double(tp) / double(tp + fp);
    double want_r = tp + fn == 0 ? 1.0 : double(tp) / double(tp + fn);
    CHECK(r.precision == Catch::Approx(want_p).margin(1e-12));
    CHECK(r.recall == Catch::Approx(want_r).margin(1e-12));
    if (want_p + want_r > 0)
      CHECK(r.f1 == Catch::Approx(2 * want_p * want_r / (want_p + want_r)).margin(1e-12));
    CHECK(r.accuracy == Catch::Approx(double(tp + tn) / double(n)).margin(1e-12));
  }
}

TEST_CASE("residual error reduction on stated values", "[metrics]") {
  auto v = residual_error(0.958, 0.901);
  REQUIRE(v.has_value());
  CHECK(std::abs(*v - 57.6) < 0.1);  // published equivalence-intent reduction
  CHECK(*residual_error(0.73, 0.73) == Catch::Approx(0.0).margin(1e-12));
  CHECK(*residual_error(0.5, 0.0) == Catch::Approx(50.0).margin(1e-12));
  CHECK_FALSE(residual_error(0.9, 1.0).has_value());
  // Strictly increasing in the new value for a fixed baseline.
  double prev = -1e9;
  for (double x = 0.0; x <= 1.0; x += 0.05) {
    double cur = *residual_error(x, 0.7);
    CHECK(cur > prev);
    prev = cur;
  }
  // Negative when the new method is worse than the baseline.
  CHECK(*residual_error(0.5, 0.8) < 0.0);
}

TEST_CASE("multi-intent averages on stated values", "[metrics]") {
  // Published per-intent F values and their reported mean.
  CHECK(mi_average({0.958, 0.956, 0.972, 0.988, 0.944}) == Catch::Approx(0.964).margin(0.0005));
  CHECK(mi_average({0.42}) == 0.42);
  CHECK(mi_average({0.7, 0.7, 0.7}) == Catch::Approx(0.7).margin(1e-12));
  CHECK_THROWS_AS(mi_average({}), DataError);
}

TEST_CASE("exact-match accuracy counts full label vectors", "[metrics]") {
  std::size_t n = 10, p_count = 3;
  IntentLabelMatrix gold(n, p_count);
  std::vector<Resolution> pred(p_count);
  for (std::size_t p = 0; p < p_count; ++p) pred[p].intent_id = static_cast<int>(p);
  Rng rng = make_rng(51);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < p_count; ++p)
      if (rand_below(rng, 2)) {
        gold.set_label(static_cast<PairId>(i), p, 1);
        pred[p].matched.push_back(static_cast<PairId>(i));
      }
  for (auto& r : pred) r.canonicalize();
  auto universe = full_universe(n);
  CHECK(mi_accuracy(pred, gold, universe) == 1.0);
  // One wrong label on one pair drops exactly one exact match.
  Resolution broken = pred[1];
  if (broken.contains(4)) broken.matched.erase(std::find(broken.matched.begin(), broken.matched.end(), 4));
  else {
    broken.matched.push_back(4);
    broken.canonicalize();
  }
  std::vector<Resolution> pred2 = pred;
  pred2[1] = broken;
  CHECK(mi_accuracy(pred2, gold, universe) == Catch::Approx((n - 1.0) / n).margin(1e-12));
}

TEST_CASE("exact-match accuracy equals the indicator-sum oracle and is bounded by per-intent accuracy",
          "[metrics]") {
  Rng rng = make_rng(52);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 40, p_count = 1 + rand_below(rng, 4);
    IntentLabelMatrix gold(n, p_count);
    std::vector<Resolution> pred(p_count);
    for (std::size_t p = 0; p < p_count; ++p) pred[p].intent_id = static_cast<int>(p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < p_count; ++p) {
        gold.set_label(static_cast<PairId>(i), p, rand_below(rng, 2) ? 1 : 0);
        if (rand_below(rng, 2)) pred[p].matched.push_back(static_cast<PairId>(i));
      }
    for (auto& r : pred) r.canonicalize();
    auto universe = full_universe(n);
    std::size_t exact = 0;
    double min_acc = 1.0;
    for (std::size_t p = 0; p < p_count; ++p) {
      Resolution gr = Resolution::from_labels(gold, p);
      min_acc = std::min(min_acc, prf(pred[p], gr, universe).accuracy);
    }
    for (std::size_t i = 0; i < n; ++i) {
      bool ok = true;
      for (std::size_t p = 0; p < p_count; ++p)
        ok = ok && (pred[p].contains(static_cast<PairId>(i)) == (gold.label(static_cast<PairId>(i), p) != 0));
      exact += ok;
    }
    double acc = mi_accuracy(pred, gold, universe);
    CHECK(acc == Catch::Approx(double(exact) / double(n)).margin(1e-12));
    CHECK(acc <= min_acc + 1e-12);
  }
}

TEST_CASE("preventable error on stated cases", "[metrics]") {
  // 10 pairs. Intent 0 is the target; intent 1 is its supersuming intent.
  std::size_t n = 10;
  IntentLabelMatrix gold(n, 2);
  std::vector<Resolution> pred(2);
  pred[0].intent_id = 0;
  pred[1].intent_id = 1;
  // Pairs 0,1: predicted positive for intent 0, gold negative -> 2 FPs.
  pred[0].matched = {0, 1};
  // Super-OR true negatives on pairs 2..6: gold 0 and predicted 0 -> 5 TNs.
  // Pairs 0,1 and 7,8,9 are excluded from the TN set via predictions or gold.
  pred[1].matched = {0, 1};
  gold.set_label(7, 1, 1);
  gold.set_label(8, 1, 1);
  gold.set_label(9, 1, 1);
  auto universe = full_universe(n);
  PreventableError pe = preventable_error(pred, gold, 0, {1}, universe);
  REQUIRE(pe.literal.has_value());
  CHECK(*pe.literal == Catch::Approx(0.4).margin(1e-12));  // 2 / 5
  REQUIRE(pe.restricted.has_value());
  CHECK(*pe.restricted == 0.0);  // the FPs sit outside the TN set here
  CHECK(pe.false_positives == 2);
  CHECK(pe.super_true_negatives == 5);

  SECTION("no false positives is exactly zero") {
    std::vector<Resolution> clean = pred;
    clean[0].matched = {};
    PreventableError z = preventable_error(clean, gold, 0, {1}, universe);
    CHECK(*z.literal == 0.0);
  }
  SECTION("zero denominator reports not-applicable") {
    std::vector<Resolution> all = pred;
    all[1].matched = full_universe(n);
    PreventableError na = preventable_error(all, gold, 0, {1}, universe);
    CHECK_FALSE(na.literal.has_value());
  }
  SECTION("restricted numerator is never above the literal one") {
    Rng rng = make_rng(53);
    for (int trial = 0; trial < 40; ++trial) {
      IntentLabelMatrix g2(20, 2);
      std::vector<Resolution> p2(2);
      p2[0].intent_id = 0;
      p2[1].intent_id = 1;
      for (std::size_t i = 0; i < 20; ++i) {
        g2.set_label(static_cast<PairId>(i), 0, rand_below(rng, 2) ? 1 : 0);
        g2.set_label(static_cast<PairId>(i), 1, rand_below(rng, 2) ? 1 : 0);
        if (rand_below(rng, 2)) p2[0].matched.push_back(static_cast<PairId>(i));
        if (rand_below(rng, 2)) p2[1].matched.push_back(static_cast<PairId>(i));
      }
      for (auto& r : p2) r.canonicalize();
      PreventableError v = preventable_error(p2, g2, 0, {1}, full_universe(20));
      if (v.literal.has_value()) CHECK(*v.restricted <= *v.literal + 1e-12);
    }
  }
  SECTION("an empty supersuming set is rejected") {
    CHECK_THROWS_AS(preventable_error(pred, gold, 0, {}, universe), DataError);
  }
}

TEST_CASE("report builder produces the full table structure", "[metrics]") {
  std::size_t n = 12;
  IntentLabelMatrix gold(n, 2);
  Rng rng = make_rng(54);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t eq = rand_below(rng, 3) == 0 ? 1 : 0;
    gold.set_label(static_cast<PairId>(i), 0, eq);
    gold.set_label(static_cast<PairId>(i), 1, eq | (rand_below(rng, 2) ? 1 : 0));
    gold.set_split(static_cast<PairId>(i), i < 8 ? Split::Train : Split::Test);
  }
  std::vector<MethodPredictions> methods(2);
  methods[0].name = "in-parallel";
  methods[1].name = "flexer";
  for (auto& m : methods) {
    m.resolutions.resize(2);
    for (std::size_t p = 0; p < 2; ++p) {
      m.resolutions[p].intent_id = static_cast<int>(p);
      for (std::size_t i = 0; i < n; ++i)
        if (rand_below(rng, 2)) m.resolutions[p].matched.push_back(static_cast<PairId>(i));
      m.resolutions[p].canonicalize();
    }
  }
  Warnings w;
  auto report = build_report(methods, gold, "in-parallel", nullptr, Split::Test, &w);
  CHECK(report.at("baseline") == "in-parallel");
  CHECK(report.at("methods").size() == 2);
  CHECK(report.at("methods").at(0).at("per_intent").size() == 2);
  CHECK(report.at("methods").at(0).at("mi").at("residual_error_f1").is_null());  // baseline vs itself
  // Intent 0 is subsumed by intent 1 by construction, so preventable error
  // rows exist for intent 0.
  bool has_pe = false;
  for (const auto& e : report.at("methods").at(1).at("preventable_error"))
    if (e.at("intent_id").get<std::size_t>() == 0) has_pe = true;
  CHECK(has_pe);
  CHECK_THROWS_WITH(build_report(methods, gold, "missing-baseline"),
                    Catch::Matchers::ContainsSubstring("missing-baseline"));
  std::string text = render_report(report);
  CHECK(text.find("MI-F") != std::string::npos);
  CHECK(text.find("flexer") != std::string::npos);
}
