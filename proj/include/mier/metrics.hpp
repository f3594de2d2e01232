#pragma once

// Evaluation suite: precision/recall/F1/accuracy over a pair universe,
// residual-error reduction against a baseline, multi-intent averages,
// exact-match multi-label accuracy, preventable error with respect to
// supersuming intents, and machine-readable report generation.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mier/common.hpp"
#include "mier/core.hpp"

namespace mier {

struct PrfResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool empty_prediction_convention = false;  // |M| = 0 triggered the stated convention
  bool empty_gold_convention = false;        // |M*| = 0 triggered the stated convention
};

// Set-based precision/recall/F over a universe of pairs. Conventions for
// empty sets: |M| = 0 gives precision 1 when |M*| = 0 and 0 otherwise;
// |M*| = 0 gives recall 1; F is 0 when P + R = 0. Accuracy is the fraction of
// universe pairs whose membership matches.
inline PrfResult prf(const Resolution& predicted, const Resolution& gold, const std::vector<PairId>& universe) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (PairId id : universe) {
    bool in_pred = predicted.contains(id);
    bool in_gold = gold.contains(id);
    if (in_pred && in_gold) tp++;
    else if (in_pred) fp++;
    else if (in_gold) fn++;
    else tn++;
  }
  PrfResult r;
  const std::size_t pred_size = tp + fp, gold_size = tp + fn;
  if (pred_size == 0) {
    r.empty_prediction_convention = true;
    r.precision = gold_size == 0 ? 1.0 : 0.0;
  } else {
    r.precision = static_cast<double>(tp) / static_cast<double>(pred_size);
  }
  if (gold_size == 0) {
    r.empty_gold_convention = true;
    r.recall = 1.0;
  } else {
    r.recall = static_cast<double>(tp) / static_cast<double>(gold_size);
  }
  r.f1 = (r.precision + r.recall) == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  r.accuracy = universe.empty() ? 1.0 : static_cast<double>(tp + tn) / static_cast<double>(universe.size());
  return r;
}

// Percentage of the baseline's residual error removed: 100 (v_new - v_base) /
// (1 - v_base). Undefined at v_base = 1 (reported as not-applicable).
inline std::optional<double> residual_error(double v_new, double v_base) {
  if (v_base >= 1.0) return std::nullopt;
  return 100.0 * (v_new - v_base) / (1.0 - v_base);
}

inline double mi_average(const std::vector<double>& per_intent_values) {
  if (per_intent_values.empty()) throw DataError("mi_average over an empty intent set");
  double sum = 0.0;
  for (double v : per_intent_values) sum += v;
  return sum / static_cast<double>(per_intent_values.size());
}

// Exact-match accuracy: the fraction of universe pairs whose full P-vector of
// predictions equals the gold vector.
inline double mi_accuracy(const std::vector<Resolution>& predictions, const IntentLabelMatrix& gold,
                          const std::vector<PairId>& universe) {
  if (predictions.size() != gold.intent_count()) throw DataError("mi_accuracy: intent count mismatch");
  if (universe.empty()) return 1.0;
  std::size_t exact = 0;
  for (PairId id : universe) {
    bool all = true;
    for (std::size_t p = 0; p < predictions.size() && all; ++p) {
      std::uint8_t pred = predictions[p].contains(id) ? 1 : 0;
      if (pred != gold.label(id, p)) all = false;
    }
    if (all) exact++;
  }
  return static_cast<double>(exact) / static_cast<double>(universe.size());
}

struct PreventableError {
  std::optional<double> literal;     // |FP_p| / |TN of the OR over S|
  std::optional<double> restricted;  // numerator limited to FPs that co-occur with a correct super-negative
  std::size_t false_positives = 0;
  std::size_t super_true_negatives = 0;
  std::size_t overlap = 0;  // FPs inside the super-TN set
};

// Preventable error of intent p with respect to the OR over its supersuming
// intents S. The literal form divides all of p's false positives by the
// super-OR's true negatives; the restricted variant keeps only the false
// positives that coincide with a correct super-negative. Both are reported;
// a zero denominator makes the value not-applicable.
inline PreventableError preventable_error(const std::vector<Resolution>& predictions, const IntentLabelMatrix& gold,
                                          std::size_t p, const std::vector<int>& supersuming,
                                          const std::vector<PairId>& universe) {
  if (supersuming.empty()) throw DataError("preventable_error: supersuming set S must be non-empty");
  if (p >= predictions.size()) throw DataError("preventable_error: intent out of range");
  for (int s : supersuming)
    if (s < 0 || static_cast<std::size_t>(s) >= predictions.size() || static_cast<std::size_t>(s) == p)
      throw DataError("preventable_error: invalid supersuming intent " + std::to_string(s));
  PreventableError out;
  for (PairId id : universe) {
    bool pred_p = predictions[p].contains(id);
    bool gold_p = gold.label(id, p) != 0;
    bool fp = pred_p && !gold_p;
    bool pred_or = false, gold_or = false;
    for (int s : supersuming) {
      pred_or = pred_or || predictions[static_cast<std::size_t>(s)].contains(id);
      gold_or = gold_or || gold.label(id, static_cast<std::size_t>(s)) != 0;
    }
    bool super_tn = !pred_or && !gold_or;
    if (fp) out.false_positives++;
    if (super_tn) out.super_true_negatives++;
    if (fp && super_tn) out.overlap++;
  }
  if (out.super_true_negatives > 0) {
    out.literal = static_cast<double>(out.false_positives) / static_cast<double>(out.super_true_negatives);
    out.restricted = static_cast<double>(out.overlap) / static_cast<double>(out.super_true_negatives);
  }
  return out;
}

// --- Report ------------------------------------------------------------------

struct MethodPredictions {
  std::string name;
  std::vector<Resolution> resolutions;  // one per intent, over the full universe
};

// Builds the versioned report JSON: per-method per-intent P/R/F/Acc, the MI
// aggregates, residual-error reductions against the named baseline, and
// preventable-error values for every intent with a non-empty supersuming set
// (derived from the gold labels; declared subsumption only cross-checks).
inline nlohmann::ordered_json build_report(const std::vector<MethodPredictions>& methods,
                                           const IntentLabelMatrix& gold, const std::string& baseline_name,
                                           const std::vector<IntentSpec>* declared = nullptr,
                                           Split eval_split = Split::Test, Warnings* warnings = nullptr) {
  using ordered_json = nlohmann::ordered_json;
  if (methods.empty()) throw DataError("build_report: no methods");
  const std::size_t p_count = gold.intent_count();
  for (const auto& m : methods)
    if (m.resolutions.size() != p_count)
      throw DataError("method '" + m.name + "' supplies " + std::to_string(m.resolutions.size()) + " resolutions, expected " + std::to_string(p_count));
  const MethodPredictions* baseline = nullptr;
  for (const auto& m : methods)
    if (m.name == baseline_name) baseline = &m;
  if (baseline == nullptr) throw DataError("baseline method '" + baseline_name + "' not among the predictions");

  std::vector<PairId> universe = gold.pairs_in_split(eval_split);
  std::vector<Resolution> gold_res;
  for (std::size_t p = 0; p < p_count; ++p) gold_res.push_back(Resolution::from_labels(gold, p));
  std::vector<std::vector<int>> supersets(p_count);
  for (std::size_t p = 0; p < p_count; ++p) supersets[p] = supersuming_intents(gold, p, declared, warnings);

  // Per-method metric tables.
  std::vector<std::vector<PrfResult>> per_intent(methods.size(), std::vector<PrfResult>(p_count));
  std::vector<double> mi_acc(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (std::size_t p = 0; p < p_count; ++p)
      per_intent[m][p] = prf(methods[m].resolutions[p], gold_res[p], universe);
    mi_acc[m] = mi_accuracy(methods[m].resolutions, gold, universe);
  }
  std::size_t baseline_idx = static_cast<std::size_t>(baseline - methods.data());

  ordered_json report;
  report["schema_version"] = 1;
  report["eval_split"] = split_name(eval_split);
  report["universe_size"] = universe.size();
  report["intent_count"] = p_count;
  report["baseline"] = baseline_name;
  ordered_json intents = ordered_json::array();
  for (std::size_t p = 0; p < p_count; ++p) {
    ordered_json e;
    e["intent_id"] = p;
    e["name"] = declared != nullptr && p < declared->size() ? (*declared)[p].name : ("intent" + std::to_string(p));
    e["supersuming"] = supersets[p];
    intents.push_back(std::move(e));
  }
  report["intents"] = std::move(intents);

  std::vector<std::string> notes;
  ordered_json methods_json = ordered_json::array();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    ordered_json mj;
    mj["name"] = methods[m].name;
    ordered_json rows = ordered_json::array();
    std::vector<double> f_values, p_values, r_values;
    for (std::size_t p = 0; p < p_count; ++p) {
      const PrfResult& r = per_intent[m][p];
      ordered_json row;
      row["precision"] = r.precision;
      row["recall"] = r.recall;
      row["f1"] = r.f1;
      row["accuracy"] = r.accuracy;
      auto ef = residual_error(r.f1, per_intent[baseline_idx][p].f1);
      if (m != baseline_idx && ef.has_value()) row["residual_error_f1"] = *ef;
      else row["residual_error_f1"] = nullptr;
      if (m != baseline_idx && !ef.has_value())
        notes.push_back("residual error undefined for method '" + methods[m].name + "', intent " + std::to_string(p) + " (baseline F1 = 1)");
      if (r.empty_prediction_convention)
        notes.push_back("empty prediction set convention used for method '" + methods[m].name + "', intent " + std::to_string(p));
      if (r.empty_gold_convention)
        notes.push_back("empty gold set convention used for intent " + std::to_string(p));
      rows.push_back(std::move(row));
      f_values.push_back(r.f1);
      p_values.push_back(r.precision);
      r_values.push_back(r.recall);
    }
    mj["per_intent"] = std::move(rows);
    ordered_json mi;
    mi["precision"] = mi_average(p_values);
    mi["recall"] = mi_average(r_values);
    mi["f1"] = mi_average(f_values);
    mi["accuracy"] = mi_acc[m];
    std::vector<double> base_f;
    for (std::size_t p = 0; p < p_count; ++p) base_f.push_back(per_intent[baseline_idx][p].f1);
    auto mi_ef = residual_error(mi_average(f_values), mi_average(base_f));
    if (m != baseline_idx && mi_ef.has_value()) mi["residual_error_f1"] = *mi_ef;
    else mi["residual_error_f1"] = nullptr;
    mj["mi"] = std::move(mi);

    ordered_json pe = ordered_json::array();
    for (std::size_t p = 0; p < p_count; ++p) {
      if (supersets[p].empty()) continue;
      PreventableError v = preventable_error(methods[m].resolutions, gold, p, supersets[p], universe);
      ordered_json e;
      e["intent_id"] = p;
      e["false_positives"] = v.false_positives;
      e["super_true_negatives"] = v.super_true_negatives;
      if (v.literal.has_value()) e["literal"] = *v.literal;
      else e["literal"] = nullptr;
      if (v.restricted.has_value()) e["restricted"] = *v.restricted;
      else e["restricted"] = nullptr;
      if (!v.literal.has_value())
        notes.push_back("preventable error not applicable for method '" + methods[m].name + "', intent " + std::to_string(p) + " (no super true negatives)");
      pe.push_back(std::move(e));
    }
    mj["preventable_error"] = std::move(pe);
    methods_json.push_back(std::move(mj));
  }
  report["methods"] = std::move(methods_json);
  std::sort(notes.begin(), notes.end());
  notes.erase(std::unique(notes.begin(), notes.end()), notes.end());
  report["notes"] = notes;
  return report;
}

// Plain-text tables for a report: one multi-intent summary block and one
// per-intent block.
inline std::string render_report(const nlohmann::ordered_json& report) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  auto fmt_opt = [&](const nlohmann::ordered_json& v) { return v.is_null() ? std::string("-") : fmt(v.get<double>()); };
  std::string out;
  out += "== Multi-intent results (" + report.at("eval_split").get<std::string>() + " split, " +
         std::to_string(report.at("universe_size").get<std::size_t>()) + " pairs) ==\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-14s %8s %8s %8s %8s %10s\n", "method", "MI-P", "MI-R", "MI-F", "MI-Acc", "MI-E_F");
  out += line;
  for (const auto& m : report.at("methods")) {
    const auto& mi = m.at("mi");
    std::snprintf(line, sizeof(line), "%-14s %8s %8s %8s %8s %10s\n", m.at("name").get<std::string>().c_str(),
                  fmt(mi.at("precision").get<double>()).c_str(), fmt(mi.at("recall").get<double>()).c_str(),
                  fmt(mi.at("f1").get<double>()).c_str(), fmt(mi.at("accuracy").get<double>()).c_str(),
                  fmt_opt(mi.at("residual_error_f1")).c_str());
    out += line;
  }
  out += "\n== Per-intent results ==\n";
  std::snprintf(line, sizeof(line), "%-18s %-14s %8s %8s %8s %8s %10s\n", "intent", "method", "P", "R", "F", "Acc", "E_F");
  out += line;
  const auto& intents = report.at("intents");
  for (std::size_t p = 0; p < intents.size(); ++p) {
    for (const auto& m : report.at("methods")) {
      const auto& row = m.at("per_intent").at(p);
      std::snprintf(line, sizeof(line), "%-18s %-14s %8s %8s %8s %8s %10s\n",
                    intents.at(p).at("name").get<std::string>().c_str(), m.at("name").get<std::string>().c_str(),
                    fmt(row.at("precision").get<double>()).c_str(), fmt(row.at("recall").get<double>()).c_str(),
                    fmt(row.at("f1").get<double>()).c_str(), fmt(row.at("accuracy").get<double>()).c_str(),
                    fmt_opt(row.at("residual_error_f1")).c_str());
      out += line;
    }
  }
  bool pe_header = false;
  for (const auto& m : report.at("methods")) {
    for (const auto& e : m.at("preventable_error")) {
      if (!pe_header) {
        out += "\n== Preventable error ==\n";
        std::snprintf(line, sizeof(line), "%-14s %-18s %12s %12s\n", "method", "intent", "literal", "restricted");
        out += line;
        pe_header = true;
      }
      std::size_t p = e.at("intent_id").get<std::size_t>();
      std::snprintf(line, sizeof(line), "%-14s %-18s %12s %12s\n", m.at("name").get<std::string>().c_str(),
                    intents.at(p).at("name").get<std::string>().c_str(), fmt_opt(e.at("literal")).c_str(),
                    fmt_opt(e.at("restricted")).c_str());
      out += line;
    }
  }
  const auto& notes = report.at("notes");
  if (!notes.empty()) {
    out += "\nnotes:\n";
    for (const auto& n : notes) out += "  - " + n.get<std::string>() + "\n";
  }
  return out;
}

}  // namespace mier
