#pragma once

// File formats: records as CSV or JSON-lines, pairs and labels as JSON-lines,
// intent specs as JSON. Writers emit canonical (pair_id ascending) order;
// readers validate alignment so downstream indices can trust pair_id.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mier/common.hpp"
#include "mier/core.hpp"

namespace mier {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline std::uint64_t file_content_hash(const std::filesystem::path& path) {
  return fnv1a64(read_text_file(path));
}

// --- CSV ---------------------------------------------------------------

// RFC-4180 style: quoted fields may contain commas, doubled quotes, and
// newlines. Returns rows of cells.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool cell_started = false;
  std::size_t i = 0;
  auto end_cell = [&]() {
    row.push_back(cell);
    cell.clear();
    cell_started = false;
  };
  auto end_row = [&]() {
    end_cell();
    rows.push_back(row);
    row.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"' && !cell_started && cell.empty()) {
      in_quotes = true;
      cell_started = true;
    } else if (c == ',') {
      end_cell();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_row();
      ++i;
    } else if (c == '\n') {
      end_row();
    } else {
      cell.push_back(c);
      cell_started = true;
    }
    ++i;
  }
  if (in_quotes) throw DataError("unterminated quoted CSV field");
  if (cell_started || !cell.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_escape(const std::string& s) {
  bool needs = s.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

// --- Records -----------------------------------------------------------

// CSV: header names the columns; `id_column` is required, a `source` column is
// optional, every other column is an attribute. Empty cells are nulls.
inline Dataset read_records_csv(const std::filesystem::path& path, const std::string& id_column = "id") {
  auto rows = parse_csv(read_text_file(path));
  if (rows.empty()) throw DataError("records file '" + path.string() + "' is empty");
  const auto& header = rows[0];
  std::size_t id_idx = header.size();
  std::size_t source_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == id_column) id_idx = i;
    else if (header[i] == "source") source_idx = i;
  }
  if (id_idx == header.size())
    throw DataError("records file '" + path.string() + "' lacks id column '" + id_column + "'");
  std::vector<Record> records;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(r) + " of '" + path.string() + "' has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    Record rec;
    rec.id = cells[id_idx];
    if (source_idx < header.size()) rec.source = cells[source_idx];
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == id_idx || c == source_idx) continue;
      if (cells[c].empty()) rec.fields.emplace_back(header[c], std::nullopt);
      else rec.fields.emplace_back(header[c], cells[c]);
    }
    records.push_back(std::move(rec));
  }
  return Dataset(std::move(records));
}

// JSON-lines: {"id": ..., "source": ..., "fields": {attr: value-or-null, ...}}
inline Dataset read_records_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<Record> records;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw DataError("bad JSON at " + path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Record rec;
    if (!j.contains("id")) throw DataError(path.string() + ":" + std::to_string(lineno) + ": missing 'id'");
    rec.id = j.at("id").get<std::string>();
    if (j.contains("source")) rec.source = j.at("source").get<std::string>();
    if (!j.contains("fields")) throw DataError(path.string() + ":" + std::to_string(lineno) + ": missing 'fields'");
    for (const auto& [k, v] : j.at("fields").items()) {
      if (v.is_null()) rec.fields.emplace_back(k, std::nullopt);
      else rec.fields.emplace_back(k, v.get<std::string>());
    }
    records.push_back(std::move(rec));
  }
  return Dataset(std::move(records));
}

inline Dataset read_records(const std::filesystem::path& path, const std::string& id_column = "id") {
  if (path.extension() == ".csv") return read_records_csv(path, id_column);
  return read_records_jsonl(path);
}

inline void write_records_jsonl(const std::filesystem::path& path, const Dataset& ds) {
  std::ostringstream out;
  for (const auto& r : ds.records()) {
    ordered_json j;
    j["id"] = r.id;
    if (!r.source.empty()) j["source"] = r.source;
    ordered_json fields = ordered_json::object();
    for (const auto& [k, v] : r.fields) {
      if (v.has_value()) fields[k] = *v;
      else fields[k] = nullptr;
    }
    j["fields"] = std::move(fields);
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

// --- Pairs -------------------------------------------------------------

inline void write_pairs_jsonl(const std::filesystem::path& path, const CandidatePairSet& pairs) {
  std::ostringstream out;
  for (PairId id = 0; id < pairs.size(); ++id) {
    const auto& p = pairs.at(id);
    ordered_json j;
    j["pair_id"] = id;
    j["left_id"] = p.left_id;
    j["right_id"] = p.right_id;
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

inline CandidatePairSet read_pairs_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<CandidatePair> pairs;
  std::vector<std::uint64_t> ids;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw DataError("bad JSON at " + path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    pairs.push_back({j.at("left_id").get<std::string>(), j.at("right_id").get<std::string>()});
    ids.push_back(j.at("pair_id").get<std::uint64_t>());
  }
  CandidatePairSet set(pairs);
  // The file must already be in canonical order or pair_id-based artifacts
  // (labels, embedding rows) would silently misalign.
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (ids[i] != i) throw DataError(path.string() + ": pair_id " + std::to_string(ids[i]) + " at row " + std::to_string(i) + "; file must be sorted by pair_id 0..n-1");
    if (set.at(static_cast<PairId>(i)).left_id != pairs[i].left_id || set.at(static_cast<PairId>(i)).right_id != pairs[i].right_id)
      throw DataError(path.string() + ": pairs are not in canonical (left,right) lexicographic order at row " + std::to_string(i));
  }
  return set;
}

// --- Labels ------------------------------------------------------------

inline void write_labels_jsonl(const std::filesystem::path& path, const IntentLabelMatrix& labels) {
  std::ostringstream out;
  for (PairId id = 0; id < labels.pair_count(); ++id) {
    ordered_json j;
    j["pair_id"] = id;
    j["split"] = split_name(labels.split(id));
    std::vector<int> row(labels.intent_count());
    for (std::size_t p = 0; p < labels.intent_count(); ++p) row[p] = labels.label(id, p);
    j["labels"] = row;
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

inline IntentLabelMatrix read_labels_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  struct Row {
    std::uint64_t pair_id;
    Split split;
    std::vector<std::uint8_t> labels;
  };
  std::vector<Row> rows;
  std::size_t p_count = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw DataError("bad JSON at " + path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Row r;
    r.pair_id = j.at("pair_id").get<std::uint64_t>();
    r.split = split_from_name(j.at("split").get<std::string>());
    for (const auto& v : j.at("labels")) {
      int x = v.get<int>();
      if (x != 0 && x != 1) throw DataError(path.string() + ":" + std::to_string(lineno) + ": labels must be 0/1");
      r.labels.push_back(static_cast<std::uint8_t>(x));
    }
    if (p_count == 0) p_count = r.labels.size();
    else if (r.labels.size() != p_count)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(p_count) + " labels, got " + std::to_string(r.labels.size()));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("labels file '" + path.string() + "' is empty");
  IntentLabelMatrix m(rows.size(), p_count);
  std::vector<bool> seen(rows.size(), false);
  for (const auto& r : rows) {
    if (r.pair_id >= rows.size()) throw DataError(path.string() + ": pair_id " + std::to_string(r.pair_id) + " out of range");
    if (seen[r.pair_id]) throw DataError(path.string() + ": duplicate pair_id " + std::to_string(r.pair_id));
    seen[r.pair_id] = true;
    m.set_split(static_cast<PairId>(r.pair_id), r.split);
    for (std::size_t p = 0; p < p_count; ++p) m.set_label(static_cast<PairId>(r.pair_id), p, r.labels[p]);
  }
  return m;
}

// --- Intent specs ------------------------------------------------------

inline void write_intent_specs(const std::filesystem::path& path, const std::vector<IntentSpec>& specs) {
  ordered_json j;
  j["P"] = specs.size();
  ordered_json arr = ordered_json::array();
  for (const auto& s : specs) {
    ordered_json e;
    e["intent_id"] = s.intent_id;
    e["name"] = s.name;
    e["subsumed_by"] = s.subsumed_by;
    arr.push_back(std::move(e));
  }
  j["intents"] = std::move(arr);
  write_text_file(path, j.dump(2) + "\n");
}

inline std::vector<IntentSpec> read_intent_specs(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const std::exception& e) {
    throw DataError("bad JSON in '" + path.string() + "': " + e.what());
  }
  std::vector<IntentSpec> specs;
  for (const auto& e : j.at("intents")) {
    IntentSpec s;
    s.intent_id = e.at("intent_id").get<int>();
    s.name = e.at("name").get<std::string>();
    if (e.contains("subsumed_by")) s.subsumed_by = e.at("subsumed_by").get<std::vector<int>>();
    specs.push_back(std::move(s));
  }
  validate_intent_specs(specs);
  return specs;
}

}  // namespace mier
