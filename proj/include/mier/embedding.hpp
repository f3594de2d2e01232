#pragma once

// Pair representations: deterministic record-pair serialization with reserved
// delimiter tokens, a hashed character n-gram TF-IDF embedder standing in for
// learned representations, and a bit-exact binary import/export format for
// externally computed vectors.

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mier/benchmark.hpp"
#include "mier/common.hpp"
#include "mier/core.hpp"
#include "mier/io.hpp"
#include "mier/nn.hpp"

namespace mier {

// --- Serialization ----------------------------------------------------------

namespace serdel {
inline const std::string kLeft = "\xc2\xab" "L" "\xc2\xbb";   // «L»
inline const std::string kRight = "\xc2\xab" "R" "\xc2\xbb";  // «R»
inline const std::string kAttr = "\xc2\xab" "A" "\xc2\xbb";   // «A»
}  // namespace serdel

struct SerializedPair {
  std::string text;
};

// Escapes the delimiter lead byte so raw values can never alias a delimiter.
inline std::string escape_serialized_value(const std::string& v) {
  std::string out;
  out.reserve(v.size());
  for (char c : v) {
    if (c == '\\' || static_cast<unsigned char>(c) == 0xc2) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

inline std::string unescape_serialized_value(const std::string& v) {
  std::string out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '\\' && i + 1 < v.size()) ++i;
    out.push_back(v[i]);
  }
  return out;
}

// «L» v1 «A» v2 ... «R» v1 «A» v2 ..., values in stored field order, null as
// an empty slot, left record first under the canonical pair order.
inline SerializedPair serialize_pair(const CandidatePair& pair, const Dataset& records) {
  auto emit_record = [](const Record& r, const std::string& marker, std::string& out) {
    out += marker;
    bool first = true;
    for (const auto& [name, value] : r.fields) {
      if (!first) out += " " + serdel::kAttr;
      first = false;
      out += " ";
      if (value.has_value()) out += escape_serialized_value(*value);
    }
  };
  const Record& left = records.by_id(pair.left_id);
  const Record& right = records.by_id(pair.right_id);
  SerializedPair sp;
  emit_record(left, serdel::kLeft, sp.text);
  sp.text += " ";
  emit_record(right, serdel::kRight, sp.text);
  return sp;
}

// Recovers the two records' field-value slots from a serialization. Escaped
// characters are restored; null and empty values are both empty slots.
inline std::pair<std::vector<std::string>, std::vector<std::string>> parse_serialized_pair(const std::string& text) {
  struct Token {
    std::size_t pos;
    int kind;  // 0 = L, 1 = R, 2 = A
  };
  std::vector<Token> tokens;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\') {
      ++i;
      continue;
    }
    for (int kind = 0; kind < 3; ++kind) {
      const std::string& d = kind == 0 ? serdel::kLeft : kind == 1 ? serdel::kRight : serdel::kAttr;
      if (text.compare(i, d.size(), d) == 0) {
        tokens.push_back({i, kind});
        i += d.size() - 1;
        break;
      }
    }
  }
  if (tokens.empty() || tokens[0].kind != 0) throw DataError("serialized pair does not start with the left marker");
  std::size_t right_at = tokens.size();
  for (std::size_t t = 1; t < tokens.size(); ++t)
    if (tokens[t].kind == 1) {
      right_at = t;
      break;
    }
  if (right_at == tokens.size()) throw DataError("serialized pair lacks the right marker");

  auto slot_between = [&](std::size_t tok_idx) {
    const std::string& d = tokens[tok_idx].kind == 0 ? serdel::kLeft : tokens[tok_idx].kind == 1 ? serdel::kRight : serdel::kAttr;
    std::size_t begin = tokens[tok_idx].pos + d.size();
    std::size_t end = tok_idx + 1 < tokens.size() ? tokens[tok_idx + 1].pos : text.size();
    std::string raw = text.substr(begin, end - begin);
    // The writer pads each slot with one space on each side.
    if (!raw.empty() && raw.front() == ' ') raw.erase(raw.begin());
    if (!raw.empty() && raw.back() == ' ' && tok_idx + 1 < tokens.size()) raw.pop_back();
    return unescape_serialized_value(raw);
  };
  std::vector<std::string> left, right;
  for (std::size_t t = 0; t < right_at; ++t) left.push_back(slot_between(t));
  for (std::size_t t = right_at; t < tokens.size(); ++t) right.push_back(slot_between(t));
  return {left, right};
}

// --- PairEmbeddingSet ---------------------------------------------------------

struct PairEmbeddingSet {
  int intent_id = 0;
  DenseMatrix vectors;  // pair_id -> row

  std::size_t dim() const { return vectors.cols(); }
  std::size_t pair_count() const { return vectors.rows(); }

  void require_valid(std::size_t expected_pairs) const {
    if (vectors.rows() != expected_pairs)
      throw DataError("embedding set for intent " + std::to_string(intent_id) + " covers " +
                      std::to_string(vectors.rows()) + " pairs, expected " + std::to_string(expected_pairs));
    vectors.require_finite("embedding set");
  }
};

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// --- Lexical embedder -----------------------------------------------------------

// Hashed character 3..5-gram term frequencies of the normalized serialization,
// signed per coordinate, IDF-scaled with statistics from the train split only,
// then L2-normalized. Coordinates are rounded to the 32-bit float grid so the
// binary export round-trips bit-exactly.
inline PairEmbeddingSet embed_lexical(const CandidatePairSet& pairs, const Dataset& records, std::size_t dim,
                                      std::uint64_t seed, const std::vector<Split>& splits,
                                      Warnings* warnings = nullptr) {
  if (dim < 16) throw ConfigError("embed_lexical requires dim >= 16");
  if (splits.size() != pairs.size()) throw DataError("embed_lexical: split tags do not cover the candidate set");

  std::vector<std::string> texts(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    texts[i] = normalize_text(serialize_pair(pairs.at(static_cast<PairId>(i)), records).text);
  });

  auto each_gram = [](const std::string& text, const std::function<void(const char*, std::size_t)>& fn) {
    for (std::size_t n = 3; n <= 5; ++n) {
      if (text.size() < n) continue;
      for (std::size_t i = 0; i + n <= text.size(); ++i) fn(text.data() + i, n);
    }
  };

  // Document frequencies over train pairs; one pair is one document.
  std::map<std::string, std::size_t> df;
  std::size_t n_train = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (splits[i] != Split::Train) continue;
    ++n_train;
    std::set<std::string> seen;
    each_gram(texts[i], [&](const char* p, std::size_t n) { seen.insert(std::string(p, n)); });
    for (const auto& g : seen) df[g]++;
  }
  auto idf = [&](const char* p, std::size_t n) {
    auto it = df.find(std::string(p, n));
    std::size_t d = it == df.end() ? 0 : it->second;
    return std::log((1.0 + static_cast<double>(n_train)) / (1.0 + static_cast<double>(d))) + 1.0;
  };

  const std::uint64_t basis = 0xcbf29ce484222325ULL ^ derive_seed(seed, 0x5eed);
  PairEmbeddingSet set;
  set.intent_id = 0;
  set.vectors = DenseMatrix(pairs.size(), dim);
  std::vector<std::uint8_t> empty_flags(pairs.size(), 0);
  parallel_for(pairs.size(), [&](std::size_t i) {
    double* row = set.vectors.row(i);
    bool any = false;
    each_gram(texts[i], [&](const char* p, std::size_t n) {
      any = true;
      std::uint64_t h = fnv1a64(p, n, basis);
      std::size_t idx = static_cast<std::size_t>(h % dim);
      double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
      row[idx] += sign * idf(p, n);
    });
    if (!any) {
      empty_flags[i] = 1;
      return;
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < dim; ++c) norm += row[c] * row[c];
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (std::size_t c = 0; c < dim; ++c) row[c] = quantize_f32(row[c] / norm);
  });
  if (warnings)
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (empty_flags[i]) warnings->add("empty-serialization", "pair " + std::to_string(i) + " embeds to the zero vector");
  set.vectors.require_finite("embed_lexical");
  return set;
}

// --- Binary embedding format -----------------------------------------------------

// Matrix file: 16-byte header (magic "MIEB", version, dim, rows; unsigned
// 32-bit little-endian) then rows of 32-bit little-endian IEEE-754 floats in
// pair_id order. A sidecar .idx file lists pair_ids in row order. The manifest
// JSON names one matrix file per intent.
namespace embfile {

constexpr char kMagic[4] = {'M', 'I', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32(const std::string& in, std::size_t& off) {
  if (off + 4 > in.size()) throw DataError("embedding file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + static_cast<std::size_t>(i)])) << (8 * i);
  off += 4;
  return v;
}

}  // namespace embfile

inline void write_embedding_matrix(const std::filesystem::path& path, const PairEmbeddingSet& set) {
  std::string blob(embfile::kMagic, 4);
  embfile::put_u32(blob, embfile::kVersion);
  embfile::put_u32(blob, static_cast<std::uint32_t>(set.dim()));
  embfile::put_u32(blob, static_cast<std::uint32_t>(set.pair_count()));
  for (std::size_t r = 0; r < set.pair_count(); ++r) {
    for (std::size_t c = 0; c < set.dim(); ++c) {
      float f = static_cast<float>(set.vectors.at(r, c));
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      embfile::put_u32(blob, bits);
    }
  }
  write_text_file(path, blob);
  std::ostringstream idx;
  for (std::size_t r = 0; r < set.pair_count(); ++r) idx << r << '\n';
  write_text_file(path.string() + ".idx", idx.str());
}

inline PairEmbeddingSet read_embedding_matrix(const std::filesystem::path& path, int intent_id) {
  std::string blob = read_text_file(path);
  if (blob.size() < 16 || std::memcmp(blob.data(), embfile::kMagic, 4) != 0)
    throw DataError("'" + path.string() + "' is not an embedding matrix file");
  std::size_t off = 4;
  std::uint32_t version = embfile::get_u32(blob, off);
  if (version != embfile::kVersion)
    throw DataError("'" + path.string() + "' has unsupported version " + std::to_string(version));
  std::uint32_t dim = embfile::get_u32(blob, off);
  std::uint32_t rows = embfile::get_u32(blob, off);
  if (blob.size() != 16 + static_cast<std::size_t>(dim) * rows * 4)
    throw DataError("'" + path.string() + "' has wrong payload size");

  // Sidecar gives the pair_id of each row; realign to pair_id order.
  std::istringstream idx_in(read_text_file(path.string() + ".idx"));
  std::vector<std::uint64_t> row_pair_ids;
  std::string line;
  while (std::getline(idx_in, line)) {
    if (line.empty()) continue;
    row_pair_ids.push_back(std::stoull(line));
  }
  if (row_pair_ids.size() != rows)
    throw DataError("'" + path.string() + ".idx' lists " + std::to_string(row_pair_ids.size()) + " rows, matrix has " + std::to_string(rows));
  std::vector<bool> seen(rows, false);
  PairEmbeddingSet set;
  set.intent_id = intent_id;
  set.vectors = DenseMatrix(rows, dim);
  for (std::uint32_t r = 0; r < rows; ++r) {
    std::uint64_t pid = row_pair_ids[r];
    if (pid >= rows) throw DataError("'" + path.string() + ".idx' references pair_id " + std::to_string(pid) + " beyond row count " + std::to_string(rows));
    if (seen[pid]) throw DataError("'" + path.string() + ".idx' repeats pair_id " + std::to_string(pid));
    seen[pid] = true;
    for (std::uint32_t c = 0; c < dim; ++c) {
      std::uint32_t bits = embfile::get_u32(blob, off);
      float f;
      std::memcpy(&f, &bits, 4);
      if (!std::isfinite(f))
        throw DataError("non-finite value in '" + path.string() + "' at pair " + std::to_string(pid) + ", column " + std::to_string(c));
      set.vectors.at(pid, c) = static_cast<double>(f);
    }
  }
  for (std::uint32_t pid = 0; pid < rows; ++pid)
    if (!seen[pid]) throw DataError("'" + path.string() + "' is missing pair_id " + std::to_string(pid));
  return set;
}

// Writes the manifest plus one matrix file per set; returns the manifest path.
inline std::filesystem::path export_embeddings(const std::vector<PairEmbeddingSet>& sets,
                                               const std::filesystem::path& dir) {
  if (sets.empty()) throw DataError("export_embeddings: no sets");
  std::filesystem::create_directories(dir);
  ordered_json manifest;
  manifest["version"] = 1;
  manifest["P"] = sets.size();
  manifest["dim"] = sets[0].dim();
  manifest["pair_count"] = sets[0].pair_count();
  ordered_json files = ordered_json::array();
  for (std::size_t p = 0; p < sets.size(); ++p) {
    if (sets[p].pair_count() != sets[0].pair_count())
      throw DataError("export_embeddings: sets cover different pair counts");
    std::string name = "intent_" + std::to_string(p) + ".emb";
    write_embedding_matrix(dir / name, sets[p]);
    files.push_back(name);
  }
  manifest["files"] = std::move(files);
  std::filesystem::path manifest_path = dir / "embeddings.json";
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

// Reads every per-intent matrix named by a manifest, with validation of
// dimensions, pair coverage, and finiteness.
inline std::vector<PairEmbeddingSet> import_embeddings(const std::filesystem::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const std::exception& e) {
    throw DataError("bad embedding manifest '" + manifest_path.string() + "': " + e.what());
  }
  for (const char* key : {"version", "P", "dim", "pair_count", "files"})
    if (!manifest.contains(key)) throw DataError("embedding manifest lacks key '" + std::string(key) + "'");
  std::size_t p_count = manifest.at("P").get<std::size_t>();
  std::size_t dim = manifest.at("dim").get<std::size_t>();
  std::size_t pair_count = manifest.at("pair_count").get<std::size_t>();
  const auto& files = manifest.at("files");
  if (files.size() != p_count)
    throw DataError("embedding manifest P=" + std::to_string(p_count) + " but lists " + std::to_string(files.size()) + " files");
  std::filesystem::path dir = manifest_path.parent_path();
  std::vector<PairEmbeddingSet> sets;
  for (std::size_t p = 0; p < p_count; ++p) {
    PairEmbeddingSet set = read_embedding_matrix(dir / files[p].get<std::string>(), static_cast<int>(p));
    if (set.dim() != dim)
      throw DataError("intent " + std::to_string(p) + " matrix dim " + std::to_string(set.dim()) + " != manifest dim " + std::to_string(dim));
    if (set.pair_count() != pair_count)
      throw DataError("intent " + std::to_string(p) + " matrix covers " + std::to_string(set.pair_count()) + " pairs, manifest says " + std::to_string(pair_count));
    sets.push_back(std::move(set));
  }
  return sets;
}

}  // namespace mier
