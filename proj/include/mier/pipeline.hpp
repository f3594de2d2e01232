#pragma once

// End-to-end orchestration: a single JSON config drives bench -> embed ->
// baselines -> graph -> flexer -> eval -> report. Stages communicate through
// files only, are cached by content-hash signatures, and a run manifest
// records every produced artifact with its hash.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mier/benchmark.hpp"
#include "mier/common.hpp"
#include "mier/core.hpp"
#include "mier/embedding.hpp"
#include "mier/flexer.hpp"
#include "mier/intent_graph.hpp"
#include "mier/io.hpp"
#include "mier/matchers.hpp"
#include "mier/metrics.hpp"
#include "mier/rules_config.hpp"

namespace mier {

// --- Config ---------------------------------------------------------------

namespace cfgkey {
inline const json& require(const json& j, const std::string& key, const std::string& context) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError("config: missing key '" + (context.empty() ? key : context + "." + key) + "'");
  return j.at(key);
}
}  // namespace cfgkey

struct PipelineConfig {
  std::uint64_t seed = 1;

  std::string data_mode;  // "synthetic" or "files"
  std::size_t synth_records = 0;
  std::size_t synth_intents = 0;
  std::filesystem::path records_file, pairs_file, labels_file, intents_file, rules_file;
  std::vector<double> split_ratios = {3, 1, 1};

  std::string embed_mode = "lexical";  // or "import"
  std::size_t embed_dim = 256;
  std::filesystem::path import_manifest;

  std::size_t baseline_hidden_dim = 128;
  TrainHyper baseline_hyper;
  std::size_t multilabel_branch_dim = 128;

  std::size_t flexer_h1 = 100;
  int flexer_k = 4;
  int flexer_layers = 2;
  TrainHyper flexer_hyper;
  std::optional<std::size_t> project_dim;

  std::string eval_baseline = "in-parallel";
};

inline TrainHyper parse_hyper(const json& j, std::uint64_t seed, const std::string& context) {
  TrainHyper h;
  h.seed = seed;
  if (j.contains("learning_rate")) h.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("weight_decay")) h.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("epochs")) h.epochs = j.at("epochs").get<int>();
  try {
    h.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config: " + context + ": " + e.what());
  }
  return h;
}

inline PipelineConfig parse_pipeline_config(const json& j, const std::filesystem::path& base_dir) {
  using cfgkey::require;
  PipelineConfig cfg;
  cfg.seed = require(j, "seed", "").get<std::uint64_t>();

  const json& data = require(j, "data", "");
  cfg.data_mode = require(data, "mode", "data").get<std::string>();
  if (cfg.data_mode == "synthetic") {
    const json& synth = require(data, "synthetic", "data");
    cfg.synth_records = require(synth, "n_records", "data.synthetic").get<std::size_t>();
    cfg.synth_intents = require(synth, "intents", "data.synthetic").get<std::size_t>();
  } else if (cfg.data_mode == "files") {
    const json& files = require(data, "files", "data");
    cfg.records_file = base_dir / require(files, "records", "data.files").get<std::string>();
    if (files.contains("pairs")) cfg.pairs_file = base_dir / files.at("pairs").get<std::string>();
    if (files.contains("labels")) cfg.labels_file = base_dir / files.at("labels").get<std::string>();
    if (files.contains("intents")) cfg.intents_file = base_dir / files.at("intents").get<std::string>();
    if (files.contains("rules")) cfg.rules_file = base_dir / files.at("rules").get<std::string>();
    bool have_labels = !cfg.labels_file.empty() && !cfg.pairs_file.empty();
    bool have_rules = !cfg.rules_file.empty();
    if (!have_labels && !have_rules)
      throw ConfigError("config: data.files needs either pairs+labels or a rules file");
  } else {
    throw ConfigError("config: data.mode must be 'synthetic' or 'files'");
  }
  if (data.contains("split_ratios")) {
    cfg.split_ratios = data.at("split_ratios").get<std::vector<double>>();
    if (cfg.split_ratios.size() != 3) throw ConfigError("config: data.split_ratios needs 3 entries");
  }

  if (j.contains("embedding")) {
    const json& emb = j.at("embedding");
    if (emb.contains("mode")) cfg.embed_mode = emb.at("mode").get<std::string>();
    if (emb.contains("dim")) cfg.embed_dim = emb.at("dim").get<std::size_t>();
    if (cfg.embed_mode == "import")
      cfg.import_manifest = base_dir / require(emb, "manifest", "embedding").get<std::string>();
    else if (cfg.embed_mode != "lexical")
      throw ConfigError("config: embedding.mode must be 'lexical' or 'import'");
  }
  if (cfg.embed_dim < 16) throw ConfigError("config: embedding.dim must be >= 16");

  const json empty = json::object();
  const json& base = j.contains("baselines") ? j.at("baselines") : empty;
  if (base.contains("hidden_dim")) cfg.baseline_hidden_dim = base.at("hidden_dim").get<std::size_t>();
  if (base.contains("branch_dim")) cfg.multilabel_branch_dim = base.at("branch_dim").get<std::size_t>();
  cfg.baseline_hyper = parse_hyper(base.contains("hyper") ? base.at("hyper") : empty, cfg.seed, "baselines.hyper");

  const json& flex = j.contains("flexer") ? j.at("flexer") : empty;
  if (flex.contains("h1")) cfg.flexer_h1 = flex.at("h1").get<std::size_t>();
  if (flex.contains("k")) cfg.flexer_k = flex.at("k").get<int>();
  if (flex.contains("conv_layers")) cfg.flexer_layers = flex.at("conv_layers").get<int>();
  if (flex.contains("project_dim")) cfg.project_dim = flex.at("project_dim").get<std::size_t>();
  cfg.flexer_hyper = parse_hyper(flex.contains("hyper") ? flex.at("hyper") : empty, cfg.seed, "flexer.hyper");
  {
    FlexerTrainConfig probe;
    probe.h1 = cfg.flexer_h1;
    probe.conv_layers = cfg.flexer_layers;
    probe.hyper = cfg.flexer_hyper;
    probe.project_dim = cfg.project_dim;
    try {
      probe.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config: flexer: ") + e.what());
    }
  }
  if (cfg.flexer_k < 0) throw ConfigError("config: flexer.k must be >= 0");

  if (j.contains("eval") && j.at("eval").contains("baseline"))
    cfg.eval_baseline = j.at("eval").at("baseline").get<std::string>();
  return cfg;
}

// --- Prediction files -------------------------------------------------------

// JSON-lines, one row per pair: {"pair_id", "labels": [P], "scores": [P]}.
inline void write_predictions_jsonl(const std::filesystem::path& path,
                                    const std::vector<std::vector<std::uint8_t>>& labels_by_intent,
                                    const std::vector<std::vector<double>>& scores_by_intent) {
  const std::size_t p_count = labels_by_intent.size();
  if (p_count == 0) throw DataError("write_predictions: no intents");
  const std::size_t n = labels_by_intent[0].size();
  std::ostringstream out;
  for (std::size_t i = 0; i < n; ++i) {
    ordered_json j;
    j["pair_id"] = i;
    std::vector<int> labels(p_count);
    std::vector<double> scores(p_count);
    for (std::size_t p = 0; p < p_count; ++p) {
      labels[p] = labels_by_intent[p][i];
      scores[p] = scores_by_intent[p][i];
    }
    j["labels"] = labels;
    j["scores"] = scores;
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

struct LoadedPredictions {
  std::vector<Resolution> resolutions;              // per intent
  std::vector<std::vector<double>> scores_by_intent;
};

inline LoadedPredictions read_predictions_jsonl(const std::filesystem::path& path, std::size_t n_pairs,
                                                std::size_t p_count) {
  std::istringstream in(read_text_file(path));
  LoadedPredictions out;
  out.resolutions.resize(p_count);
  for (std::size_t p = 0; p < p_count; ++p) out.resolutions[p].intent_id = static_cast<int>(p);
  out.scores_by_intent.assign(p_count, std::vector<double>(n_pairs, 0.0));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    std::size_t id = j.at("pair_id").get<std::size_t>();
    if (id >= n_pairs) throw DataError(path.string() + ": pair_id " + std::to_string(id) + " out of range");
    const auto& labels = j.at("labels");
    if (labels.size() != p_count) throw DataError(path.string() + ": wrong intent count at pair " + std::to_string(id));
    for (std::size_t p = 0; p < p_count; ++p) {
      if (labels.at(p).get<int>()) out.resolutions[p].matched.push_back(static_cast<PairId>(id));
      if (j.contains("scores")) out.scores_by_intent[p][id] = j.at("scores").at(p).get<double>();
    }
    rows++;
  }
  if (rows != n_pairs)
    throw DataError(path.string() + ": holds " + std::to_string(rows) + " rows, need " + std::to_string(n_pairs));
  for (auto& r : out.resolutions) r.canonicalize();
  return out;
}

// --- Stage cache -----------------------------------------------------------------

namespace stage {

inline std::uint64_t dir_signature_hash(const std::string& stage_name, const std::string& config_blob,
                                        const std::vector<std::uint64_t>& input_hashes) {
  std::uint64_t h = fnv1a64(stage_name);
  h = fnv1a64(config_blob, h);
  for (std::uint64_t x : input_hashes) h = fnv1a64(&x, sizeof(x), h);
  return h;
}

inline bool is_cached(const std::filesystem::path& dir, std::uint64_t signature) {
  std::filesystem::path meta = dir / ".stage.json";
  if (!std::filesystem::exists(meta)) return false;
  try {
    json j = json::parse(read_text_file(meta));
    if (j.at("signature").get<std::string>() != hash_hex(signature)) return false;
    for (const auto& e : j.at("outputs")) {
      std::filesystem::path f = dir / e.at("file").get<std::string>();
      if (!std::filesystem::exists(f)) return false;
      if (hash_hex(file_content_hash(f)) != e.at("hash").get<std::string>()) return false;
    }
    return true;
  } catch (...) {
    return false;
  }
}

inline ordered_json commit(const std::filesystem::path& dir, std::uint64_t signature,
                           const std::vector<std::filesystem::path>& outputs) {
  ordered_json meta;
  meta["signature"] = hash_hex(signature);
  ordered_json outs = ordered_json::array();
  for (const auto& f : outputs) {
    ordered_json e;
    e["file"] = std::filesystem::relative(f, dir).string();
    e["hash"] = hash_hex(file_content_hash(f));
    outs.push_back(std::move(e));
  }
  meta["outputs"] = outs;
  write_text_file(dir / ".stage.json", meta.dump(2) + "\n");
  return meta;
}

}  // namespace stage

// --- Pipeline ---------------------------------------------------------------------

struct PipelineResult {
  std::filesystem::path run_dir;
  std::filesystem::path report_path;
  nlohmann::ordered_json report;
  nlohmann::ordered_json manifest;
};

// Executes every stage under run_dir, reusing cached stage outputs whose
// signatures match. Halts with the failing stage named in the error.
inline PipelineResult pipeline_run(const json& config_json, const std::filesystem::path& run_dir,
                                   const std::filesystem::path& config_base_dir, Warnings* warnings = nullptr) {
  PipelineConfig cfg = parse_pipeline_config(config_json, config_base_dir);
  std::filesystem::create_directories(run_dir);

  ordered_json manifest;
  manifest["config_hash"] = hash_hex(fnv1a64(config_json.dump()));
  manifest["seed"] = cfg.seed;
  manifest["thread_count"] = thread_count();
  manifest["projected_layers"] = cfg.project_dim.has_value();
  ordered_json stages_json = ordered_json::array();
  ordered_json fingerprints = ordered_json::object();

  auto run_stage = [&](const std::string& name, const std::string& config_blob,
                       const std::vector<std::uint64_t>& input_hashes,
                       const std::function<std::vector<std::filesystem::path>(const std::filesystem::path&)>& body) {
    std::filesystem::path dir = run_dir / name;
    std::uint64_t sig = stage::dir_signature_hash(name, config_blob, input_hashes);
    ordered_json entry;
    entry["name"] = name;
    entry["signature"] = hash_hex(sig);
    auto t0 = std::chrono::steady_clock::now();
    bool cached = stage::is_cached(dir, sig);
    if (!cached) {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
      std::filesystem::create_directories(dir);
      std::vector<std::filesystem::path> outputs;
      try {
        outputs = body(dir);
      } catch (const ConfigError&) {
        throw;
      } catch (const NumericError& e) {
        throw NumericError("stage '" + name + "': " + e.what());
      } catch (const std::exception& e) {
        throw DataError("stage '" + name + "': " + e.what());
      }
      entry["outputs"] = stage::commit(dir, sig, outputs).at("outputs");
    } else {
      entry["outputs"] = json::parse(read_text_file(dir / ".stage.json")).at("outputs");
    }
    entry["cached"] = cached;
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stages_json.push_back(std::move(entry));
    return dir;
  };

  // -- bench: records, pairs, labels, intents ------------------------------
  std::string bench_blob = config_json.contains("data") ? config_json.at("data").dump() : "";
  bench_blob += ":" + std::to_string(cfg.seed);
  std::vector<std::uint64_t> bench_inputs;
  if (cfg.data_mode == "files") {
    bench_inputs.push_back(file_content_hash(cfg.records_file));
    for (const auto& f : {cfg.pairs_file, cfg.labels_file, cfg.intents_file, cfg.rules_file})
      if (!f.empty() && std::filesystem::exists(f)) bench_inputs.push_back(file_content_hash(f));
  }
  std::filesystem::path bench_dir = run_stage("bench", bench_blob, bench_inputs, [&](const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> outputs;
    if (cfg.data_mode == "synthetic") {
      SyntheticBenchmark b = generate_synthetic(cfg.synth_records, cfg.synth_intents, cfg.seed, warnings);
      write_records_jsonl(dir / "records.jsonl", b.records);
      write_pairs_jsonl(dir / "pairs.jsonl", b.pairs);
      write_labels_jsonl(dir / "labels.jsonl", b.labels);
      write_intent_specs(dir / "intents.json", b.intents);
      json mapping = json::array();
      for (const auto& m : b.mapping.by_intent) mapping.push_back(m);
      write_text_file(dir / "entity_mapping.json", mapping.dump() + "\n");
      outputs = {dir / "records.jsonl", dir / "pairs.jsonl", dir / "labels.jsonl", dir / "intents.json",
                 dir / "entity_mapping.json"};
    } else {
      Dataset records = read_records(cfg.records_file);
      CandidatePairSet pairs;
      IntentLabelMatrix labels;
      std::vector<IntentSpec> specs;
      if (!cfg.rules_file.empty()) {
        RulesConfig rules = parse_rules_config(cfg.rules_file);
        pairs = block_qgram(records, rules.blocking, warnings);
        labels = IntentLabelMatrix(pairs.size(), rules.intents.size());
        for (std::size_t p = 0; p < rules.intents.size(); ++p) {
          auto col = label_intent(pairs, records, rules.intents[p].second, warnings);
          for (PairId id = 0; id < pairs.size(); ++id) labels.set_label(id, p, col[id]);
          IntentSpec spec;
          spec.intent_id = static_cast<int>(p);
          spec.name = rules.intents[p].first;
          specs.push_back(spec);
        }
        auto splits = assign_splits(pairs.size(), cfg.split_ratios, derive_seed(cfg.seed, 42));
        for (PairId id = 0; id < pairs.size(); ++id) labels.set_split(id, splits[id]);
      } else {
        pairs = read_pairs_jsonl(cfg.pairs_file);
        labels = read_labels_jsonl(cfg.labels_file);
        if (labels.pair_count() != pairs.size()) throw DataError("labels do not cover the candidate pair set");
        if (!cfg.intents_file.empty()) specs = read_intent_specs(cfg.intents_file);
        else
          for (std::size_t p = 0; p < labels.intent_count(); ++p) {
            IntentSpec s;
            s.intent_id = static_cast<int>(p);
            s.name = "intent" + std::to_string(p);
            specs.push_back(s);
          }
      }
      write_records_jsonl(dir / "records.jsonl", records);
      write_pairs_jsonl(dir / "pairs.jsonl", pairs);
      write_labels_jsonl(dir / "labels.jsonl", labels);
      write_intent_specs(dir / "intents.json", specs);
      outputs = {dir / "records.jsonl", dir / "pairs.jsonl", dir / "labels.jsonl", dir / "intents.json"};
    }
    return outputs;
  });
  for (const char* f : {"records.jsonl", "pairs.jsonl", "labels.jsonl"})
    fingerprints[f] = hash_hex(file_content_hash(bench_dir / f));

  Dataset records = read_records_jsonl(bench_dir / "records.jsonl");
  CandidatePairSet pairs = read_pairs_jsonl(bench_dir / "pairs.jsonl");
  IntentLabelMatrix labels = read_labels_jsonl(bench_dir / "labels.jsonl");
  std::vector<IntentSpec> specs = read_intent_specs(bench_dir / "intents.json");
  if (labels.intent_count() != specs.size()) throw DataError("intents.json does not match the label matrix");
  const std::size_t p_count = labels.intent_count();

  // -- embed ----------------------------------------------------------------
  std::string embed_blob = cfg.embed_mode + ":" + std::to_string(cfg.embed_dim) + ":" + std::to_string(cfg.seed);
  std::vector<std::uint64_t> embed_inputs = {file_content_hash(bench_dir / "pairs.jsonl"),
                                             file_content_hash(bench_dir / "records.jsonl"),
                                             file_content_hash(bench_dir / "labels.jsonl")};
  if (cfg.embed_mode == "import") embed_inputs.push_back(file_content_hash(cfg.import_manifest));
  std::filesystem::path embed_dir = run_stage("embed", embed_blob, embed_inputs, [&](const std::filesystem::path& dir) {
    std::vector<PairEmbeddingSet> sets;
    if (cfg.embed_mode == "lexical") {
      std::vector<Split> splits(pairs.size());
      for (PairId id = 0; id < pairs.size(); ++id) splits[id] = labels.split(id);
      sets.push_back(embed_lexical(pairs, records, cfg.embed_dim, cfg.seed, splits, warnings));
    } else {
      sets = import_embeddings(cfg.import_manifest);
      for (auto& s : sets) s.require_valid(pairs.size());
    }
    export_embeddings(sets, dir);
    std::vector<std::filesystem::path> outputs = {dir / "embeddings.json"};
    for (std::size_t p = 0; p < sets.size(); ++p) {
      outputs.push_back(dir / ("intent_" + std::to_string(p) + ".emb"));
      outputs.push_back(dir / ("intent_" + std::to_string(p) + ".emb.idx"));
    }
    return outputs;
  });

  // -- in-parallel baseline (+ naive + representations) ----------------------
  std::string base_blob = std::to_string(cfg.baseline_hidden_dim) + ":" + std::to_string(cfg.baseline_hyper.learning_rate) +
                          ":" + std::to_string(cfg.baseline_hyper.weight_decay) + ":" +
                          std::to_string(cfg.baseline_hyper.epochs) + ":" + std::to_string(cfg.seed);
  std::vector<std::uint64_t> base_inputs = {file_content_hash(embed_dir / "embeddings.json"),
                                            file_content_hash(bench_dir / "labels.jsonl")};
  std::filesystem::path inpar_dir =
      run_stage("baseline_in_parallel", base_blob, base_inputs, [&](const std::filesystem::path& dir) {
        std::vector<PairEmbeddingSet> inputs = import_embeddings(embed_dir / "embeddings.json");
        for (auto& s : inputs) s.require_valid(pairs.size());
        auto trained = train_in_parallel(inputs, labels, cfg.baseline_hyper, cfg.baseline_hidden_dim);
        std::vector<std::vector<std::uint8_t>> pred_labels(p_count);
        std::vector<std::vector<double>> pred_scores(p_count);
        for (std::size_t p = 0; p < p_count; ++p) {
          const PairEmbeddingSet& in = inputs.size() == 1 ? inputs[0] : inputs[p];
          BinaryPrediction bp = predict_binary(trained[p].model, in.vectors);
          pred_labels[p] = std::move(bp.labels);
          pred_scores[p] = std::move(bp.scores);
          save_binary_matcher(dir / ("matcher_" + std::to_string(p) + ".ckpt"), trained[p].model, p);
        }
        write_predictions_jsonl(dir / "in_parallel.jsonl", pred_labels, pred_scores);
        // Naive: the equivalence matcher's resolution copied to every intent.
        std::vector<std::vector<std::uint8_t>> naive_labels(p_count, pred_labels[0]);
        std::vector<std::vector<double>> naive_scores(p_count, pred_scores[0]);
        write_predictions_jsonl(dir / "naive.jsonl", naive_labels, naive_scores);
        auto reps = extract_representations(trained, inputs);
        export_embeddings(reps, dir / "representations");
        std::vector<std::filesystem::path> outputs = {dir / "in_parallel.jsonl", dir / "naive.jsonl",
                                                      dir / "representations" / "embeddings.json"};
        for (std::size_t p = 0; p < p_count; ++p) {
          outputs.push_back(dir / ("matcher_" + std::to_string(p) + ".ckpt"));
          outputs.push_back(dir / "representations" / ("intent_" + std::to_string(p) + ".emb"));
          outputs.push_back(dir / "representations" / ("intent_" + std::to_string(p) + ".emb.idx"));
        }
        return outputs;
      });

  // -- multi-label baseline ----------------------------------------------------
  std::string ml_blob = base_blob + ":" + std::to_string(cfg.multilabel_branch_dim);
  std::filesystem::path ml_dir =
      run_stage("baseline_multi_label", ml_blob, base_inputs, [&](const std::filesystem::path& dir) {
        std::vector<PairEmbeddingSet> inputs = import_embeddings(embed_dir / "embeddings.json");
        const PairEmbeddingSet& shared = inputs[0];
        auto trained = train_multilabel(shared, labels, cfg.baseline_hyper, cfg.baseline_hidden_dim,
                                        cfg.multilabel_branch_dim);
        MultiLabelPrediction mp = predict_multilabel(trained.model, shared.vectors);
        std::vector<std::vector<std::uint8_t>> pred_labels(p_count, std::vector<std::uint8_t>(pairs.size()));
        std::vector<std::vector<double>> pred_scores(p_count, std::vector<double>(pairs.size()));
        for (std::size_t i = 0; i < pairs.size(); ++i)
          for (std::size_t p = 0; p < p_count; ++p) {
            pred_labels[p][i] = mp.labels[i][p];
            pred_scores[p][i] = mp.scores[i][p];
          }
        write_predictions_jsonl(dir / "multi_label.jsonl", pred_labels, pred_scores);
        save_multilabel_matcher(dir / "multi_label.ckpt", trained.model);
        return std::vector<std::filesystem::path>{dir / "multi_label.jsonl", dir / "multi_label.ckpt"};
      });

  // -- graph (depends on representations and k only) -----------------------------
  std::string graph_blob = "k=" + std::to_string(cfg.flexer_k) +
                           (cfg.project_dim ? ":proj=" + std::to_string(*cfg.project_dim) : "");
  std::vector<std::uint64_t> graph_inputs = {file_content_hash(inpar_dir / "representations" / "embeddings.json")};
  std::filesystem::path graph_dir = run_stage("graph", graph_blob, graph_inputs, [&](const std::filesystem::path& dir) {
    auto reps = import_embeddings(inpar_dir / "representations" / "embeddings.json");
    for (auto& s : reps) s.require_valid(pairs.size());
    GraphConfig gcfg;
    gcfg.k = cfg.flexer_k;
    gcfg.project_dim = cfg.project_dim;
    MultiplexGraph g = build_graph(reps, gcfg, warnings);
    save_graph(dir, g);
    std::vector<std::filesystem::path> outputs = {dir / "graph.json", dir / "adjacency.bin"};
    for (std::size_t p = 0; p < p_count; ++p) {
      outputs.push_back(dir / ("features_" + std::to_string(p) + ".emb"));
      outputs.push_back(dir / ("features_" + std::to_string(p) + ".emb.idx"));
    }
    return outputs;
  });

  // -- flexer ---------------------------------------------------------------------
  std::string flexer_blob = std::to_string(cfg.flexer_h1) + ":" + std::to_string(cfg.flexer_layers) + ":" +
                            std::to_string(cfg.flexer_hyper.learning_rate) + ":" +
                            std::to_string(cfg.flexer_hyper.weight_decay) + ":" +
                            std::to_string(cfg.flexer_hyper.epochs) + ":" + std::to_string(cfg.seed);
  std::vector<std::uint64_t> flexer_inputs = {file_content_hash(graph_dir / "graph.json"),
                                              file_content_hash(graph_dir / "adjacency.bin"),
                                              file_content_hash(bench_dir / "labels.jsonl")};
  std::filesystem::path flexer_dir =
      run_stage("flexer", flexer_blob, flexer_inputs, [&](const std::filesystem::path& dir) {
        MultiplexGraph g = load_graph(graph_dir);
        std::vector<std::vector<std::uint8_t>> pred_labels(p_count);
        std::vector<std::vector<double>> pred_scores(p_count);
        std::vector<FlexerModel> models(p_count);
        std::vector<std::string> errors(p_count);
        parallel_for(p_count, [&](std::size_t target) {
          try {
            FlexerTrainConfig tc;
            tc.target_intent = static_cast<int>(target);
            tc.hyper = cfg.flexer_hyper;
            tc.h1 = cfg.flexer_h1;
            tc.conv_layers = cfg.flexer_layers;
            tc.project_dim = cfg.project_dim;
            FlexerTrainResult trained = train_flexer(g, labels, tc);
            FlexerPrediction pred = flexer_predict_all(trained.model, g, static_cast<int>(target));
            pred_labels[target] = std::move(pred.labels);
            pred_scores[target] = std::move(pred.scores);
            models[target] = std::move(trained.model);
          } catch (const std::exception& e) {
            errors[target] = e.what();
          }
        });
        for (const auto& e : errors)
          if (!e.empty()) throw DataError(e);
        write_predictions_jsonl(dir / "flexer.jsonl", pred_labels, pred_scores);
        std::vector<std::filesystem::path> outputs = {dir / "flexer.jsonl"};
        for (std::size_t p = 0; p < p_count; ++p) {
          save_flexer(dir / ("flexer_" + std::to_string(p) + ".ckpt"), models[p], static_cast<int>(p));
          outputs.push_back(dir / ("flexer_" + std::to_string(p) + ".ckpt"));
        }
        return outputs;
      });

  // -- eval -----------------------------------------------------------------------
  std::string eval_blob = cfg.eval_baseline;
  std::vector<std::uint64_t> eval_inputs = {
      file_content_hash(inpar_dir / "in_parallel.jsonl"), file_content_hash(inpar_dir / "naive.jsonl"),
      file_content_hash(ml_dir / "multi_label.jsonl"), file_content_hash(flexer_dir / "flexer.jsonl"),
      file_content_hash(bench_dir / "labels.jsonl"), file_content_hash(bench_dir / "intents.json")};
  std::filesystem::path eval_dir = run_stage("eval", eval_blob, eval_inputs, [&](const std::filesystem::path& dir) {
    std::vector<MethodPredictions> methods;
    auto add = [&](const std::string& name, const std::filesystem::path& file) {
      LoadedPredictions lp = read_predictions_jsonl(file, pairs.size(), p_count);
      methods.push_back({name, std::move(lp.resolutions)});
    };
    add("naive", inpar_dir / "naive.jsonl");
    add("in-parallel", inpar_dir / "in_parallel.jsonl");
    add("multi-label", ml_dir / "multi_label.jsonl");
    add("flexer", flexer_dir / "flexer.jsonl");
    ordered_json report = build_report(methods, labels, cfg.eval_baseline, &specs, Split::Test, warnings);
    write_text_file(dir / "report.json", report.dump(2) + "\n");
    write_text_file(dir / "report.txt", render_report(report));
    return std::vector<std::filesystem::path>{dir / "report.json", dir / "report.txt"};
  });

  PipelineResult result;
  result.run_dir = run_dir;
  result.report_path = eval_dir / "report.json";
  result.report = nlohmann::ordered_json::parse(read_text_file(result.report_path));
  manifest["dataset_fingerprints"] = std::move(fingerprints);
  ordered_json hyper;
  hyper["embed_dim"] = cfg.embed_dim;
  hyper["baseline_hidden_dim"] = cfg.baseline_hidden_dim;
  hyper["flexer_h1"] = cfg.flexer_h1;
  hyper["flexer_k"] = cfg.flexer_k;
  hyper["flexer_conv_layers"] = cfg.flexer_layers;
  hyper["epochs_baseline"] = cfg.baseline_hyper.epochs;
  hyper["epochs_flexer"] = cfg.flexer_hyper.epochs;
  manifest["hyperparameters"] = std::move(hyper);
  manifest["stages"] = std::move(stages_json);
  write_text_file(run_dir / "manifest.json", manifest.dump(2) + "\n");
  result.manifest = std::move(manifest);
  return result;
}

}  // namespace mier
