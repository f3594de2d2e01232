// Command-line front end: bench, embed, train-baseline, graph, train-flexer,
// sweep, eval, report, and the end-to-end pipeline.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mier/benchmark.hpp"
#include "mier/common.hpp"
#include "mier/core.hpp"
#include "mier/embedding.hpp"
#include "mier/flexer.hpp"
#include "mier/intent_graph.hpp"
#include "mier/io.hpp"
#include "mier/matchers.hpp"
#include "mier/metrics.hpp"
#include "mier/pipeline.hpp"
#include "mier/rules_config.hpp"

namespace fs = std::filesystem;
using namespace mier;

namespace {

void print_warnings(const Warnings& w) {
  for (const auto& [key, count] : w.counts())
    std::cerr << "warning: " << key << " (" << count << "x)\n";
}

std::vector<Split> splits_of(const IntentLabelMatrix& labels) {
  std::vector<Split> out(labels.pair_count());
  for (PairId id = 0; id < labels.pair_count(); ++id) out[id] = labels.split(id);
  return out;
}

template <typename T>
std::vector<T> parse_grid(const std::string& csv) {
  std::vector<T> out;
  std::string cur;
  std::istringstream in(csv);
  while (std::getline(in, cur, ','))
    if (!cur.empty()) out.push_back(static_cast<T>(std::stoll(cur)));
  if (out.empty()) throw ConfigError("empty grid '" + csv + "'");
  return out;
}

struct BenchFiles {
  Dataset records;
  CandidatePairSet pairs;
  IntentLabelMatrix labels;
};

BenchFiles load_bench(const fs::path& records_file, const fs::path& pairs_file, const fs::path& labels_file) {
  BenchFiles b{read_records(records_file), read_pairs_jsonl(pairs_file), read_labels_jsonl(labels_file)};
  if (b.labels.pair_count() != b.pairs.size()) throw DataError("labels do not cover the candidate pair set");
  return b;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"multi-intent entity resolution: benchmarks, matchers, intent graphs, and evaluation"};
  app.require_subcommand(1);
  Warnings warnings;

  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (default: hardware, env MIER_THREADS)");

  // --- bench ---------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "construct or profile benchmarks");
  bench->require_subcommand(1);

  auto* bench_build = bench->add_subcommand("build", "block, label by rules, and split a record file");
  std::string bb_records, bb_rules, bb_out;
  std::uint64_t bb_seed = 1;
  bench_build->add_option("--records", bb_records, "records CSV or JSONL")->required();
  bench_build->add_option("--rules", bb_rules, "intent rule config")->required();
  bench_build->add_option("--out", bb_out, "output directory")->required();
  bench_build->add_option("--seed", bb_seed, "split seed");
  bench_build->callback([&]() {
    Dataset records = read_records(bb_records);
    RulesConfig rules = parse_rules_config(bb_rules);
    CandidatePairSet pairs = block_qgram(records, rules.blocking, &warnings);
    IntentLabelMatrix labels(pairs.size(), rules.intents.size());
    std::vector<IntentSpec> specs;
    for (std::size_t p = 0; p < rules.intents.size(); ++p) {
      auto col = label_intent(pairs, records, rules.intents[p].second, &warnings);
      for (PairId id = 0; id < pairs.size(); ++id) labels.set_label(id, p, col[id]);
      IntentSpec s;
      s.intent_id = static_cast<int>(p);
      s.name = rules.intents[p].first;
      specs.push_back(s);
    }
    auto splits = assign_splits(pairs.size(), {3, 1, 1}, bb_seed);
    for (PairId id = 0; id < pairs.size(); ++id) labels.set_split(id, splits[id]);
    fs::path out(bb_out);
    write_records_jsonl(out / "records.jsonl", records);
    write_pairs_jsonl(out / "pairs.jsonl", pairs);
    write_labels_jsonl(out / "labels.jsonl", labels);
    write_intent_specs(out / "intents.json", specs);
    std::cout << "wrote " << pairs.size() << " pairs, " << specs.size() << " intents to " << out.string() << "\n";
  });

  auto* bench_synth = bench->add_subcommand("synth", "generate the synthetic multi-intent benchmark");
  std::size_t bs_n = 400, bs_p = 3;
  std::uint64_t bs_seed = 1;
  std::string bs_out;
  bench_synth->add_option("--n", bs_n, "record count")->required();
  bench_synth->add_option("--intents", bs_p, "intent count P")->required();
  bench_synth->add_option("--seed", bs_seed, "generator seed");
  bench_synth->add_option("--out", bs_out, "output directory")->required();
  bench_synth->callback([&]() {
    SyntheticBenchmark b = generate_synthetic(bs_n, bs_p, bs_seed, &warnings);
    fs::path out(bs_out);
    write_records_jsonl(out / "records.jsonl", b.records);
    write_pairs_jsonl(out / "pairs.jsonl", b.pairs);
    write_labels_jsonl(out / "labels.jsonl", b.labels);
    write_intent_specs(out / "intents.json", b.intents);
    std::cout << "wrote " << b.pairs.size() << " pairs over " << b.records.size() << " records to " << out.string()
              << "\n";
  });

  auto* bench_profile = bench->add_subcommand("profile", "positive-label rates per intent and split");
  std::string bp_labels;
  bench_profile->add_option("--labels", bp_labels, "labels JSONL")->required();
  bench_profile->callback([&]() {
    IntentLabelMatrix labels = read_labels_jsonl(bp_labels);
    PositiveRateReport rep = positive_rate_report(labels);
    std::printf("%-8s %10s %10s %10s\n", "intent", "train", "valid", "test");
    for (std::size_t p = 0; p < labels.intent_count(); ++p)
      std::printf("%-8zu %9.1f%% %9.1f%% %9.1f%%\n", p, 100.0 * rep.fraction(p, Split::Train),
                  100.0 * rep.fraction(p, Split::Valid), 100.0 * rep.fraction(p, Split::Test));
  });

  // --- embed ---------------------------------------------------------------
  auto* embed = app.add_subcommand("embed", "lexical pair embeddings, or validate and re-export imported ones");
  std::string em_records, em_pairs, em_labels, em_import, em_out;
  std::size_t em_dim = 256;
  std::uint64_t em_seed = 1;
  embed->add_option("--records", em_records, "records file");
  embed->add_option("--pairs", em_pairs, "pairs JSONL")->required();
  embed->add_option("--labels", em_labels, "labels JSONL (train-split IDF)");
  embed->add_option("--import", em_import, "embedding manifest to import instead of the lexical embedder");
  embed->add_option("--dim", em_dim, "lexical vector length");
  embed->add_option("--seed", em_seed, "hash seed");
  embed->add_option("--out", em_out, "output directory")->required();
  embed->callback([&]() {
    CandidatePairSet pairs = read_pairs_jsonl(em_pairs);
    std::vector<PairEmbeddingSet> sets;
    if (!em_import.empty()) {
      sets = import_embeddings(em_import);
      for (auto& s : sets) s.require_valid(pairs.size());
    } else {
      if (em_records.empty() || em_labels.empty())
        throw ConfigError("lexical embedding needs --records and --labels");
      Dataset records = read_records(em_records);
      IntentLabelMatrix labels = read_labels_jsonl(em_labels);
      if (labels.pair_count() != pairs.size()) throw DataError("labels do not cover the candidate pair set");
      sets.push_back(embed_lexical(pairs, records, em_dim, em_seed, splits_of(labels), &warnings));
    }
    fs::path manifest = export_embeddings(sets, em_out);
    std::cout << "wrote " << sets.size() << " embedding set(s), dim " << sets[0].dim() << ", manifest "
              << manifest.string() << "\n";
  });

  // --- train-baseline --------------------------------------------------------
  auto* tb = app.add_subcommand("train-baseline", "train the in-parallel, multi-label, or naive baseline");
  std::string tb_mode, tb_emb, tb_labels, tb_out;
  std::size_t tb_hidden = 128, tb_branch = 128;
  TrainHyper tb_hyper;
  tb->add_option("--mode", tb_mode, "in-parallel | multi-label | naive")->required();
  tb->add_option("--embeddings", tb_emb, "embedding manifest")->required();
  tb->add_option("--labels", tb_labels, "labels JSONL")->required();
  tb->add_option("--out", tb_out, "output directory")->required();
  tb->add_option("--hidden", tb_hidden, "hidden dim r");
  tb->add_option("--branch", tb_branch, "multi-label branch dim");
  tb->add_option("--epochs", tb_hyper.epochs, "training epochs");
  tb->add_option("--lr", tb_hyper.learning_rate, "learning rate");
  tb->add_option("--weight-decay", tb_hyper.weight_decay, "L2 weight decay");
  tb->add_option("--seed", tb_hyper.seed, "training seed");
  tb->callback([&]() {
    IntentLabelMatrix labels = read_labels_jsonl(tb_labels);
    std::vector<PairEmbeddingSet> sets = import_embeddings(tb_emb);
    for (auto& s : sets) s.require_valid(labels.pair_count());
    const std::size_t p_count = labels.intent_count();
    fs::path out(tb_out);
    fs::create_directories(out);
    if (tb_mode == "in-parallel") {
      auto trained = train_in_parallel(sets, labels, tb_hyper, tb_hidden);
      std::vector<std::vector<std::uint8_t>> pl(p_count);
      std::vector<std::vector<double>> ps(p_count);
      for (std::size_t p = 0; p < p_count; ++p) {
        const PairEmbeddingSet& in = sets.size() == 1 ? sets[0] : sets[p];
        BinaryPrediction bp = predict_binary(trained[p].model, in.vectors);
        pl[p] = std::move(bp.labels);
        ps[p] = std::move(bp.scores);
        save_binary_matcher(out / ("matcher_" + std::to_string(p) + ".ckpt"), trained[p].model, p);
        std::cout << "intent " << p << ": best epoch " << trained[p].best_epoch << ", valid F1 "
                  << trained[p].best_val_f1 << "\n";
      }
      write_predictions_jsonl(out / "in_parallel.jsonl", pl, ps);
      export_embeddings(extract_representations(trained, sets), out / "representations");
    } else if (tb_mode == "multi-label") {
      auto trained = train_multilabel(sets[0], labels, tb_hyper, tb_hidden, tb_branch);
      MultiLabelPrediction mp = predict_multilabel(trained.model, sets[0].vectors);
      std::vector<std::vector<std::uint8_t>> pl(p_count, std::vector<std::uint8_t>(labels.pair_count()));
      std::vector<std::vector<double>> ps(p_count, std::vector<double>(labels.pair_count()));
      for (std::size_t i = 0; i < labels.pair_count(); ++i)
        for (std::size_t p = 0; p < p_count; ++p) {
          pl[p][i] = mp.labels[i][p];
          ps[p][i] = mp.scores[i][p];
        }
      write_predictions_jsonl(out / "multi_label.jsonl", pl, ps);
      save_multilabel_matcher(out / "multi_label.ckpt", trained.model);
      std::cout << "best epoch " << trained.best_epoch << ", mean valid F1 " << trained.best_val_f1 << "\n";
    } else if (tb_mode == "naive") {
      auto trained = train_binary_matcher(sets[0], labels, 0, tb_hyper, tb_hidden);
      BinaryPrediction bp = predict_binary(trained.model, sets[0].vectors);
      std::vector<std::vector<std::uint8_t>> pl(p_count, bp.labels);
      std::vector<std::vector<double>> ps(p_count, bp.scores);
      write_predictions_jsonl(out / "naive.jsonl", pl, ps);
      save_binary_matcher(out / "matcher_0.ckpt", trained.model, 0);
      std::cout << "equivalence matcher best epoch " << trained.best_epoch << ", valid F1 " << trained.best_val_f1
                << "\n";
    } else {
      throw ConfigError("unknown baseline mode '" + tb_mode + "'");
    }
  });

  // --- graph ------------------------------------------------------------------
  auto* graph_cmd = app.add_subcommand("graph", "build the multiplex intent graph");
  std::string g_emb, g_out;
  int g_k = 4;
  std::size_t g_project = 0;
  graph_cmd->add_option("--embeddings", g_emb, "per-intent embedding manifest")->required();
  graph_cmd->add_option("--k", g_k, "intra-layer nearest neighbors");
  graph_cmd->add_option("--project-dim", g_project, "learned projection dim for mixed-dim layers");
  graph_cmd->add_option("--out", g_out, "output directory")->required();
  graph_cmd->callback([&]() {
    std::vector<PairEmbeddingSet> sets = import_embeddings(g_emb);
    GraphConfig gcfg;
    gcfg.k = g_k;
    if (g_project > 0) gcfg.project_dim = g_project;
    MultiplexGraph g = build_graph(sets, gcfg, &warnings);
    save_graph(g_out, g);
    std::cout << "graph: " << g.node_count() << " nodes, " << g.inter_edge_count() << " inter edges, "
              << g.intra_edge_count() << " intra edges\n";
  });

  // --- train-flexer --------------------------------------------------------------
  auto* tf = app.add_subcommand("train-flexer", "train one target intent over the intent graph");
  std::string tf_graph, tf_labels, tf_out, tf_pred;
  FlexerTrainConfig tf_cfg;
  tf->add_option("--graph", tf_graph, "graph directory")->required();
  tf->add_option("--labels", tf_labels, "labels JSONL")->required();
  tf->add_option("--intent", tf_cfg.target_intent, "target intent")->required();
  tf->add_option("--h1", tf_cfg.h1, "first conv layer dim");
  tf->add_option("--layers", tf_cfg.conv_layers, "conv layer count (2 or 3)");
  tf->add_option("--epochs", tf_cfg.hyper.epochs, "training epochs");
  tf->add_option("--lr", tf_cfg.hyper.learning_rate, "learning rate");
  tf->add_option("--weight-decay", tf_cfg.hyper.weight_decay, "L2 weight decay");
  tf->add_option("--seed", tf_cfg.hyper.seed, "training seed");
  tf->add_option("--out", tf_out, "checkpoint path")->required();
  tf->add_option("--pred", tf_pred, "also write per-pair predictions JSONL");
  tf->callback([&]() {
    MultiplexGraph g = load_graph(tf_graph);
    IntentLabelMatrix labels = read_labels_jsonl(tf_labels);
    if (g.mixed_dims()) tf_cfg.project_dim = g.layer_dim(0);
    FlexerTrainResult trained = train_flexer(g, labels, tf_cfg);
    save_flexer(tf_out, trained.model, tf_cfg.target_intent);
    std::cout << "best epoch " << trained.best_epoch << ", valid F1 " << trained.best_val_f1 << "\n";
    if (!tf_pred.empty()) {
      FlexerPrediction pred = flexer_predict_all(trained.model, g, tf_cfg.target_intent);
      write_predictions_jsonl(tf_pred, {pred.labels}, {pred.scores});
    }
  });

  // --- sweep -----------------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "grid-search h1, k, and conv layers per intent");
  std::string sw_emb, sw_labels, sw_out, sw_grid = "default";
  std::string sw_h1, sw_k, sw_layers;
  TrainHyper sw_hyper;
  sw->add_option("--embeddings", sw_emb, "per-intent embedding manifest")->required();
  sw->add_option("--labels", sw_labels, "labels JSONL")->required();
  sw->add_option("--out", sw_out, "output directory")->required();
  sw->add_option("--grid", sw_grid, "'default' uses the full grid");
  sw->add_option("--h1-grid", sw_h1, "comma-separated h1 values");
  sw->add_option("--k-grid", sw_k, "comma-separated k values");
  sw->add_option("--layers-grid", sw_layers, "comma-separated conv layer counts");
  sw->add_option("--epochs", sw_hyper.epochs, "training epochs");
  sw->add_option("--seed", sw_hyper.seed, "training seed");
  sw->callback([&]() {
    std::vector<PairEmbeddingSet> sets = import_embeddings(sw_emb);
    IntentLabelMatrix labels = read_labels_jsonl(sw_labels);
    for (auto& s : sets) s.require_valid(labels.pair_count());
    SweepGrids grids;
    if (sw_grid != "default" && sw_grid != "custom") throw ConfigError("--grid must be 'default' or 'custom'");
    if (!sw_h1.empty()) grids.h1_grid = parse_grid<std::size_t>(sw_h1);
    if (!sw_k.empty()) grids.k_grid = parse_grid<int>(sw_k);
    if (!sw_layers.empty()) grids.layers_grid = parse_grid<int>(sw_layers);
    SweepReport rep = sweep(sets, labels, grids, sw_hyper, std::nullopt, &warnings);
    ordered_json out_json;
    ordered_json entries = ordered_json::array();
    for (const auto& e : rep.entries) {
      ordered_json ej;
      ej["intent"] = e.intent;
      ej["h1"] = e.h1;
      ej["k"] = e.k;
      ej["conv_layers"] = e.conv_layers;
      ej["val_f1"] = e.val_f1;
      ej["test_f1"] = e.test_f1;
      entries.push_back(std::move(ej));
    }
    out_json["entries"] = std::move(entries);
    ordered_json best = ordered_json::array();
    for (const auto& e : rep.best_per_intent) {
      ordered_json ej;
      ej["intent"] = e.intent;
      ej["h1"] = e.h1;
      ej["k"] = e.k;
      ej["conv_layers"] = e.conv_layers;
      ej["val_f1"] = e.val_f1;
      ej["test_f1"] = e.test_f1;
      best.push_back(std::move(ej));
    }
    out_json["best_per_intent"] = std::move(best);
    ordered_json ablation = ordered_json::array();
    for (std::size_t p = 0; p < rep.k_zero_vs_positive.size(); ++p) {
      ordered_json ej;
      ej["intent"] = p;
      auto [k0, kpos] = rep.k_zero_vs_positive[p];
      if (std::isfinite(k0)) ej["test_f1_k0"] = k0;
      else ej["test_f1_k0"] = nullptr;
      if (std::isfinite(kpos)) ej["test_f1_mean_k_positive"] = kpos;
      else ej["test_f1_mean_k_positive"] = nullptr;
      ablation.push_back(std::move(ej));
    }
    out_json["k_ablation"] = std::move(ablation);
    fs::create_directories(sw_out);
    write_text_file(fs::path(sw_out) / "sweep.json", out_json.dump(2) + "\n");
    for (const auto& e : rep.best_per_intent)
      std::cout << "intent " << e.intent << ": best h1=" << e.h1 << " k=" << e.k << " L=" << e.conv_layers
                << " valid F1 " << e.val_f1 << " test F1 " << e.test_f1 << "\n";
  });

  // --- eval ------------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "score prediction files against gold labels");
  std::string ev_pred, ev_gold, ev_baseline = "in-parallel", ev_out, ev_intents;
  ev->add_option("--pred", ev_pred, "directory with <method>.jsonl prediction files")->required();
  ev->add_option("--gold", ev_gold, "gold labels JSONL")->required();
  ev->add_option("--baseline", ev_baseline, "baseline method name");
  ev->add_option("--intents", ev_intents, "intent spec JSON (names + declared subsumption)");
  ev->add_option("--out", ev_out, "report JSON path")->required();
  ev->callback([&]() {
    IntentLabelMatrix gold = read_labels_jsonl(ev_gold);
    std::vector<IntentSpec> specs;
    if (!ev_intents.empty()) specs = read_intent_specs(ev_intents);
    std::vector<MethodPredictions> methods;
    const std::pair<const char*, const char*> known[] = {{"naive", "naive.jsonl"},
                                                         {"in-parallel", "in_parallel.jsonl"},
                                                         {"multi-label", "multi_label.jsonl"},
                                                         {"flexer", "flexer.jsonl"}};
    for (const auto& [name, file] : known) {
      fs::path f = fs::path(ev_pred) / file;
      if (!fs::exists(f)) continue;
      LoadedPredictions lp = read_predictions_jsonl(f, gold.pair_count(), gold.intent_count());
      methods.push_back({name, std::move(lp.resolutions)});
    }
    if (methods.empty()) throw DataError("no prediction files found under '" + ev_pred + "'");
    ordered_json report =
        build_report(methods, gold, ev_baseline, specs.empty() ? nullptr : &specs, Split::Test, &warnings);
    write_text_file(ev_out, report.dump(2) + "\n");
    std::cout << render_report(report);
  });

  // --- report ----------------------------------------------------------------------
  auto* rp = app.add_subcommand("report", "render a report JSON as text tables");
  std::string rp_in;
  rp->add_option("--in", rp_in, "report JSON")->required();
  rp->callback([&]() {
    ordered_json report = ordered_json::parse(read_text_file(rp_in));
    std::cout << render_report(report);
  });

  // --- pipeline ----------------------------------------------------------------------
  auto* pl = app.add_subcommand("pipeline", "run every stage from one config file");
  std::string pl_config, pl_out;
  pl->add_option("--config", pl_config, "pipeline config JSON")->required();
  pl->add_option("--out", pl_out, "run directory")->required();
  pl->callback([&]() {
    json config;
    try {
      config = json::parse(read_text_file(pl_config));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config: " + std::string(e.what()));
    }
    fs::path out = pl_out;
    if (const char* env_out = std::getenv("MIER_OUT_DIR")) out = fs::path(env_out);
    PipelineResult result = pipeline_run(config, out, fs::path(pl_config).parent_path(), &warnings);
    std::cout << render_report(result.report);
    std::cout << "report: " << result.report_path.string() << "\n";
  });

  if (const char* env_threads = std::getenv("MIER_THREADS")) set_thread_count(std::atoi(env_threads));
  // Subcommand callbacks fire inside parse(), so the thread cap must be set first.
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--threads") set_thread_count(std::atoi(argv[i + 1]));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  print_warnings(warnings);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
