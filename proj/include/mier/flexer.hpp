#pragma once

// Multiplex GraphSAGE: relation-aware neighborhood aggregation (separate
// linear maps for intra- and inter-layer messages, summed), concat + linear +
// activation state updates, and a 2-way prediction head read from the target
// intent's layer. One model is trained per target intent over the same graph.

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mier/common.hpp"
#include "mier/core.hpp"
#include "mier/intent_graph.hpp"
#include "mier/matchers.hpp"
#include "mier/nn.hpp"

namespace mier {

inline std::vector<std::size_t> flexer_layer_dims(std::size_t h1, int conv_layers) {
  if (conv_layers < 1 || conv_layers > 3) throw ConfigError("conv layer count must be 1, 2, or 3");
  if (h1 < 2) throw ConfigError("h1 must be at least 2");
  switch (conv_layers) {
    case 1: return {h1};
    case 2: return {h1, h1};
    default: return {h1, h1 / 2, h1 / 2};
  }
}

struct FlexerConvLayer {
  Parameter w_intra;   // a_t x a_{t+1}, relation map for intra-layer messages
  Parameter w_inter;   // a_t x a_{t+1}, relation map for inter-layer messages
  Parameter w_update;  // (a_t + a_{t+1}) x a_{t+1}, applied to concat(state, aggregated)
  Parameter b_update;  // 1 x a_{t+1}
  bool final_conv = false;
};

struct FlexerForwardCache {
  std::vector<DenseMatrix> states;   // L+1 entries, post-activation, N x a_t
  std::vector<DenseMatrix> m_intra;  // relation means per conv layer
  std::vector<DenseMatrix> m_inter;
  std::vector<DenseMatrix> agg;      // summed relation projections per conv layer
  std::vector<DenseMatrix> preact;   // pre-activation update outputs
};

// Element-wise mean of the states of incoming neighbors per relation; nodes
// without incoming edges of that relation aggregate to the zero vector.
inline DenseMatrix relation_mean(const MultiplexGraph& g, const DenseMatrix& states, Relation rel) {
  DenseMatrix out(states.rows(), states.cols());
  const std::size_t a = states.cols();
  parallel_for(states.rows(), [&](std::size_t v) {
    const auto& srcs = g.neighbor_sets(static_cast<std::uint32_t>(v), rel);
    if (srcs.empty()) return;
    double* orow = out.row(v);
    for (std::uint32_t u : srcs) {
      const double* s = states.row(u);
      for (std::size_t c = 0; c < a; ++c) orow[c] += s[c];
    }
    const double inv = 1.0 / static_cast<double>(srcs.size());
    for (std::size_t c = 0; c < a; ++c) orow[c] *= inv;
  });
  return out;
}

class FlexerModel {
 public:
  FlexerModel() = default;

  // `graph` fixes the input dims; mixed-dim graphs need project_dim, which
  // adds one learned linear adapter per layer in front of the first conv.
  FlexerModel(const MultiplexGraph& graph, std::size_t h1, int conv_layers, Rng& rng,
              std::optional<std::size_t> project_dim = std::nullopt) {
    if (graph.mixed_dims() && !project_dim.has_value())
      throw ConfigError("graph layers have mixed dims; a projection dim is required");
    std::size_t in_dim;
    if (project_dim.has_value()) {
      in_dim = *project_dim;
      for (std::size_t p = 0; p < graph.layer_count(); ++p)
        adapters.emplace_back("adapter" + std::to_string(p), graph.layer_dim(p), in_dim, rng);
    } else {
      in_dim = graph.layer_dim(0);
    }
    dims_ = flexer_layer_dims(h1, conv_layers);
    dims_.insert(dims_.begin(), in_dim);
    for (int t = 0; t < conv_layers; ++t) {
      std::size_t a = dims_[static_cast<std::size_t>(t)];
      std::size_t a_next = dims_[static_cast<std::size_t>(t) + 1];
      FlexerConvLayer layer;
      layer.w_intra = Parameter("conv" + std::to_string(t) + ".w_intra", DenseMatrix::glorot(a, a_next, rng));
      layer.w_inter = Parameter("conv" + std::to_string(t) + ".w_inter", DenseMatrix::glorot(a, a_next, rng));
      layer.w_update = Parameter("conv" + std::to_string(t) + ".w_update", DenseMatrix::glorot(a + a_next, a_next, rng));
      layer.b_update = Parameter("conv" + std::to_string(t) + ".b_update", DenseMatrix::zeros(1, a_next));
      layer.final_conv = (t == conv_layers - 1);
      convs.push_back(std::move(layer));
    }
    head = LinearLayer("head", dims_.back(), 2, rng);
    h1_ = h1;
  }

  std::size_t h1() const { return h1_; }
  int conv_layer_count() const { return static_cast<int>(convs.size()); }
  std::size_t in_dim() const { return dims_.empty() ? 0 : dims_[0]; }
  std::size_t out_dim() const { return dims_.empty() ? 0 : dims_.back(); }

  std::vector<Parameter*> params() {
    std::vector<Parameter*> out;
    for (auto& a : adapters) {
      out.push_back(&a.W);
      out.push_back(&a.b);
    }
    for (auto& c : convs) {
      out.push_back(&c.w_intra);
      out.push_back(&c.w_inter);
      out.push_back(&c.w_update);
      out.push_back(&c.b_update);
    }
    out.push_back(&head.W);
    out.push_back(&head.b);
    return out;
  }
  std::vector<const Parameter*> params() const {
    auto mutable_this = const_cast<FlexerModel*>(this);
    std::vector<Parameter*> p = mutable_this->params();
    return std::vector<const Parameter*>(p.begin(), p.end());
  }

  // Full-graph forward over all layers; states are cached for backward.
  FlexerForwardCache forward_states(const MultiplexGraph& graph) {
    FlexerForwardCache cache;
    const std::size_t n = graph.pair_count();
    const std::size_t p_count = graph.layer_count();
    DenseMatrix state0(n * p_count, in_dim());
    if (adapters.empty()) {
      for (std::size_t p = 0; p < p_count; ++p) {
        const DenseMatrix& f = graph.layer_features(p);
        if (f.cols() != in_dim()) throw DataError("graph feature dim does not match the model");
        for (std::size_t i = 0; i < n; ++i)
          std::copy(f.row(i), f.row(i) + f.cols(), state0.row(graph.flat_id(p, i)));
      }
    } else {
      if (adapters.size() != p_count) throw DataError("model adapters do not match the graph layer count");
      for (std::size_t p = 0; p < p_count; ++p) {
        DenseMatrix projected = adapters[p].forward(graph.layer_features(p));
        for (std::size_t i = 0; i < n; ++i)
          std::copy(projected.row(i), projected.row(i) + projected.cols(), state0.row(graph.flat_id(p, i)));
      }
    }
    cache.states.push_back(std::move(state0));
    for (auto& conv : convs) {
      const DenseMatrix& h = cache.states.back();
      const std::size_t a = h.cols();
      const std::size_t a_next = conv.w_update.value.cols();
      DenseMatrix mi = relation_mean(graph, h, Relation::Intra);
      DenseMatrix me = relation_mean(graph, h, Relation::Inter);
      DenseMatrix agg(h.rows(), a_next);
      agg.map().noalias() = mi.map() * conv.w_intra.value.map() + me.map() * conv.w_inter.value.map();
      DenseMatrix z(h.rows(), a_next);
      z.map().noalias() = h.map() * conv.w_update.value.map().topRows(static_cast<Eigen::Index>(a)) +
                          agg.map() * conv.w_update.value.map().bottomRows(static_cast<Eigen::Index>(a_next));
      for (std::size_t r = 0; r < z.rows(); ++r)
        for (std::size_t c = 0; c < a_next; ++c) z.at(r, c) += conv.b_update.value.at(0, c);
      DenseMatrix next = z;
      if (!conv.final_conv)
        for (std::size_t i = 0; i < next.size(); ++i)
          if (next.data()[i] < 0.0) next.data()[i] = 0.0;
      cache.m_intra.push_back(std::move(mi));
      cache.m_inter.push_back(std::move(me));
      cache.agg.push_back(std::move(agg));
      cache.preact.push_back(std::move(z));
      cache.states.push_back(std::move(next));
    }
    return cache;
  }

  // Head logits for the given flat node rows of the final states.
  DenseMatrix logits_for(const FlexerForwardCache& cache, const std::vector<std::uint32_t>& rows) {
    const DenseMatrix& last = cache.states.back();
    DenseMatrix x(rows.size(), last.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(last.row(rows[i]), last.row(rows[i]) + last.cols(), x.row(i));
    return head.forward(x);
  }

  // Backpropagates dL/dlogits (aligned with `rows`) through the head and the
  // unrolled convolutions, accumulating parameter grads.
  void backward(const MultiplexGraph& graph, const FlexerForwardCache& cache, const DenseMatrix& dlogits,
                const std::vector<std::uint32_t>& rows) {
    DenseMatrix dX = head.backward(dlogits);
    DenseMatrix dstate(cache.states.back().rows(), cache.states.back().cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < dX.cols(); ++c) dstate.at(rows[i], c) += dX.at(i, c);

    for (int t = conv_layer_count() - 1; t >= 0; --t) {
      auto ti = static_cast<std::size_t>(t);
      FlexerConvLayer& conv = convs[ti];
      const DenseMatrix& h = cache.states[ti];
      const std::size_t a = h.cols();
      const std::size_t a_next = conv.w_update.value.cols();
      DenseMatrix dz = dstate;
      if (!conv.final_conv) {
        const DenseMatrix& z = cache.preact[ti];
        for (std::size_t i = 0; i < dz.size(); ++i)
          if (z.data()[i] <= 0.0) dz.data()[i] = 0.0;
      }
      for (std::size_t r = 0; r < dz.rows(); ++r)
        for (std::size_t c = 0; c < dz.cols(); ++c) conv.b_update.grad.at(0, c) += dz.at(r, c);
      conv.w_update.grad.map().topRows(static_cast<Eigen::Index>(a)).noalias() += h.map().transpose() * dz.map();
      conv.w_update.grad.map().bottomRows(static_cast<Eigen::Index>(a_next)).noalias() +=
          cache.agg[ti].map().transpose() * dz.map();
      DenseMatrix dh(h.rows(), a);
      dh.map().noalias() = dz.map() * conv.w_update.value.map().topRows(static_cast<Eigen::Index>(a)).transpose();
      DenseMatrix dagg(h.rows(), a_next);
      dagg.map().noalias() =
          dz.map() * conv.w_update.value.map().bottomRows(static_cast<Eigen::Index>(a_next)).transpose();

      conv.w_intra.grad.map().noalias() += cache.m_intra[ti].map().transpose() * dagg.map();
      conv.w_inter.grad.map().noalias() += cache.m_inter[ti].map().transpose() * dagg.map();
      DenseMatrix dmi(h.rows(), a), dme(h.rows(), a);
      dmi.map().noalias() = dagg.map() * conv.w_intra.value.map().transpose();
      dme.map().noalias() = dagg.map() * conv.w_inter.value.map().transpose();
      // Scatter the mean gradients back to the neighbor states.
      for (Relation rel : {Relation::Intra, Relation::Inter}) {
        const DenseMatrix& dm = rel == Relation::Intra ? dmi : dme;
        for (std::size_t v = 0; v < h.rows(); ++v) {
          const auto& srcs = graph.neighbor_sets(static_cast<std::uint32_t>(v), rel);
          if (srcs.empty()) continue;
          const double inv = 1.0 / static_cast<double>(srcs.size());
          const double* dmrow = dm.row(v);
          for (std::uint32_t u : srcs) {
            double* drow = dh.row(u);
            for (std::size_t c = 0; c < a; ++c) drow[c] += dmrow[c] * inv;
          }
        }
      }
      dstate = std::move(dh);
    }

    if (!adapters.empty()) {
      const std::size_t n = graph.pair_count();
      for (std::size_t p = 0; p < adapters.size(); ++p) {
        DenseMatrix dproj(n, in_dim());
        for (std::size_t i = 0; i < n; ++i) {
          const double* src = dstate.row(graph.flat_id(p, i));
          std::copy(src, src + in_dim(), dproj.row(i));
        }
        adapters[p].backward(dproj);
      }
    }
  }

  std::vector<LinearLayer> adapters;
  std::vector<FlexerConvLayer> convs;
  LinearLayer head;

 private:
  std::vector<std::size_t> dims_;  // a_0 .. a_L
  std::size_t h1_ = 0;
};

// One node's aggregated neighborhood at conv layer t: the relation-wise means
// of incoming neighbor states, each mapped by its relation matrix, summed.
inline std::vector<double> aggregate_neighborhood(const MultiplexGraph& graph, const FlexerModel& model,
                                                  const DenseMatrix& states, std::uint32_t node, int t) {
  const FlexerConvLayer& conv = model.convs.at(static_cast<std::size_t>(t));
  const std::size_t a = states.cols();
  if (conv.w_intra.value.rows() != a) throw DataError("aggregate_neighborhood: state dim mismatch");
  const std::size_t out_dim = conv.w_intra.value.cols();
  std::vector<double> out(out_dim, 0.0);
  for (Relation rel : {Relation::Intra, Relation::Inter}) {
    const auto& srcs = graph.neighbor_sets(node, rel);
    if (srcs.empty()) continue;
    std::vector<double> mean(a, 0.0);
    for (std::uint32_t u : srcs)
      for (std::size_t c = 0; c < a; ++c) mean[c] += states.at(u, c);
    for (auto& v : mean) v /= static_cast<double>(srcs.size());
    const DenseMatrix& w = rel == Relation::Intra ? conv.w_intra.value : conv.w_inter.value;
    for (std::size_t c = 0; c < out_dim; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < a; ++r) s += mean[r] * w.at(r, c);
      out[c] += s;
    }
  }
  return out;
}

// --- Prediction ----------------------------------------------------------------

struct FlexerPrediction {
  std::vector<std::uint8_t> labels;  // per pair_id
  std::vector<double> scores;        // softmax probability of label 1
};

// Predictions for every pair under the target intent from one full forward.
inline FlexerPrediction flexer_predict_all(FlexerModel& model, const MultiplexGraph& graph, int target_intent) {
  if (target_intent < 0 || static_cast<std::size_t>(target_intent) >= graph.layer_count())
    throw DataError("target intent outside the graph");
  FlexerForwardCache cache = model.forward_states(graph);
  std::vector<std::uint32_t> rows(graph.pair_count());
  for (std::size_t i = 0; i < graph.pair_count(); ++i)
    rows[i] = graph.flat_id(static_cast<std::size_t>(target_intent), i);
  DenseMatrix logits = model.logits_for(cache, rows);
  DenseMatrix probs = softmax_rows(logits);
  FlexerPrediction out;
  out.labels.resize(graph.pair_count());
  out.scores.resize(graph.pair_count());
  for (std::size_t i = 0; i < graph.pair_count(); ++i) {
    out.scores[i] = probs.at(i, 1);
    out.labels[i] = probs.at(i, 1) > probs.at(i, 0) ? 1 : 0;  // ties resolve to 0
  }
  return out;
}

// Single-pair prediction; label plus the 2-entry likelihood vector.
inline std::pair<int, std::array<double, 2>> predict_intent(FlexerModel& model, const MultiplexGraph& graph,
                                                            int target_intent, std::size_t pair_idx) {
  FlexerPrediction all = flexer_predict_all(model, graph, target_intent);
  if (pair_idx >= all.labels.size()) throw DataError("pair index outside the candidate set");
  return {all.labels[pair_idx], {1.0 - all.scores[pair_idx], all.scores[pair_idx]}};
}

// --- Training ------------------------------------------------------------------

struct FlexerTrainConfig {
  int target_intent = 0;
  TrainHyper hyper;
  std::size_t h1 = 300;
  int conv_layers = 2;
  std::optional<std::size_t> project_dim;

  // Contract limits for externally supplied configurations; tests may build
  // models directly with other shapes.
  void validate() const {
    hyper.validate();
    if (target_intent < 0) throw ConfigError("target intent must be >= 0");
    if (conv_layers != 2 && conv_layers != 3) throw ConfigError("conv layer count must be 2 or 3");
    bool in_grid = h1 >= 100 && h1 <= 500 && h1 % 50 == 0;
    if (!in_grid) throw ConfigError("h1 must lie in {100,150,...,500}");
  }
};

struct FlexerTrainResult {
  FlexerModel model;
  std::vector<double> loss_trace;
  std::vector<double> val_f1_trace;  // index 0 evaluates the initialization
  int best_epoch = 0;
  double best_val_f1 = 0.0;
};

// Full-graph training: cross entropy on the target intent's train-split nodes
// only; every other layer participates through message passing. The epoch
// with the best validation F1 (including epoch 0) is returned.
inline FlexerTrainResult train_flexer(const MultiplexGraph& graph, const IntentLabelMatrix& labels,
                                      const FlexerTrainConfig& cfg, bool strict_config = true) {
  if (strict_config) cfg.validate();
  else cfg.hyper.validate();
  const auto target = static_cast<std::size_t>(cfg.target_intent);
  if (target >= labels.intent_count() || graph.layer_count() != labels.intent_count())
    throw DataError("train_flexer: intent/layer mismatch");
  if (graph.pair_count() != labels.pair_count()) throw DataError("train_flexer: pair count mismatch");

  auto train_pairs = labels.pairs_in_split(Split::Train);
  auto valid_pairs = labels.pairs_in_split(Split::Valid);
  std::vector<std::uint32_t> train_rows, valid_rows;
  std::vector<std::uint8_t> y_train, y_valid;
  for (PairId id : train_pairs) {
    train_rows.push_back(graph.flat_id(target, id));
    y_train.push_back(labels.label(id, target));
  }
  for (PairId id : valid_pairs) {
    valid_rows.push_back(graph.flat_id(target, id));
    y_valid.push_back(labels.label(id, target));
  }
  std::size_t pos = static_cast<std::size_t>(std::count(y_train.begin(), y_train.end(), 1));
  if (pos == 0 || pos == y_train.size())
    throw DataError("train_flexer: degenerate training label distribution for intent " + std::to_string(target));

  Rng rng = make_rng(derive_seed(cfg.hyper.seed, 9000 + target));
  FlexerTrainResult result;
  result.model = FlexerModel(graph, cfg.h1, cfg.conv_layers, rng, cfg.project_dim);
  auto params = result.model.params();

  // Validation is read from the same full-graph forward that drives the
  // epoch's update, so the states evaluated at epoch e belong to the weights
  // before update e+1. Epoch 0 is the untrained initialization.
  auto val_f1_from = [&](const FlexerForwardCache& cache) {
    if (valid_rows.empty()) return 0.0;
    DenseMatrix logits = result.model.logits_for(cache, valid_rows);
    std::vector<std::uint8_t> pred(valid_rows.size());
    for (std::size_t i = 0; i < valid_rows.size(); ++i) pred[i] = logits.at(i, 1) > logits.at(i, 0) ? 1 : 0;
    return binary_f1(pred, y_valid);
  };
  auto snapshot = [&]() {
    std::vector<DenseMatrix> s;
    for (Parameter* p : params) s.push_back(p->value);
    return s;
  };

  result.best_val_f1 = -1.0;
  std::vector<DenseMatrix> best;
  for (int epoch = 0; epoch < cfg.hyper.epochs; ++epoch) {
    for (Parameter* p : params) p->zero_grad();
    FlexerForwardCache cache = result.model.forward_states(graph);
    double f1 = val_f1_from(cache);
    result.val_f1_trace.push_back(f1);
    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch;
      best = snapshot();
    }
    DenseMatrix logits = result.model.logits_for(cache, train_rows);
    DenseMatrix dlogits;
    double loss = softmax_ce_batch(logits, y_train, &dlogits);
    result.model.backward(graph, cache, dlogits, train_rows);
    adam_step(params, cfg.hyper);
    result.loss_trace.push_back(loss);
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return result;
}

// --- MIER runs and grid sweeps ------------------------------------------------------

struct MierRunConfig {
  std::size_t h1 = 300;
  int k = 4;
  int conv_layers = 2;
  TrainHyper hyper;
  std::optional<std::size_t> project_dim;
};

struct MierRunResult {
  std::vector<Resolution> resolutions;      // full-universe predictions per intent
  std::vector<std::vector<double>> scores;  // per intent, per pair
  std::vector<int> best_epochs;
  std::vector<double> best_val_f1;
};

// Builds the graph once, then trains and applies one model per target intent.
inline MierRunResult run_mier(const std::vector<PairEmbeddingSet>& sets, const IntentLabelMatrix& labels,
                              const MierRunConfig& cfg, Warnings* warnings = nullptr) {
  GraphConfig gcfg;
  gcfg.k = cfg.k;
  gcfg.project_dim = cfg.project_dim;
  MultiplexGraph graph = build_graph(sets, gcfg, warnings);
  const std::size_t p_count = labels.intent_count();
  MierRunResult out;
  out.resolutions.resize(p_count);
  out.scores.resize(p_count);
  out.best_epochs.resize(p_count);
  out.best_val_f1.resize(p_count);
  std::vector<std::string> errors(p_count);
  parallel_for(p_count, [&](std::size_t target) {
    try {
      FlexerTrainConfig tc;
      tc.target_intent = static_cast<int>(target);
      tc.hyper = cfg.hyper;
      tc.h1 = cfg.h1;
      tc.conv_layers = cfg.conv_layers;
      tc.project_dim = cfg.project_dim;
      FlexerTrainResult trained = train_flexer(graph, labels, tc);
      FlexerPrediction pred = flexer_predict_all(trained.model, graph, static_cast<int>(target));
      Resolution res;
      res.intent_id = static_cast<int>(target);
      for (std::size_t i = 0; i < pred.labels.size(); ++i)
        if (pred.labels[i]) res.matched.push_back(static_cast<PairId>(i));
      out.resolutions[target] = std::move(res);
      out.scores[target] = std::move(pred.scores);
      out.best_epochs[target] = trained.best_epoch;
      out.best_val_f1[target] = trained.best_val_f1;
    } catch (const std::exception& e) {
      errors[target] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw DataError(e);
  return out;
}

struct SweepGrids {
  std::vector<std::size_t> h1_grid = {100, 150, 200, 250, 300, 350, 400, 450, 500};
  std::vector<int> k_grid = {0, 2, 4, 6, 8, 10};
  std::vector<int> layers_grid = {2, 3};
};

struct SweepEntry {
  std::size_t h1 = 0;
  int k = 0;
  int conv_layers = 0;
  int intent = 0;
  double val_f1 = 0.0;
  double test_f1 = 0.0;
};

struct SweepReport {
  std::vector<SweepEntry> entries;
  std::vector<SweepEntry> best_per_intent;  // by validation F1
  // Per intent: best test F1 with k = 0 vs mean over k > 0 of per-k best.
  std::vector<std::pair<double, double>> k_zero_vs_positive;
};

inline SweepReport sweep(const std::vector<PairEmbeddingSet>& sets, const IntentLabelMatrix& labels,
                         const SweepGrids& grids, const TrainHyper& hyper,
                         std::optional<std::size_t> project_dim = std::nullopt, Warnings* warnings = nullptr) {
  if (grids.h1_grid.empty() || grids.k_grid.empty() || grids.layers_grid.empty())
    throw ConfigError("sweep grids must be non-empty");
  const std::size_t p_count = labels.intent_count();
  auto test_pairs = labels.pairs_in_split(Split::Test);
  SweepReport report;
  for (int k : grids.k_grid) {
    GraphConfig gcfg;
    gcfg.k = k;
    gcfg.project_dim = project_dim;
    MultiplexGraph graph = build_graph(sets, gcfg, warnings);
    for (int layers : grids.layers_grid) {
      for (std::size_t h1 : grids.h1_grid) {
        for (std::size_t target = 0; target < p_count; ++target) {
          FlexerTrainConfig tc;
          tc.target_intent = static_cast<int>(target);
          tc.hyper = hyper;
          tc.h1 = h1;
          tc.conv_layers = layers;
          tc.project_dim = project_dim;
          FlexerTrainResult trained = train_flexer(graph, labels, tc);
          FlexerPrediction pred = flexer_predict_all(trained.model, graph, static_cast<int>(target));
          std::vector<std::uint8_t> test_pred, test_gold;
          for (PairId id : test_pairs) {
            test_pred.push_back(pred.labels[id]);
            test_gold.push_back(labels.label(id, target));
          }
          SweepEntry e;
          e.h1 = h1;
          e.k = k;
          e.conv_layers = layers;
          e.intent = static_cast<int>(target);
          e.val_f1 = trained.best_val_f1;
          e.test_f1 = binary_f1(test_pred, test_gold);
          report.entries.push_back(e);
        }
      }
    }
  }
  for (std::size_t target = 0; target < p_count; ++target) {
    SweepEntry best;
    bool have = false;
    for (const auto& e : report.entries) {
      if (e.intent != static_cast<int>(target)) continue;
      if (!have || e.val_f1 > best.val_f1) {
        best = e;
        have = true;
      }
    }
    report.best_per_intent.push_back(best);
    double k0_best = 0.0;
    bool k0_any = false;
    std::vector<double> per_k_best;
    for (int k : grids.k_grid) {
      double best_val = -1.0, best_test = 0.0;
      for (const auto& e : report.entries) {
        if (e.intent != static_cast<int>(target) || e.k != k) continue;
        if (e.val_f1 > best_val) {
          best_val = e.val_f1;
          best_test = e.test_f1;
        }
      }
      if (k == 0) {
        k0_best = best_test;
        k0_any = true;
      } else if (best_val >= 0.0) {
        per_k_best.push_back(best_test);
      }
    }
    double mean_pos = 0.0;
    for (double v : per_k_best) mean_pos += v;
    if (!per_k_best.empty()) mean_pos /= static_cast<double>(per_k_best.size());
    report.k_zero_vs_positive.push_back({k0_any ? k0_best : std::numeric_limits<double>::quiet_NaN(),
                                         per_k_best.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_pos});
  }
  return report;
}

// --- Checkpoints -----------------------------------------------------------------

inline void save_flexer(const std::filesystem::path& path, const FlexerModel& model, int target_intent) {
  ordered_json cfg;
  cfg["type"] = "flexer";
  cfg["h1"] = model.h1();
  cfg["conv_layers"] = model.conv_layer_count();
  cfg["in_dim"] = model.in_dim();
  cfg["target_intent"] = target_intent;
  cfg["adapters"] = model.adapters.size();
  ordered_json adims = ordered_json::array();
  for (const auto& a : model.adapters) adims.push_back(a.in_dim());
  cfg["adapter_in_dims"] = std::move(adims);
  ckpt::save_file(path, model.params(), cfg.dump());
}

inline FlexerModel load_flexer(const std::filesystem::path& path, const MultiplexGraph& graph,
                               int* target_intent_out = nullptr) {
  ckpt::LoadedCheckpoint c = ckpt::load_file(path);
  json cfg = json::parse(c.config_json);
  if (cfg.at("type").get<std::string>() != "flexer") throw DataError("checkpoint is not a flexer model");
  Rng rng = make_rng(0);
  std::optional<std::size_t> project;
  if (cfg.at("adapters").get<std::size_t>() > 0) project = cfg.at("in_dim").get<std::size_t>();
  FlexerModel model(graph, cfg.at("h1").get<std::size_t>(), cfg.at("conv_layers").get<int>(), rng, project);
  for (Parameter* p : model.params()) c.load_into(*p);
  if (target_intent_out) *target_intent_out = cfg.at("target_intent").get<int>();
  return model;
}

}  // namespace mier
