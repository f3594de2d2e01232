#pragma once

// Baseline matchers: one binary matcher per intent (in-parallel), a joint
// multi-label matcher with a shared trunk, the naive copy-one-resolution
// baseline, and extraction of intent-based representations that initialize the
// intent graph.

#include <algorithm>
#include <string>
#include <vector>

#include "mier/common.hpp"
#include "mier/core.hpp"
#include "mier/embedding.hpp"
#include "mier/nn.hpp"

namespace mier {

inline double binary_f1(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gold) {
  if (pred.size() != gold.size()) throw NumericError("binary_f1: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && gold[i]) tp++;
    else if (pred[i] && !gold[i]) fp++;
    else if (!pred[i] && gold[i]) fn++;
  }
  double denom = static_cast<double>(2 * tp + fp + fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

// --- Binary matcher ------------------------------------------------------------

// linear(d -> r) + ReLU + linear(r -> 2); output is a 2-way distribution after
// softmax, with entry 1 the match likelihood.
class BinaryMatcher {
 public:
  BinaryMatcher() = default;
  BinaryMatcher(std::size_t in_dim, std::size_t hidden_dim, Rng& rng)
      : hidden_("hidden", in_dim, hidden_dim, rng), head_("head", hidden_dim, 2, rng) {}

  DenseMatrix forward(const DenseMatrix& x) {
    DenseMatrix h = relu_.forward(hidden_.forward(x));
    return head_.forward(h);
  }
  void backward(const DenseMatrix& dlogits) {
    DenseMatrix dh = relu_.backward(head_.backward(dlogits));
    hidden_.backward(dh);
  }

  DenseMatrix hidden_activation(const DenseMatrix& x) {
    ReluLayer relu;
    LinearLayer tmp = hidden_;  // keep training caches untouched
    return relu.forward(tmp.forward(x));
  }

  std::vector<Parameter*> params() { return {&hidden_.W, &hidden_.b, &head_.W, &head_.b}; }
  std::vector<const Parameter*> params() const { return {&hidden_.W, &hidden_.b, &head_.W, &head_.b}; }
  std::size_t in_dim() const { return hidden_.in_dim(); }
  std::size_t hidden_dim() const { return hidden_.out_dim(); }

 private:
  LinearLayer hidden_;
  ReluLayer relu_;
  LinearLayer head_;
};

struct BinaryPrediction {
  std::vector<std::uint8_t> labels;
  std::vector<double> scores;  // likelihood of class 1
};

// argmax of the softmax; an exact tie resolves to label 0.
inline BinaryPrediction predict_binary(BinaryMatcher& m, const DenseMatrix& x) {
  DenseMatrix p = softmax_rows(m.forward(x));
  BinaryPrediction out;
  out.labels.resize(p.rows());
  out.scores.resize(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    out.scores[r] = p.at(r, 1);
    out.labels[r] = p.at(r, 1) > p.at(r, 0) ? 1 : 0;
  }
  return out;
}

// --- Multi-label matcher ---------------------------------------------------------

// Shared trunk linear(d -> r) + ReLU; per intent a branch linear(r -> r_p) +
// ReLU and a 1-logit head.
class MultiLabelMatcher {
 public:
  MultiLabelMatcher() = default;
  MultiLabelMatcher(std::size_t in_dim, std::size_t trunk_dim, std::size_t branch_dim, std::size_t p_count, Rng& rng)
      : trunk_("trunk", in_dim, trunk_dim, rng) {
    for (std::size_t p = 0; p < p_count; ++p) {
      branches_.emplace_back("branch" + std::to_string(p), trunk_dim, branch_dim, rng);
      heads_.emplace_back("intent_head" + std::to_string(p), branch_dim, 1, rng);
    }
    branch_relus_.resize(p_count);
  }

  // Returns an n x P logit matrix.
  DenseMatrix forward(const DenseMatrix& x) {
    DenseMatrix h = trunk_relu_.forward(trunk_.forward(x));
    DenseMatrix logits(x.rows(), branches_.size());
    branch_out_.clear();
    for (std::size_t p = 0; p < branches_.size(); ++p) {
      DenseMatrix b = branch_relus_[p].forward(branches_[p].forward(h));
      DenseMatrix z = heads_[p].forward(b);
      for (std::size_t r = 0; r < x.rows(); ++r) logits.at(r, p) = z.at(r, 0);
      branch_out_.push_back(std::move(b));
    }
    return logits;
  }

  void backward(const DenseMatrix& dlogits) {
    DenseMatrix dh(branch_out_.empty() ? 0 : dlogits.rows(), trunk_.out_dim());
    for (std::size_t p = 0; p < branches_.size(); ++p) {
      DenseMatrix dz(dlogits.rows(), 1);
      for (std::size_t r = 0; r < dlogits.rows(); ++r) dz.at(r, 0) = dlogits.at(r, p);
      DenseMatrix db = branch_relus_[p].backward(heads_[p].backward(dz));
      add_inplace(dh, branches_[p].backward(db));
    }
    trunk_.backward(trunk_relu_.backward(dh));
  }

  // Per-intent branch activation (the representation hook).
  DenseMatrix branch_activation(const DenseMatrix& x, std::size_t intent) {
    LinearLayer trunk_copy = trunk_;
    LinearLayer branch_copy = branches_[intent];
    ReluLayer r1, r2;
    DenseMatrix h = r1.forward(trunk_copy.forward(x));
    return r2.forward(branch_copy.forward(h));
  }

  std::vector<Parameter*> params() {
    std::vector<Parameter*> out = {&trunk_.W, &trunk_.b};
    for (auto& l : branches_) {
      out.push_back(&l.W);
      out.push_back(&l.b);
    }
    for (auto& l : heads_) {
      out.push_back(&l.W);
      out.push_back(&l.b);
    }
    return out;
  }
  std::vector<const Parameter*> params() const {
    std::vector<const Parameter*> out = {&trunk_.W, &trunk_.b};
    for (const auto& l : branches_) {
      out.push_back(&l.W);
      out.push_back(&l.b);
    }
    for (const auto& l : heads_) {
      out.push_back(&l.W);
      out.push_back(&l.b);
    }
    return out;
  }

  std::size_t intent_count() const { return branches_.size(); }
  std::size_t in_dim() const { return trunk_.in_dim(); }
  std::size_t trunk_dim() const { return trunk_.out_dim(); }
  std::size_t branch_dim() const { return branches_.empty() ? 0 : branches_[0].out_dim(); }

 private:
  LinearLayer trunk_;
  ReluLayer trunk_relu_;
  std::vector<LinearLayer> branches_;
  std::vector<ReluLayer> branch_relus_;
  std::vector<LinearLayer> heads_;
  std::vector<DenseMatrix> branch_out_;
};

struct MultiLabelPrediction {
  // labels[r][p], scores[r][p] = sigmoid(logit)
  std::vector<std::vector<std::uint8_t>> labels;
  std::vector<std::vector<double>> scores;
};

// sigmoid(logit) >= 0.5 rule; the boundary (logit exactly 0) maps to 1.
inline MultiLabelPrediction predict_multilabel(MultiLabelMatcher& m, const DenseMatrix& x) {
  DenseMatrix z = m.forward(x);
  MultiLabelPrediction out;
  out.labels.assign(z.rows(), std::vector<std::uint8_t>(z.cols(), 0));
  out.scores.assign(z.rows(), std::vector<double>(z.cols(), 0.0));
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t p = 0; p < z.cols(); ++p) {
      double s = sigmoid(z.at(r, p));
      out.scores[r][p] = s;
      out.labels[r][p] = s >= 0.5 ? 1 : 0;
    }
  return out;
}

// --- Training ---------------------------------------------------------------------

namespace matcher_detail {

inline DenseMatrix gather_rows(const DenseMatrix& x, const std::vector<PairId>& rows) {
  DenseMatrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(i, c) = x.at(rows[i], c);
  return out;
}

inline std::vector<std::uint8_t> gather_labels(const IntentLabelMatrix& labels, const std::vector<PairId>& rows,
                                               std::size_t intent) {
  std::vector<std::uint8_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels.label(rows[i], intent);
  return out;
}

}  // namespace matcher_detail

struct BinaryTrainResult {
  BinaryMatcher model;
  std::vector<double> loss_trace;     // training loss per epoch
  std::vector<double> val_f1_trace;   // validation F1 per epoch (index 0 = init)
  int best_epoch = 0;                 // 0 means the untrained initialization
  double best_val_f1 = 0.0;
};

// Full-batch training of one binary matcher with softmax cross entropy; the
// epoch with the best validation F1 is kept.
inline BinaryTrainResult train_binary_matcher(const PairEmbeddingSet& embeddings, const IntentLabelMatrix& labels,
                                              std::size_t intent, const TrainHyper& hyper,
                                              std::size_t hidden_dim = 128) {
  hyper.validate();
  embeddings.require_valid(labels.pair_count());
  auto train_rows = labels.pairs_in_split(Split::Train);
  auto valid_rows = labels.pairs_in_split(Split::Valid);
  auto y_train = matcher_detail::gather_labels(labels, train_rows, intent);
  auto y_valid = matcher_detail::gather_labels(labels, valid_rows, intent);
  if (std::count(y_train.begin(), y_train.end(), 1) == 0)
    throw DataError("intent " + std::to_string(intent) + " has no positive training labels; F-selection undefined");
  DenseMatrix x_train = matcher_detail::gather_rows(embeddings.vectors, train_rows);
  DenseMatrix x_valid = matcher_detail::gather_rows(embeddings.vectors, valid_rows);

  Rng rng = make_rng(derive_seed(hyper.seed, 7000 + intent));
  BinaryTrainResult result;
  result.model = BinaryMatcher(embeddings.dim(), hidden_dim, rng);
  auto params = result.model.params();

  auto val_f1 = [&]() {
    if (y_valid.empty()) return 0.0;
    return binary_f1(predict_binary(result.model, x_valid).labels, y_valid);
  };
  auto snapshot = [&]() {
    std::vector<DenseMatrix> s;
    for (Parameter* p : params) s.push_back(p->value);
    return s;
  };

  result.best_val_f1 = val_f1();
  result.val_f1_trace.push_back(result.best_val_f1);
  std::vector<DenseMatrix> best = snapshot();
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    for (Parameter* p : params) p->zero_grad();
    DenseMatrix logits = result.model.forward(x_train);
    DenseMatrix dlogits;
    double loss = softmax_ce_batch(logits, y_train, &dlogits);
    result.model.backward(dlogits);
    adam_step(params, hyper);
    result.loss_trace.push_back(loss);
    double f1 = val_f1();
    result.val_f1_trace.push_back(f1);
    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch;
      best = snapshot();
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return result;
}

// In-parallel baseline: P independent binary matchers. `embeddings` holds
// either one shared set or one set per intent.
inline std::vector<BinaryTrainResult> train_in_parallel(const std::vector<PairEmbeddingSet>& embeddings,
                                                        const IntentLabelMatrix& labels, const TrainHyper& hyper,
                                                        std::size_t hidden_dim = 128) {
  const std::size_t p_count = labels.intent_count();
  if (embeddings.size() != 1 && embeddings.size() != p_count)
    throw DataError("train_in_parallel needs 1 or P embedding sets");
  std::vector<BinaryTrainResult> results(p_count);
  std::vector<std::string> errors(p_count);
  parallel_for(p_count, [&](std::size_t p) {
    try {
      const PairEmbeddingSet& set = embeddings.size() == 1 ? embeddings[0] : embeddings[p];
      results[p] = train_binary_matcher(set, labels, p, hyper, hidden_dim);
    } catch (const std::exception& e) {
      errors[p] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw DataError(e);
  return results;
}

struct MultiLabelTrainResult {
  MultiLabelMatcher model;
  std::vector<double> loss_trace;
  std::vector<double> val_f1_trace;  // mean F1 over intents, index 0 = init
  int best_epoch = 0;
  double best_val_f1 = 0.0;
};

// Joint multi-label training with the weighted BCE loss; selection by mean
// validation F1 over intents. Intent weights default to 1.
inline MultiLabelTrainResult train_multilabel(const PairEmbeddingSet& embeddings, const IntentLabelMatrix& labels,
                                              const TrainHyper& hyper, std::size_t trunk_dim = 128,
                                              std::size_t branch_dim = 128, std::vector<double> weights = {}) {
  hyper.validate();
  embeddings.require_valid(labels.pair_count());
  const std::size_t p_count = labels.intent_count();
  if (weights.empty()) weights.assign(p_count, 1.0);
  if (weights.size() != p_count) throw ConfigError("intent weight count mismatch");
  for (double w : weights)
    if (w <= 0.0) throw ConfigError("intent weights must be positive");

  auto train_rows = labels.pairs_in_split(Split::Train);
  auto valid_rows = labels.pairs_in_split(Split::Valid);
  DenseMatrix x_train = matcher_detail::gather_rows(embeddings.vectors, train_rows);
  DenseMatrix x_valid = matcher_detail::gather_rows(embeddings.vectors, valid_rows);
  std::vector<std::vector<std::uint8_t>> y_train(p_count), y_valid(p_count);
  for (std::size_t p = 0; p < p_count; ++p) {
    y_train[p] = matcher_detail::gather_labels(labels, train_rows, p);
    y_valid[p] = matcher_detail::gather_labels(labels, valid_rows, p);
  }

  Rng rng = make_rng(derive_seed(hyper.seed, 8000));
  MultiLabelTrainResult result;
  result.model = MultiLabelMatcher(embeddings.dim(), trunk_dim, branch_dim, p_count, rng);
  auto params = result.model.params();

  auto mean_val_f1 = [&]() {
    if (valid_rows.empty()) return 0.0;
    MultiLabelPrediction pred = predict_multilabel(result.model, x_valid);
    double sum = 0.0;
    for (std::size_t p = 0; p < p_count; ++p) {
      std::vector<std::uint8_t> col(valid_rows.size());
      for (std::size_t r = 0; r < valid_rows.size(); ++r) col[r] = pred.labels[r][p];
      sum += binary_f1(col, y_valid[p]);
    }
    return sum / static_cast<double>(p_count);
  };
  auto snapshot = [&]() {
    std::vector<DenseMatrix> s;
    for (Parameter* p : params) s.push_back(p->value);
    return s;
  };

  result.best_val_f1 = mean_val_f1();
  result.val_f1_trace.push_back(result.best_val_f1);
  std::vector<DenseMatrix> best = snapshot();
  const double inv_n = train_rows.empty() ? 0.0 : 1.0 / static_cast<double>(train_rows.size());
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    for (Parameter* p : params) p->zero_grad();
    DenseMatrix logits = result.model.forward(x_train);
    DenseMatrix dlogits(logits.rows(), logits.cols());
    double loss = 0.0;
    std::vector<double> row_logits(p_count), row_grad;
    std::vector<std::uint8_t> row_y(p_count);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      for (std::size_t p = 0; p < p_count; ++p) {
        row_logits[p] = logits.at(r, p);
        row_y[p] = y_train[p][r];
      }
      loss += weighted_bce_loss(row_logits, row_y, weights, &row_grad);
      for (std::size_t p = 0; p < p_count; ++p) dlogits.at(r, p) = row_grad[p] * inv_n;
    }
    loss *= inv_n;
    result.model.backward(dlogits);
    adam_step(params, hyper);
    result.loss_trace.push_back(loss);
    double f1 = mean_val_f1();
    result.val_f1_trace.push_back(f1);
    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch;
      best = snapshot();
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return result;
}

// --- Baselines over resolutions ------------------------------------------------------

// One-size-fits-all: the equivalence resolution copied to every intent.
inline std::vector<Resolution> naive_multi_intent(const Resolution& equivalence, std::size_t p_count) {
  std::vector<Resolution> out;
  for (std::size_t p = 0; p < p_count; ++p) {
    Resolution r = equivalence;
    r.intent_id = static_cast<int>(p);
    out.push_back(std::move(r));
  }
  return out;
}

// --- Representation extraction --------------------------------------------------------

// Hidden activations of each in-parallel matcher, one set per intent. Values
// are rounded to the 32-bit float grid like every stored embedding.
inline std::vector<PairEmbeddingSet> extract_representations(std::vector<BinaryTrainResult>& matchers,
                                                             const std::vector<PairEmbeddingSet>& inputs) {
  std::vector<PairEmbeddingSet> out;
  for (std::size_t p = 0; p < matchers.size(); ++p) {
    const PairEmbeddingSet& in = inputs.size() == 1 ? inputs[0] : inputs[p];
    PairEmbeddingSet set;
    set.intent_id = static_cast<int>(p);
    set.vectors = matchers[p].model.hidden_activation(in.vectors);
    for (std::size_t i = 0; i < set.vectors.size(); ++i) set.vectors.data()[i] = quantize_f32(set.vectors.data()[i]);
    out.push_back(std::move(set));
  }
  return out;
}

// Per-intent branch activations of the multi-label matcher.
inline std::vector<PairEmbeddingSet> extract_representations(MultiLabelMatcher& matcher,
                                                             const PairEmbeddingSet& input) {
  std::vector<PairEmbeddingSet> out;
  for (std::size_t p = 0; p < matcher.intent_count(); ++p) {
    PairEmbeddingSet set;
    set.intent_id = static_cast<int>(p);
    set.vectors = matcher.branch_activation(input.vectors, p);
    for (std::size_t i = 0; i < set.vectors.size(); ++i) set.vectors.data()[i] = quantize_f32(set.vectors.data()[i]);
    out.push_back(std::move(set));
  }
  return out;
}

// --- Checkpoints ------------------------------------------------------------------------

inline void save_binary_matcher(const std::filesystem::path& path, const BinaryMatcher& m, std::size_t intent) {
  ordered_json cfg;
  cfg["type"] = "binary";
  cfg["in_dim"] = m.in_dim();
  cfg["hidden_dim"] = m.hidden_dim();
  cfg["intent"] = intent;
  ckpt::save_file(path, m.params(), cfg.dump());
}

inline BinaryMatcher load_binary_matcher(const std::filesystem::path& path, std::size_t* intent_out = nullptr) {
  ckpt::LoadedCheckpoint c = ckpt::load_file(path);
  json cfg = json::parse(c.config_json);
  if (cfg.at("type").get<std::string>() != "binary") throw DataError("checkpoint is not a binary matcher");
  Rng rng = make_rng(0);
  BinaryMatcher m(cfg.at("in_dim").get<std::size_t>(), cfg.at("hidden_dim").get<std::size_t>(), rng);
  for (Parameter* p : m.params()) c.load_into(*p);
  if (intent_out) *intent_out = cfg.at("intent").get<std::size_t>();
  return m;
}

inline void save_multilabel_matcher(const std::filesystem::path& path, const MultiLabelMatcher& m) {
  ordered_json cfg;
  cfg["type"] = "multilabel";
  cfg["in_dim"] = m.in_dim();
  cfg["trunk_dim"] = m.trunk_dim();
  cfg["branch_dim"] = m.branch_dim();
  cfg["P"] = m.intent_count();
  ckpt::save_file(path, m.params(), cfg.dump());
}

inline MultiLabelMatcher load_multilabel_matcher(const std::filesystem::path& path) {
  ckpt::LoadedCheckpoint c = ckpt::load_file(path);
  json cfg = json::parse(c.config_json);
  if (cfg.at("type").get<std::string>() != "multilabel") throw DataError("checkpoint is not a multi-label matcher");
  Rng rng = make_rng(0);
  MultiLabelMatcher m(cfg.at("in_dim").get<std::size_t>(), cfg.at("trunk_dim").get<std::size_t>(),
                      cfg.at("branch_dim").get<std::size_t>(), cfg.at("P").get<std::size_t>(), rng);
  for (Parameter* p : m.params()) c.load_into(*p);
  return m;
}

}  // namespace mier
