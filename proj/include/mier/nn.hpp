#pragma once

// Minimal dense neural kernel: 64-bit matrices, linear/ReLU/sigmoid/softmax
// with exact analytic backward passes, cross-entropy and weighted multi-label
// BCE losses, Adam, and central-finite-difference gradient verification.
// Matrix products are delegated to Eigen; everything else is explicit.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mier/common.hpp"

namespace mier {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix zeros(std::size_t rows, std::size_t cols) { return DenseMatrix(rows, cols, 0.0); }

  // Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)).
  static DenseMatrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    DenseMatrix m(rows, cols);
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (auto& v : m.data_) v = rand_range(rng, -bound, bound);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const DenseMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }
  void require_finite(const char* what) const {
    if (!all_finite()) throw NumericError(std::string("non-finite value in ") + what);
  }

  using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  EigenMap map() { return EigenMap(data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)); }
  ConstEigenMap map() const {
    return ConstEigenMap(data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// C = A * B
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw NumericError("matmul: shape mismatch");
  DenseMatrix c(a.rows(), b.cols());
  c.map().noalias() = a.map() * b.map();
  return c;
}

// C = A^T * B
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw NumericError("matmul_tn: shape mismatch");
  DenseMatrix c(a.cols(), b.cols());
  c.map().noalias() = a.map().transpose() * b.map();
  return c;
}

// C = A * B^T
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw NumericError("matmul_nt: shape mismatch");
  DenseMatrix c(a.rows(), b.rows());
  c.map().noalias() = a.map() * b.map().transpose();
  return c;
}

inline void add_inplace(DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw NumericError("add: shape mismatch");
  a.map() += b.map();
}

struct Parameter {
  DenseMatrix value;
  DenseMatrix grad;
  DenseMatrix adam_m;
  DenseMatrix adam_v;
  std::int64_t step = 0;
  std::string name;

  Parameter() = default;
  Parameter(std::string name_, DenseMatrix init)
      : value(std::move(init)),
        grad(value.rows(), value.cols()),
        adam_m(value.rows(), value.cols()),
        adam_v(value.rows(), value.cols()),
        name(std::move(name_)) {}

  void zero_grad() { grad.fill(0.0); }
};

struct TrainHyper {
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  int epochs = 150;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (learning_rate <= 0 || weight_decay < 0 || epochs < 1 || beta1 <= 0 || beta1 >= 1 || beta2 <= 0 ||
        beta2 >= 1 || eps <= 0)
      throw ConfigError("invalid training hyperparameters");
  }
};

// Standard Adam with bias correction. Weight decay enters as an additive L2
// term on the gradient (coupled variant, not AdamW).
inline void adam_step(Parameter& p, const TrainHyper& h) {
  p.step += 1;
  const double b1t = 1.0 - std::pow(h.beta1, static_cast<double>(p.step));
  const double b2t = 1.0 - std::pow(h.beta2, static_cast<double>(p.step));
  double* value = p.value.data();
  double* grad = p.grad.data();
  double* m = p.adam_m.data();
  double* v = p.adam_v.data();
  const std::size_t n = p.value.size();
  for (std::size_t i = 0; i < n; ++i) {
    double g = grad[i] + h.weight_decay * value[i];
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    double mhat = m[i] / b1t;
    double vhat = v[i] / b2t;
    value[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.eps);
  }
  p.value.require_finite("adam_step");
}

inline void adam_step(std::vector<Parameter*>& params, const TrainHyper& h) {
  for (Parameter* p : params) adam_step(*p, h);
}

// --- Layers -------------------------------------------------------------

// y = x W + b. Caches x for the backward pass; backward accumulates into the
// parameter grads and returns dL/dx.
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(const std::string& name, std::size_t in_dim, std::size_t out_dim, Rng& rng)
      : W(name + ".W", DenseMatrix::glorot(in_dim, out_dim, rng)), b(name + ".b", DenseMatrix::zeros(1, out_dim)) {}

  DenseMatrix forward(const DenseMatrix& x) {
    x_cache_ = x;
    DenseMatrix y = matmul(x, W.value);
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) += b.value.at(0, c);
    return y;
  }

  DenseMatrix backward(const DenseMatrix& dy) {
    add_inplace(W.grad, matmul_tn(x_cache_, dy));
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = 0; c < dy.cols(); ++c) b.grad.at(0, c) += dy.at(r, c);
    return matmul_nt(dy, W.value);
  }

  std::size_t in_dim() const { return W.value.rows(); }
  std::size_t out_dim() const { return W.value.cols(); }

  Parameter W;
  Parameter b;

 private:
  DenseMatrix x_cache_;
};

class ReluLayer {
 public:
  DenseMatrix forward(const DenseMatrix& x) {
    mask_ = x;
    DenseMatrix y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.data()[i] < 0.0) y.data()[i] = 0.0;
    }
    return y;
  }
  DenseMatrix backward(const DenseMatrix& dy) {
    DenseMatrix dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (mask_.data()[i] <= 0.0) dx.data()[i] = 0.0;
    return dx;
  }

 private:
  DenseMatrix mask_;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline DenseMatrix sigmoid_forward(const DenseMatrix& x) {
  DenseMatrix y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = sigmoid(y.data()[i]);
  return y;
}

// dx = dy * s * (1 - s), with s the cached forward output.
inline DenseMatrix sigmoid_backward(const DenseMatrix& dy, const DenseMatrix& s) {
  DenseMatrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= s.data()[i] * (1.0 - s.data()[i]);
  return dx;
}

// Row-wise softmax, numerically shifted by the row max.
inline DenseMatrix softmax_rows(const DenseMatrix& z) {
  DenseMatrix p = z;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < z.cols(); ++c) mx = std::max(mx, z.at(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      double e = std::exp(z.at(r, c) - mx);
      p.at(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < z.cols(); ++c) p.at(r, c) /= sum;
  }
  return p;
}

// Jacobian-vector product for softmax rows: dz = p .* (dy - sum(dy .* p)).
inline DenseMatrix softmax_backward(const DenseMatrix& dy, const DenseMatrix& p) {
  DenseMatrix dz = dy;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) dot += dy.at(r, c) * p.at(r, c);
    for (std::size_t c = 0; c < p.cols(); ++c) dz.at(r, c) = p.at(r, c) * (dy.at(r, c) - dot);
  }
  return dz;
}

// --- Losses -------------------------------------------------------------

constexpr double kProbClamp = 1e-12;

// Binary cross entropy on a probability: -(y ln p + (1-y) ln(1-p)).
inline double ce_loss(double p_hat, int y) {
  if (y != 0 && y != 1) throw NumericError("ce_loss: label must be 0/1");
  double p = std::min(1.0 - kProbClamp, std::max(kProbClamp, p_hat));
  return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

// Mean two-class softmax cross entropy over a batch of logits (n x 2) with the
// positive-class probability playing the likelihood role. Returns the loss and
// writes dL/dlogits (already scaled by the mean) into dlogits.
inline double softmax_ce_batch(const DenseMatrix& logits, const std::vector<std::uint8_t>& labels,
                               DenseMatrix* dlogits = nullptr) {
  if (logits.cols() != 2) throw NumericError("softmax_ce_batch expects 2 logits per row");
  if (labels.size() != logits.rows()) throw NumericError("softmax_ce_batch: label count mismatch");
  const std::size_t n = logits.rows();
  if (n == 0) throw NumericError("softmax_ce_batch: empty batch");
  DenseMatrix p = softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) loss += ce_loss(p.at(r, 1), labels[r]);
  loss /= static_cast<double>(n);
  check_finite(loss, "softmax_ce_batch");
  if (dlogits != nullptr) {
    *dlogits = DenseMatrix(n, 2);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      dlogits->at(r, 0) = (p.at(r, 0) - (labels[r] == 0 ? 1.0 : 0.0)) * inv_n;
      dlogits->at(r, 1) = (p.at(r, 1) - (labels[r] == 1 ? 1.0 : 0.0)) * inv_n;
    }
  }
  return loss;
}

// Weighted multi-label BCE over logits, (1/P) sum_p -w_p (y ln s + (1-y) ln(1-s)),
// evaluated in the log-sum-exp form so large |logit| stays stable:
//   -ln s(z)   = ln(1+e^-z) = max(-z,0) + ln(1+e^-|z|)
//   -ln(1-s(z))= ln(1+e^z)  = max(z,0)  + ln(1+e^-|z|)
inline double weighted_bce_loss(const std::vector<double>& logits, const std::vector<std::uint8_t>& y,
                                const std::vector<double>& w, std::vector<double>* dlogits = nullptr) {
  const std::size_t p_count = logits.size();
  if (p_count == 0 || y.size() != p_count || w.size() != p_count)
    throw NumericError("weighted_bce_loss: length mismatch");
  double loss = 0.0;
  if (dlogits != nullptr) dlogits->assign(p_count, 0.0);
  for (std::size_t p = 0; p < p_count; ++p) {
    if (w[p] <= 0.0) throw NumericError("weighted_bce_loss: weights must be positive");
    const double z = logits[p];
    const double softplus = std::log1p(std::exp(-std::abs(z)));
    double term;
    if (y[p] == 1) term = std::max(-z, 0.0) + softplus;
    else if (y[p] == 0) term = std::max(z, 0.0) + softplus;
    else throw NumericError("weighted_bce_loss: label must be 0/1");
    loss += w[p] * term;
    if (dlogits != nullptr) (*dlogits)[p] = w[p] * (sigmoid(z) - static_cast<double>(y[p])) / static_cast<double>(p_count);
  }
  loss /= static_cast<double>(p_count);
  check_finite(loss, "weighted_bce_loss");
  return loss;
}

// --- Gradient verification ----------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t points_checked = 0;
  bool passed(double tolerance) const { return points_checked > 0 && max_rel_err < tolerance; }
};

// Central finite differences against analytic gradients. `loss_fn` must run a
// fresh forward pass; `params` hold the analytic grads from one backward call
// made by the caller beforehand. Samples `n_points` coordinates across all
// parameters.
inline GradCheckReport grad_check(const std::function<double()>& loss_fn, std::vector<Parameter*>& params,
                                  Rng& rng, std::size_t n_points = 100, double h = 1e-5) {
  GradCheckReport report;
  std::size_t total = 0;
  for (Parameter* p : params) total += p->value.size();
  if (total == 0) return report;
  for (std::size_t k = 0; k < n_points; ++k) {
    std::size_t flat = static_cast<std::size_t>(rand_below(rng, total));
    Parameter* target = nullptr;
    for (Parameter* p : params) {
      if (flat < p->value.size()) {
        target = p;
        break;
      }
      flat -= p->value.size();
    }
    double& slot = target->value.data()[flat];
    const double saved = slot;
    slot = saved + h;
    const double up = loss_fn();
    slot = saved - h;
    const double down = loss_fn();
    slot = saved;
    const double fd = (up - down) / (2.0 * h);
    const double an = target->grad.data()[flat];
    const double denom = std::max(1e-8, std::abs(fd) + std::abs(an));
    const double rel = std::abs(fd - an) / denom;
    report.max_rel_err = std::max(report.max_rel_err, rel);
    report.points_checked++;
  }
  return report;
}

// --- Checkpoints ----------------------------------------------------------

// Versioned binary: magic, version, optional JSON config blob, then named
// tensors as row-major 64-bit floats. Integers are little-endian on disk.
namespace ckpt {

constexpr char kMagic[8] = {'M', 'I', 'E', 'R', 'N', 'N', '0', '1'};

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32(const std::string& in, std::size_t& off) {
  if (off + 4 > in.size()) throw DataError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + static_cast<std::size_t>(i)])) << (8 * i);
  off += 4;
  return v;
}
inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}
inline double get_f64(const std::string& in, std::size_t& off) {
  if (off + 8 > in.size()) throw DataError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + static_cast<std::size_t>(i)])) << (8 * i);
  off += 8;
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline std::string serialize(const std::vector<const Parameter*>& params, const std::string& config_json) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(config_json.size()));
  out += config_json;
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (std::size_t i = 0; i < p->value.size(); ++i) put_f64(out, p->value.data()[i]);
  }
  return out;
}

struct LoadedCheckpoint {
  std::string config_json;
  std::vector<std::pair<std::string, DenseMatrix>> tensors;

  const DenseMatrix& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw DataError("checkpoint lacks tensor '" + name + "'");
  }
  // Shape-checked copy into an existing parameter.
  void load_into(Parameter& p) const {
    const DenseMatrix& t = tensor(p.name);
    if (!t.same_shape(p.value))
      throw DataError("checkpoint tensor '" + p.name + "' has shape " + std::to_string(t.rows()) + "x" +
                      std::to_string(t.cols()) + ", expected " + std::to_string(p.value.rows()) + "x" +
                      std::to_string(p.value.cols()));
    p.value = t;
  }
};

inline LoadedCheckpoint deserialize(const std::string& in) {
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file (bad magic)");
  std::size_t off = sizeof(kMagic);
  LoadedCheckpoint out;
  std::uint32_t cfg_len = get_u32(in, off);
  if (off + cfg_len > in.size()) throw DataError("checkpoint truncated");
  out.config_json = in.substr(off, cfg_len);
  off += cfg_len;
  std::uint32_t count = get_u32(in, off);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = get_u32(in, off);
    if (off + name_len > in.size()) throw DataError("checkpoint truncated");
    std::string name = in.substr(off, name_len);
    off += name_len;
    std::uint32_t rows = get_u32(in, off);
    std::uint32_t cols = get_u32(in, off);
    DenseMatrix t(rows, cols);
    for (std::size_t k = 0; k < t.size(); ++k) t.data()[k] = get_f64(in, off);
    out.tensors.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

inline void save_file(const std::filesystem::path& path, const std::vector<const Parameter*>& params,
                      const std::string& config_json) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  std::string blob = serialize(params, config_json);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("checkpoint write failed for '" + path.string() + "'");
}

inline LoadedCheckpoint load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace ckpt

}  // namespace mier
