#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "branchflow/io.hpp"
#include "branchflow/objective.hpp"
#include "branchflow/rng.hpp"
#include "branchflow/tape.hpp"
#include "json.hpp"

namespace branchflow {

struct ModelConfig {
  int hidden_dim = 64;
  int num_blocks = 2;
  int d = 0;              // continuous dimension
  int alphabet_size = 0;  // token classes incl. mask; 0 for continuous-only
  int time_features = 4;  // sinusoidal frequencies for both time and position
  double learning_rate = 1e-2;
  int batch_size = 8;
  int steps = 1000;
  std::string optimizer = "adam";  // or "sgd"
  double momentum = 0.9;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double clip_norm = 10.0;     // global gradient-norm clip; <= 0 disables
  bool lr_decay = true;        // linear warmup then cosine decay to 10%
  double weight_decay = 1e-4;  // decoupled (AdamW-style), adam only
  double ema_decay = 0.999;    // parameter EMA used for sampling; <= 0 disables

  void validate() const {
    if (hidden_dim <= 0 || num_blocks <= 0 || time_features <= 0 || batch_size <= 0 ||
        steps <= 0 || !(learning_rate >= 0.0))
      throw std::invalid_argument("ModelConfig: all sizes must be positive");
    if (d < 0 || alphabet_size < 0 || (d == 0 && alphabet_size == 0))
      throw std::invalid_argument("ModelConfig: need a continuous or discrete component");
    if (optimizer != "adam" && optimizer != "sgd")
      throw std::invalid_argument("ModelConfig: unknown optimizer");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"hidden_dim", c.hidden_dim},     {"num_blocks", c.num_blocks},
                     {"d", c.d},                       {"alphabet_size", c.alphabet_size},
                     {"time_features", c.time_features},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},     {"steps", c.steps},
                     {"optimizer", c.optimizer},       {"momentum", c.momentum},
                     {"beta1", c.beta1},               {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},         {"clip_norm", c.clip_norm},
                     {"lr_decay", c.lr_decay},         {"weight_decay", c.weight_decay},
                     {"ema_decay", c.ema_decay}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.num_blocks = j.value("num_blocks", c.num_blocks);
  c.d = j.value("d", c.d);
  c.alphabet_size = j.value("alphabet_size", c.alphabet_size);
  c.time_features = j.value("time_features", c.time_features);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.momentum = j.value("momentum", c.momentum);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
}

/// Per-element input features: raw state, one-hot token, the two neighbors
/// (one-hot token + coordinates, zeros at the boundary), sinusoidal position
/// and time encodings, length summaries, and the fixed flag.
inline int feature_dim(const ModelConfig& cfg) {
  const int self = cfg.d + cfg.alphabet_size;
  const int neighbors = 2 * (cfg.d + cfg.alphabet_size + 1);  // +1: neighbor-present flag
  return self + neighbors + 2 * cfg.time_features + 3 + 1 + 2 * cfg.time_features + 1;
}

struct Seg {
  int off = 0, rows = 0, cols = 0;
  int size() const { return rows * cols; }
};

struct ParamLayout {
  Seg w_in, b_in;
  struct Block {
    Seg w1, w2, b1, w3;
  };
  std::vector<Block> blocks;
  Seg w_mean, b_mean, w_tok, b_tok, w_split, b_split, w_del, b_del;
  int total = 0;

  explicit ParamLayout(const ModelConfig& cfg) {
    const int f = feature_dim(cfg);
    const int h = cfg.hidden_dim;
    auto take = [this](int rows, int cols) {
      Seg s{total, rows, cols};
      total += rows * cols;
      return s;
    };
    w_in = take(f, h);
    b_in = take(1, h);
    blocks.resize(cfg.num_blocks);
    for (auto& b : blocks) {
      b.w1 = take(h, h);
      b.w2 = take(h, h);
      b.b1 = take(1, h);
      b.w3 = take(h, h);
    }
    if (cfg.d > 0) {
      w_mean = take(h, cfg.d);
      b_mean = take(1, cfg.d);
    }
    if (cfg.alphabet_size > 0) {
      w_tok = take(h, cfg.alphabet_size);
      b_tok = take(1, cfg.alphabet_size);
    }
    w_split = take(h, 1);
    b_split = take(1, 1);
    w_del = take(h, 1);
    b_del = take(1, 1);
  }
};

/**
 * Per-element encoder + residual blocks with a mean-pooled context vector
 * reinjected each block, then four heads: endpoint mean, token logits,
 * log split count, deletion logit. Variable-length by construction.
 */
struct Model {
  ModelConfig cfg;
  ParamLayout layout;
  std::vector<double> params;

  explicit Model(const ModelConfig& c) : cfg(c), layout(c), params(layout.total, 0.0) {
    cfg.validate();
  }

  static Model create(const ModelConfig& cfg, uint64_t seed) {
    Model m(cfg);
    Rng rng(derive_seed(seed, 0x6d6f64656cULL));
    auto init_matrix = [&](const Seg& s) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(std::max(1, s.rows)));
      for (int i = 0; i < s.size(); ++i)
        m.params[s.off + i] = scale * (2.0 * rng.uniform() - 1.0);
    };
    init_matrix(m.layout.w_in);
    for (const auto& b : m.layout.blocks) {
      init_matrix(b.w1);
      init_matrix(b.w2);
      init_matrix(b.w3);
    }
    // output heads start at zero: uniform logits, R = 1, rho = 1/2
    return m;  // biases stay zero
  }
};

inline std::vector<double> build_features(const ModelConfig& cfg, double t,
                                          const AugState& state) {
  const int n = static_cast<int>(state.elements.size());
  const int f = feature_dim(cfg);
  const int tf = cfg.time_features;
  std::vector<double> x(static_cast<size_t>(n) * f, 0.0);
  const double len = static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    const Element& e = state.elements[i].value;
    double* row = x.data() + static_cast<size_t>(i) * f;
    int c = 0;
    auto put_element = [&](const Element* el) {
      for (int j = 0; j < cfg.d; ++j)
        row[c++] = el && j < static_cast<int>(el->continuous.size()) ? el->continuous[j] : 0.0;
      for (int j = 0; j < cfg.alphabet_size; ++j)
        row[c++] = (el && el->token == j) ? 1.0 : 0.0;
    };
    put_element(&e);
    put_element(i > 0 ? &state.elements[i - 1].value : nullptr);
    row[c++] = i > 0 ? 1.0 : 0.0;
    put_element(i + 1 < n ? &state.elements[i + 1].value : nullptr);
    row[c++] = i + 1 < n ? 1.0 : 0.0;
    for (int j = 0; j < tf; ++j) {
      const double omega = std::pow(100.0, -static_cast<double>(j) / std::max(1, tf - 1));
      row[c++] = std::sin(omega * i);
      row[c++] = std::cos(omega * i);
    }
    row[c++] = i / 16.0;
    row[c++] = 1.0 / (1.0 + len);
    row[c++] = std::log1p(len) / 4.0;
    row[c++] = t;
    for (int j = 1; j <= tf; ++j) {
      row[c++] = std::sin(kTwoPi * j * t);
      row[c++] = std::cos(kTwoPi * j * t);
    }
    row[c++] = e.fixed ? 1.0 : 0.0;
  }
  return x;
}

struct ForwardNodes {
  int mean = -1, tok = -1, split = -1, del = -1;
  int n = 0;
};

inline ForwardNodes forward_on_tape(const Model& m, Tape& tape, double t, const AugState& state) {
  if (state.elements.empty()) throw std::invalid_argument("forward: empty state");
  const int n = static_cast<int>(state.elements.size());
  const std::vector<double> feats = build_features(m.cfg, t, state);
  const int x = tape.leaf(n, feature_dim(m.cfg), feats.data());
  auto p = [&](const Seg& s) { return tape.param(s.rows, s.cols, m.params.data() + s.off, s.off); };
  int h = tape.tanh_op(tape.add_row(tape.matmul(x, p(m.layout.w_in)), p(m.layout.b_in)));
  for (const auto& b : m.layout.blocks) {
    const int ctx = tape.matmul(tape.mean_rows(h), p(b.w2));
    const int z =
        tape.tanh_op(tape.add_row(tape.add_row(tape.matmul(h, p(b.w1)), ctx), p(b.b1)));
    h = tape.add(h, tape.matmul(z, p(b.w3)));
  }
  ForwardNodes out;
  out.n = n;
  if (m.cfg.d > 0) out.mean = tape.add_row(tape.matmul(h, p(m.layout.w_mean)), p(m.layout.b_mean));
  if (m.cfg.alphabet_size > 0)
    out.tok = tape.add_row(tape.matmul(h, p(m.layout.w_tok)), p(m.layout.b_tok));
  out.split = tape.add_row(tape.matmul(h, p(m.layout.w_split)), p(m.layout.b_split));
  out.del = tape.add_row(tape.matmul(h, p(m.layout.w_del)), p(m.layout.b_del));
  return out;
}

namespace detail {

// y (n x cols) += x (n x k) * W (k x cols)
inline void gemm_acc(const double* x, int n, int k, const double* w, int cols, double* y) {
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* wrow = w + static_cast<size_t>(p) * cols;
      double* yrow = y + static_cast<size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) yrow[j] += xv * wrow[j];
    }
}

}  // namespace detail

/// Inference-path forward: identical math to forward_on_tape, no graph.
inline Predictions forward(const Model& m, double t, const AugState& state) {
  if (state.elements.empty()) throw std::invalid_argument("forward: empty state");
  const int n = static_cast<int>(state.elements.size());
  const int f = feature_dim(m.cfg);
  const int hd = m.cfg.hidden_dim;
  const std::vector<double> x = build_features(m.cfg, t, state);
  const double* P = m.params.data();

  std::vector<double> h(static_cast<size_t>(n) * hd, 0.0);
  detail::gemm_acc(x.data(), n, f, P + m.layout.w_in.off, hd, h.data());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < hd; ++j) h[i * hd + j] = std::tanh(h[i * hd + j] + P[m.layout.b_in.off + j]);

  std::vector<double> ctx(hd), ctxw(hd), z(static_cast<size_t>(n) * hd);
  for (const auto& b : m.layout.blocks) {
    std::fill(ctx.begin(), ctx.end(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < hd; ++j) ctx[j] += h[i * hd + j];
    for (int j = 0; j < hd; ++j) ctx[j] /= n;
    std::fill(ctxw.begin(), ctxw.end(), 0.0);
    detail::gemm_acc(ctx.data(), 1, hd, P + b.w2.off, hd, ctxw.data());
    std::fill(z.begin(), z.end(), 0.0);
    detail::gemm_acc(h.data(), n, hd, P + b.w1.off, hd, z.data());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < hd; ++j)
        z[i * hd + j] = std::tanh(z[i * hd + j] + ctxw[j] + P[b.b1.off + j]);
    detail::gemm_acc(z.data(), n, hd, P + b.w3.off, hd, h.data());
  }

  auto head = [&](const Seg& w, const Seg& bias, int cols, std::vector<double>& out) {
    out.assign(static_cast<size_t>(n) * cols, 0.0);
    detail::gemm_acc(h.data(), n, hd, P + w.off, cols, out.data());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < cols; ++j) out[i * cols + j] += P[bias.off + j];
  };
  std::vector<double> mean, tok, split, del;
  if (m.cfg.d > 0) head(m.layout.w_mean, m.layout.b_mean, m.cfg.d, mean);
  if (m.cfg.alphabet_size > 0) head(m.layout.w_tok, m.layout.b_tok, m.cfg.alphabet_size, tok);
  head(m.layout.w_split, m.layout.b_split, 1, split);
  head(m.layout.w_del, m.layout.b_del, 1, del);

  Predictions preds(n);
  for (int i = 0; i < n; ++i) {
    PredictionElement& pe = preds[i];
    if (m.cfg.d > 0)
      pe.endpoint_mean.assign(mean.begin() + i * m.cfg.d, mean.begin() + (i + 1) * m.cfg.d);
    if (m.cfg.alphabet_size > 0)
      pe.token_logits.assign(tok.begin() + i * m.cfg.alphabet_size,
                             tok.begin() + (i + 1) * m.cfg.alphabet_size);
    pe.log_splits = split[i];
    pe.delete_logit = del[i];
  }
  return preds;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = logits.at(0);
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

// --------------------------------------------------------------------------
// Training
// --------------------------------------------------------------------------

struct LossNodes {
  int split = -1, del = -1, cont = -1, disc = -1, total = -1;
};

inline LossNodes loss_on_tape(const Model& m, Tape& tape, const ForwardNodes& fwd,
                              const PathTargets& targets, double t, const LossWeights& weights) {
  const int n = fwd.n;
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("loss_on_tape: targets/predictions length mismatch");
  const double tw = weights.weight_at(t);
  std::vector<double> live(n), r_target(n), del_target(n);
  std::vector<int> tok_target(n, 0);
  std::vector<double> anchors(static_cast<size_t>(n) * std::max(1, m.cfg.d), 0.0);
  for (int i = 0; i < n; ++i) {
    const ElementTargets& tg = targets[i];
    live[i] = tg.fixed ? 0.0 : 1.0;
    r_target[i] = tg.remaining_splits;
    del_target[i] = tg.deleted;
    if (m.cfg.alphabet_size > 0 && !tg.fixed) tok_target[i] = tg.anchor.token;
    for (int j = 0; j < m.cfg.d && !tg.fixed; ++j)
      anchors[i * m.cfg.d + j] = tg.anchor.continuous[j];
  }
  std::vector<double> w_cont(n), w_disc(n);
  for (int i = 0; i < n; ++i) {
    w_cont[i] = live[i] * tw * weights.lambda_c;
    w_disc[i] = live[i] * tw * weights.lambda_d;
  }

  LossNodes out;
  out.split = tape.poisson_split(fwd.split, r_target, live);
  out.del = tape.bce_logit(fwd.del, del_target, live);
  int total = tape.add(out.split, out.del);
  if (m.cfg.d > 0) {
    anchors.resize(static_cast<size_t>(n) * m.cfg.d);
    out.cont = tape.weighted_sqerr(fwd.mean, anchors, w_cont);
    total = tape.add(total, out.cont);
  }
  if (m.cfg.alphabet_size > 0) {
    out.disc = tape.softmax_ce(fwd.tok, tok_target, w_disc);
    total = tape.add(total, out.disc);
  }
  out.total = total;
  return out;
}

struct OptimizerState {
  std::vector<double> m, v;
  std::vector<double> ema;  // parameter average for sampling
  long step = 0;
};

/// Batch item: a conditional-path draw (state carries its own t) plus targets.
using TrainBatch = std::vector<ConditionalSample>;

namespace detail {

inline void dump_bad_batch(const std::string& path, const TrainBatch& batch) {
  nlohmann::json j = nlohmann::json::array();
  for (const ConditionalSample& s : batch) {
    nlohmann::json item;
    item["t"] = s.state.t;
    nlohmann::json els = nlohmann::json::array();
    for (size_t i = 0; i < s.state.elements.size(); ++i) {
      const AugElement& ae = s.state.elements[i];
      const ElementTargets& tg = s.targets[i];
      els.push_back({{"continuous", ae.value.continuous},
                     {"token", ae.value.token},
                     {"fixed", ae.value.fixed},
                     {"r", tg.remaining_splits},
                     {"rho", tg.deleted},
                     {"anchor_token", tg.anchor.token},
                     {"anchor_continuous", tg.anchor.continuous}});
    }
    item["elements"] = std::move(els);
    j.push_back(std::move(item));
  }
  try {
    atomic_write_file(path, j.dump(2) + "\n");
  } catch (...) {
    // the abort below still reports the failure
  }
}

}  // namespace detail

/**
 * One optimizer step on a batch. The loss is the batch mean of per-sample
 * element sums (fixed elements masked out). Throws after dumping the batch if
 * the loss or any gradient goes non-finite.
 */
inline CbfLossBreakdown train_step(Model& model, OptimizerState& opt, const TrainBatch& batch,
                                   const LossWeights& weights = {},
                                   const std::string& bad_batch_dump = "bf_bad_batch.json",
                                   double lr_override = -1.0) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const size_t n_params = model.params.size();
  std::vector<double> grads(n_params, 0.0);
  CbfLossBreakdown stats;
  for (const ConditionalSample& sample : batch) {
    Tape tape;
    const ForwardNodes fwd = forward_on_tape(model, tape, sample.state.t, sample.state);
    const LossNodes loss = loss_on_tape(model, tape, fwd, sample.targets, sample.state.t, weights);
    stats.split += tape.scalar(loss.split);
    stats.del += tape.scalar(loss.del);
    if (loss.cont >= 0) stats.continuous += tape.scalar(loss.cont);
    if (loss.disc >= 0) stats.discrete += tape.scalar(loss.disc);
    tape.backward(loss.total, grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  stats.split *= inv;
  stats.del *= inv;
  stats.continuous *= inv;
  stats.discrete *= inv;
  stats.total = stats.split + stats.del + stats.continuous + stats.discrete;
  for (double& g : grads) g *= inv;

  bool finite = std::isfinite(stats.total);
  for (size_t i = 0; i < n_params && finite; ++i) finite = std::isfinite(grads[i]);
  if (!finite) {
    detail::dump_bad_batch(bad_batch_dump, batch);
    throw std::runtime_error("train_step: non-finite loss or gradient; batch dumped to " +
                             bad_batch_dump);
  }

  if (model.cfg.clip_norm > 0.0) {
    double norm2 = 0.0;
    for (double g : grads) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm > model.cfg.clip_norm) {
      const double s = model.cfg.clip_norm / norm;
      for (double& g : grads) g *= s;
    }
  }

  if (opt.m.size() != n_params) opt.m.assign(n_params, 0.0);
  const double lr = lr_override >= 0.0 ? lr_override : model.cfg.learning_rate;
  opt.step += 1;
  if (model.cfg.optimizer == "adam") {
    if (opt.v.size() != n_params) opt.v.assign(n_params, 0.0);
    const double b1 = model.cfg.beta1, b2 = model.cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
    const double wd = lr * model.cfg.weight_decay;
    for (size_t i = 0; i < n_params; ++i) {
      opt.m[i] = b1 * opt.m[i] + (1.0 - b1) * grads[i];
      opt.v[i] = b2 * opt.v[i] + (1.0 - b2) * grads[i] * grads[i];
      model.params[i] -=
          lr * (opt.m[i] / c1) / (std::sqrt(opt.v[i] / c2) + model.cfg.adam_eps) +
          wd * model.params[i];
    }
  } else {
    for (size_t i = 0; i < n_params; ++i) {
      opt.m[i] = model.cfg.momentum * opt.m[i] - lr * grads[i];
      model.params[i] += opt.m[i];
    }
  }
  if (model.cfg.ema_decay > 0.0) {
    if (opt.ema.size() != n_params) opt.ema = model.params;
    // warm the average up faster than the asymptotic decay early on
    const double decay =
        std::min(model.cfg.ema_decay, (1.0 + opt.step) / (10.0 + opt.step));
    for (size_t i = 0; i < n_params; ++i)
      opt.ema[i] = decay * opt.ema[i] + (1.0 - decay) * model.params[i];
  }
  return stats;
}

/// Max relative error between tape gradients and central differences over a
/// random 64-coordinate subset.
inline double grad_check(const Model& model, const ConditionalSample& sample,
                         const LossWeights& weights, Rng& rng) {
  std::vector<double> grads(model.params.size(), 0.0);
  {
    Tape tape;
    const ForwardNodes fwd = forward_on_tape(model, tape, sample.state.t, sample.state);
    const LossNodes loss = loss_on_tape(model, tape, fwd, sample.targets, sample.state.t, weights);
    tape.backward(loss.total, grads);
  }
  auto loss_at = [&](const Model& m) {
    Tape tape;
    const ForwardNodes fwd = forward_on_tape(m, tape, sample.state.t, sample.state);
    const LossNodes loss = loss_on_tape(m, tape, fwd, sample.targets, sample.state.t, weights);
    return tape.scalar(loss.total);
  };
  Model probe = model;
  const double h = 1e-5;
  const int n_coords = std::min<int>(64, static_cast<int>(model.params.size()));
  double max_rel = 0.0;
  for (int k = 0; k < n_coords; ++k) {
    const int i = rng.uniform_int(static_cast<int>(model.params.size()));
    const double orig = probe.params[i];
    probe.params[i] = orig + h;
    const double up = loss_at(probe);
    probe.params[i] = orig - h;
    const double down = loss_at(probe);
    probe.params[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grads[i];
    const double rel = std::fabs(analytic - numeric) /
                       std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

// --------------------------------------------------------------------------
// Checkpoints: magic, model config json, run config json, flat parameters
// --------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'B', 'F', 'C', 'K', 'P', 'T', '0', '1'};

inline void save_checkpoint(const std::string& path, const Model& model,
                            const std::string& run_config_json) {
  std::string blob;
  blob.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string cfg = nlohmann::json(model.cfg).dump();
  auto put_u64 = [&](uint64_t v) { blob.append(reinterpret_cast<const char*>(&v), 8); };
  put_u64(cfg.size());
  blob += cfg;
  put_u64(run_config_json.size());
  blob += run_config_json;
  put_u64(model.params.size());
  blob.append(reinterpret_cast<const char*>(model.params.data()),
              model.params.size() * sizeof(double));
  atomic_write_file(path, blob);
}

struct Checkpoint {
  Model model;
  std::string run_config_json;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string blob = read_file(path);
  size_t pos = 0;
  auto need = [&](size_t n) {
    if (pos + n > blob.size()) throw std::runtime_error("checkpoint truncated: " + path);
  };
  need(sizeof(kCheckpointMagic));
  if (std::memcmp(blob.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  pos += sizeof(kCheckpointMagic);
  auto get_u64 = [&] {
    need(8);
    uint64_t v;
    std::memcpy(&v, blob.data() + pos, 8);
    pos += 8;
    return v;
  };
  const uint64_t cfg_len = get_u64();
  need(cfg_len);
  const ModelConfig cfg = nlohmann::json::parse(blob.substr(pos, cfg_len)).get<ModelConfig>();
  pos += cfg_len;
  const uint64_t run_len = get_u64();
  need(run_len);
  std::string run_json = blob.substr(pos, run_len);
  pos += run_len;
  const uint64_t n = get_u64();
  need(n * sizeof(double));
  Model model(cfg);
  if (model.params.size() != n)
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  std::memcpy(model.params.data(), blob.data() + pos, n * sizeof(double));
  return {std::move(model), std::move(run_json)};
}

}  // namespace branchflow
