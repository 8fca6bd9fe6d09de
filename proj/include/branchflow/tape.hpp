#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace branchflow {

/**
 * Minimal reverse-mode tape over dense row-major matrices. One graph is built
 * per training sample; backward() accumulates parameter gradients into a flat
 * vector matching the parameter store layout. The op set is fixed: matmul,
 * adds, tanh, reductions, and fused loss heads (softmax-CE, BCE-with-logit,
 * Poisson split loss, weighted squared error).
 *
 * push() may reallocate the slot arena, so ops only take references after the
 * output slot exists.
 */
class Tape {
 public:
  struct Slot {
    int rows = 0, cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    int param_offset = -1;
  };

  int leaf(int rows, int cols, const double* data) { return push(rows, cols, data, -1); }

  int param(int rows, int cols, const double* data, int offset) {
    return push(rows, cols, data, offset);
  }

  int matmul(int a, int b) {
    if (slots_[a].cols != slots_[b].rows)
      throw std::invalid_argument("tape: matmul shape mismatch");
    const int n = slots_[a].rows, k = slots_[a].cols, m = slots_[b].cols;
    const int out = push(n, m);
    const Slot& A = slots_[a];
    const Slot& B = slots_[b];
    auto& C = slots_[out].val;
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < k; ++p) {
        const double av = A.val[i * k + p];
        if (av == 0.0) continue;
        for (int j = 0; j < m; ++j) C[i * m + j] += av * B.val[p * m + j];
      }
    backs_.push_back([a, b, out, n, k, m](Tape& t) {
      const auto& go = t.slots_[out].grad;
      auto& ga = t.slots_[a].grad;
      auto& gb = t.slots_[b].grad;
      const auto& av = t.slots_[a].val;
      const auto& bv = t.slots_[b].val;
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          for (int j = 0; j < m; ++j) acc += go[i * m + j] * bv[p * m + j];
          ga[i * k + p] += acc;
        }
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          const double av_ip = av[i * k + p];
          if (av_ip == 0.0) continue;
          for (int j = 0; j < m; ++j) gb[p * m + j] += av_ip * go[i * m + j];
        }
    });
    return out;
  }

  int add(int a, int b) {
    if (slots_[a].rows != slots_[b].rows || slots_[a].cols != slots_[b].cols)
      throw std::invalid_argument("tape: add shape mismatch");
    const int out = push(slots_[a].rows, slots_[a].cols);
    const Slot& A = slots_[a];
    const Slot& B = slots_[b];
    auto& C = slots_[out].val;
    for (size_t i = 0; i < C.size(); ++i) C[i] = A.val[i] + B.val[i];
    backs_.push_back([a, b, out](Tape& t) {
      const auto& go = t.slots_[out].grad;
      auto& ga = t.slots_[a].grad;
      auto& gb = t.slots_[b].grad;
      for (size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
    });
    return out;
  }

  /// a: NxC plus a 1xC row broadcast over all rows.
  int add_row(int a, int row) {
    if (slots_[row].rows != 1 || slots_[row].cols != slots_[a].cols)
      throw std::invalid_argument("tape: add_row shape");
    const int rows = slots_[a].rows, cols = slots_[a].cols;
    const int out = push(rows, cols);
    const Slot& A = slots_[a];
    const Slot& R = slots_[row];
    auto& C = slots_[out].val;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) C[i * cols + j] = A.val[i * cols + j] + R.val[j];
    backs_.push_back([a, row, out, rows, cols](Tape& t) {
      const auto& go = t.slots_[out].grad;
      auto& ga = t.slots_[a].grad;
      auto& gr = t.slots_[row].grad;
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          ga[i * cols + j] += go[i * cols + j];
          gr[j] += go[i * cols + j];
        }
    });
    return out;
  }

  int tanh_op(int a) {
    const int out = push(slots_[a].rows, slots_[a].cols);
    const Slot& A = slots_[a];
    auto& C = slots_[out].val;
    for (size_t i = 0; i < C.size(); ++i) C[i] = std::tanh(A.val[i]);
    backs_.push_back([a, out](Tape& t) {
      const auto& go = t.slots_[out].grad;
      const auto& y = t.slots_[out].val;
      auto& ga = t.slots_[a].grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += (1.0 - y[i] * y[i]) * go[i];
    });
    return out;
  }

  int scale(int a, double c) {
    const int out = push(slots_[a].rows, slots_[a].cols);
    const Slot& A = slots_[a];
    auto& C = slots_[out].val;
    for (size_t i = 0; i < C.size(); ++i) C[i] = c * A.val[i];
    backs_.push_back([a, out, c](Tape& t) {
      const auto& go = t.slots_[out].grad;
      auto& ga = t.slots_[a].grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
    });
    return out;
  }

  /// NxC -> 1xC column means.
  int mean_rows(int a) {
    const int rows = slots_[a].rows, cols = slots_[a].cols;
    const int out = push(1, cols);
    const Slot& A = slots_[a];
    auto& C = slots_[out].val;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) C[j] += A.val[i * cols + j];
    for (int j = 0; j < cols; ++j) C[j] /= rows;
    backs_.push_back([a, out, rows, cols](Tape& t) {
      const auto& go = t.slots_[out].grad;
      auto& ga = t.slots_[a].grad;
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) ga[i * cols + j] += go[j] / rows;
    });
    return out;
  }

  int sum_all(int a) {
    const int out = push(1, 1);
    const Slot& A = slots_[a];
    double s = 0.0;
    for (double v : A.val) s += v;
    slots_[out].val[0] = s;
    backs_.push_back([a, out](Tape& t) {
      const double go = t.slots_[out].grad[0];
      auto& ga = t.slots_[a].grad;
      for (double& g : ga) g += go;
    });
    return out;
  }

  /// Row-weighted softmax cross-entropy against integer targets; returns 1x1.
  int softmax_ce(int logits, std::vector<int> targets, std::vector<double> row_weights) {
    if (static_cast<int>(targets.size()) != slots_[logits].rows ||
        static_cast<int>(row_weights.size()) != slots_[logits].rows)
      throw std::invalid_argument("tape: softmax_ce row mismatch");
    const int out = push(1, 1);
    const Slot& L = slots_[logits];
    double total = 0.0;
    for (int i = 0; i < L.rows; ++i) {
      if (row_weights[i] == 0.0) continue;
      const double* row = L.val.data() + static_cast<size_t>(i) * L.cols;
      double mx = row[0];
      for (int j = 1; j < L.cols; ++j) mx = std::max(mx, row[j]);
      double lse = 0.0;
      for (int j = 0; j < L.cols; ++j) lse += std::exp(row[j] - mx);
      lse = mx + std::log(lse);
      total += row_weights[i] * (lse - row[targets[i]]);
    }
    slots_[out].val[0] = total;
    backs_.push_back([logits, out, targets = std::move(targets),
                      row_weights = std::move(row_weights)](Tape& t) {
      const double go = t.slots_[out].grad[0];
      const Slot& L = t.slots_[logits];
      auto& gl = t.slots_[logits].grad;
      for (int i = 0; i < L.rows; ++i) {
        if (row_weights[i] == 0.0) continue;
        const double* row = L.val.data() + static_cast<size_t>(i) * L.cols;
        double mx = row[0];
        for (int j = 1; j < L.cols; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < L.cols; ++j) z += std::exp(row[j] - mx);
        for (int j = 0; j < L.cols; ++j) {
          const double p = std::exp(row[j] - mx) / z;
          gl[i * L.cols + j] += go * row_weights[i] * (p - (j == targets[i] ? 1.0 : 0.0));
        }
      }
    });
    return out;
  }

  /// Sum_i w_i (softplus(x_i) - z_i x_i); the BCE of sigmoid(x) against z.
  int bce_logit(int x, std::vector<double> z, std::vector<double> w) {
    if (z.size() != slots_[x].val.size() || w.size() != slots_[x].val.size())
      throw std::invalid_argument("tape: bce size mismatch");
    const int out = push(1, 1);
    const Slot& X = slots_[x];
    double total = 0.0;
    for (size_t i = 0; i < X.val.size(); ++i) {
      const double v = X.val[i];
      const double sp = v > 30.0 ? v : std::log1p(std::exp(v));
      total += w[i] * (sp - z[i] * v);
    }
    slots_[out].val[0] = total;
    backs_.push_back([x, out, z = std::move(z), w = std::move(w)](Tape& t) {
      const double go = t.slots_[out].grad[0];
      const auto& xv = t.slots_[x].val;
      auto& gx = t.slots_[x].grad;
      for (size_t i = 0; i < xv.size(); ++i) {
        const double sig = 1.0 / (1.0 + std::exp(-xv[i]));
        gx[i] += go * w[i] * (sig - z[i]);
      }
    });
    return out;
  }

  /// Sum_i w_i (exp(s_i) - r_i s_i); the split Bregman in terms of log-rate.
  int poisson_split(int s, std::vector<double> r, std::vector<double> w) {
    if (r.size() != slots_[s].val.size() || w.size() != slots_[s].val.size())
      throw std::invalid_argument("tape: poisson_split size mismatch");
    const int out = push(1, 1);
    const Slot& S = slots_[s];
    double total = 0.0;
    for (size_t i = 0; i < S.val.size(); ++i)
      total += w[i] * (std::exp(S.val[i]) - r[i] * S.val[i]);
    slots_[out].val[0] = total;
    backs_.push_back([s, out, r = std::move(r), w = std::move(w)](Tape& t) {
      const double go = t.slots_[out].grad[0];
      const auto& sv = t.slots_[s].val;
      auto& gs = t.slots_[s].grad;
      for (size_t i = 0; i < sv.size(); ++i)
        gs[i] += go * w[i] * (std::exp(sv[i]) - r[i]);
    });
    return out;
  }

  /// Sum_i w_i ||a_i - target_i||^2 over rows; returns 1x1.
  int weighted_sqerr(int a, std::vector<double> target, std::vector<double> row_weights) {
    if (target.size() != slots_[a].val.size() ||
        static_cast<int>(row_weights.size()) != slots_[a].rows)
      throw std::invalid_argument("tape: sqerr size mismatch");
    const int out = push(1, 1);
    const Slot& A = slots_[a];
    double total = 0.0;
    for (int i = 0; i < A.rows; ++i) {
      double se = 0.0;
      for (int j = 0; j < A.cols; ++j) {
        const double d = A.val[i * A.cols + j] - target[i * A.cols + j];
        se += d * d;
      }
      total += row_weights[i] * se;
    }
    slots_[out].val[0] = total;
    backs_.push_back([a, out, target = std::move(target),
                      row_weights = std::move(row_weights)](Tape& t) {
      const double go = t.slots_[out].grad[0];
      const Slot& A = t.slots_[a];
      auto& ga = t.slots_[a].grad;
      for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j)
          ga[i * A.cols + j] += go * row_weights[i] * 2.0 *
                                (A.val[i * A.cols + j] - target[i * A.cols + j]);
    });
    return out;
  }

  const std::vector<double>& value(int node) const { return slots_[node].val; }
  double scalar(int node) const { return slots_[node].val.at(0); }
  int rows(int node) const { return slots_[node].rows; }
  int cols(int node) const { return slots_[node].cols; }

  /// Seed d(node)=1, sweep backwards, add parameter gradients into grad_out.
  void backward(int node, std::vector<double>& grad_out) {
    for (Slot& s : slots_) std::fill(s.grad.begin(), s.grad.end(), 0.0);
    if (slots_[node].val.size() != 1)
      throw std::invalid_argument("tape: backward needs a scalar node");
    slots_[node].grad[0] = 1.0;
    for (auto it = backs_.rbegin(); it != backs_.rend(); ++it) (*it)(*this);
    for (const Slot& s : slots_) {
      if (s.param_offset < 0) continue;
      for (size_t i = 0; i < s.grad.size(); ++i) grad_out[s.param_offset + i] += s.grad[i];
    }
  }

 private:
  int push(int rows, int cols, const double* data = nullptr, int param_offset = -1) {
    Slot s;
    s.rows = rows;
    s.cols = cols;
    if (data)
      s.val.assign(data, data + static_cast<size_t>(rows) * cols);
    else
      s.val.assign(static_cast<size_t>(rows) * cols, 0.0);
    s.grad.assign(static_cast<size_t>(rows) * cols, 0.0);
    s.param_offset = param_offset;
    slots_.push_back(std::move(s));
    return static_cast<int>(slots_.size()) - 1;
  }

  std::vector<Slot> slots_;
  std::vector<std::function<void(Tape&)>> backs_;
};

}  // namespace branchflow
