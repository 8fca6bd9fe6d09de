#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "branchflow/conditional_path.hpp"

namespace branchflow {

/// Per-element model output. R^theta = exp(log_splits) and
/// rho^theta = sigmoid(delete_logit), so both links keep their ranges.
struct PredictionElement {
  std::vector<double> endpoint_mean;
  std::vector<double> token_logits;
  double log_splits = 0.0;
  double delete_logit = 0.0;
};

using Predictions = std::vector<PredictionElement>;

struct LossWeights {
  double lambda_c = 1.0;
  double lambda_d = 1.0;
  // optional hook for h(t)-proportional weighting; null means constant 1
  std::function<double(double)> time_weight;

  double weight_at(double t) const { return time_weight ? time_weight(t) : 1.0; }
};

/// Poisson-Bregman split term: R_pred - R_target ln(R_pred).
inline double split_loss(int r_target, double r_pred) {
  if (r_target < 0) throw std::invalid_argument("split_loss: target must be >= 0");
  if (!(r_pred > 0.0)) throw std::domain_error("split_loss: prediction must be > 0");
  return r_pred - r_target * std::log(r_pred);
}

/// Binary cross-entropy; predictions are clamped away from {0,1}.
inline double deletion_loss(int rho_target, double rho_pred) {
  if (rho_target != 0 && rho_target != 1)
    throw std::invalid_argument("deletion_loss: target must be 0 or 1");
  const double eps = 1e-7;
  const double p = std::min(1.0 - eps, std::max(eps, rho_pred));
  return -(rho_target * std::log(p) + (1 - rho_target) * std::log1p(-p));
}

struct BaseLossParts {
  double continuous = 0.0;
  double discrete = 0.0;
};

/// Squared error toward the anchor plus cross-entropy against the anchor token.
inline BaseLossParts base_loss_parts(const AnchorState& anchor, const PredictionElement& pred,
                                     double lambda_c, double lambda_d) {
  BaseLossParts parts;
  if (!anchor.continuous.empty()) {
    if (pred.endpoint_mean.size() != anchor.continuous.size())
      throw std::invalid_argument("base_loss: continuous dimension mismatch");
    double se = 0.0;
    for (size_t i = 0; i < anchor.continuous.size(); ++i) {
      const double diff = pred.endpoint_mean[i] - anchor.continuous[i];
      se += diff * diff;
    }
    parts.continuous = lambda_c * se;
  }
  if (!pred.token_logits.empty()) {
    const auto& logits = pred.token_logits;
    if (anchor.token < 0 || anchor.token >= static_cast<int>(logits.size()))
      throw std::invalid_argument("base_loss: anchor token outside the alphabet");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    parts.discrete = lambda_d * (lse - logits[anchor.token]);
  }
  return parts;
}

inline double base_loss(const AnchorState& anchor, const PredictionElement& pred,
                        double lambda_c = 1.0, double lambda_d = 1.0) {
  const BaseLossParts p = base_loss_parts(anchor, pred, lambda_c, lambda_d);
  return p.continuous + p.discrete;
}

struct CbfBatchItem {
  PathTargets targets;
  Predictions predictions;
  double t = 0.5;
};

struct CbfLossBreakdown {
  double split = 0.0;
  double del = 0.0;
  double continuous = 0.0;
  double discrete = 0.0;
  double total = 0.0;
};

/**
 * Reference (scalar) CBF loss: mean over the batch of the per-sample sum of
 * the three Bregman terms. Fixed elements contribute nothing. The tape-based
 * training loss must agree with this to float precision.
 */
inline CbfLossBreakdown cbf_loss(const std::vector<CbfBatchItem>& batch,
                                 const LossWeights& weights = {}) {
  if (batch.empty()) throw std::invalid_argument("cbf_loss: empty batch");
  CbfLossBreakdown sum;
  for (const CbfBatchItem& item : batch) {
    if (item.targets.size() != item.predictions.size())
      throw std::invalid_argument("cbf_loss: targets/predictions length mismatch");
    const double tw = weights.weight_at(item.t);
    for (size_t i = 0; i < item.targets.size(); ++i) {
      const ElementTargets& tg = item.targets[i];
      if (tg.fixed) continue;
      const PredictionElement& pr = item.predictions[i];
      sum.split += split_loss(tg.remaining_splits, std::exp(pr.log_splits));
      sum.del += deletion_loss(tg.deleted, 1.0 / (1.0 + std::exp(-pr.delete_logit)));
      const BaseLossParts base =
          base_loss_parts(tg.anchor, pr, tw * weights.lambda_c, tw * weights.lambda_d);
      sum.continuous += base.continuous;
      sum.discrete += base.discrete;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  sum.split *= inv;
  sum.del *= inv;
  sum.continuous *= inv;
  sum.discrete *= inv;
  sum.total = sum.split + sum.del + sum.continuous + sum.discrete;
  return sum;
}

}  // namespace branchflow
