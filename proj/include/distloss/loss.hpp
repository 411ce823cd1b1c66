#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distloss/errors.hpp"
#include "distloss/label_space.hpp"
#include "distloss/pseudo.hpp"
#include "distloss/softsort.hpp"

namespace distloss {

enum class LossBase { L1, L2 };
enum class Weighting { uniform, inverse_probability };

struct SeqLossKind {
  LossBase base = LossBase::L2;
  Weighting weighting = Weighting::inverse_probability;
  friend bool operator==(const SeqLossKind&, const SeqLossKind&) = default;
};

/// "L1", "L2", "INV-L1", "INV-L2".
inline std::string to_string(const SeqLossKind& kind) {
  std::string s = kind.weighting == Weighting::inverse_probability ? "INV-" : "";
  return s + (kind.base == LossBase::L1 ? "L1" : "L2");
}

inline SeqLossKind parse_seq_loss_kind(std::string_view text) {
  SeqLossKind kind;
  if (text.starts_with("INV-")) {
    kind.weighting = Weighting::inverse_probability;
    text.remove_prefix(4);
  } else {
    kind.weighting = Weighting::uniform;
  }
  if (text == "L1") kind.base = LossBase::L1;
  else if (text == "L2") kind.base = LossBase::L2;
  else throw Error(ErrorCode::ConfigError, "unknown sequence loss kind '" + std::string(text) + "'");
  return kind;
}

struct DistLossConfig {
  SeqLossKind kind;
  double dist_weight = 1.0;
  double weight_floor = 1e-4;
  bool normalize_weights = true;
  /// When false the sample-level term is unweighted regardless of kind.weighting.
  bool weight_sample_term = true;
};

struct SeqLossValue {
  double value = 0.0;
  std::vector<double> grad;
};

struct LossOutput {
  double total = 0.0;
  double sample_term = 0.0;
  double dist_term = 0.0;
  std::vector<double> grad_predictions;
};

/// Mean of w_i * |p_i - t_i| (L1) or w_i * (p_i - t_i)^2 (L2), with its
/// exact gradient in p. The L1 subgradient uses sign(0) = 0.
inline SeqLossValue weighted_seq_loss(std::span<const double> pred, std::span<const double> target,
                                      std::span<const double> weights, const SeqLossKind& kind) {
  require(pred.size() == target.size() && pred.size() == weights.size(), ErrorCode::ShapeMismatch,
          "prediction, target and weight sequences must have equal length");
  require(!pred.empty(), ErrorCode::ShapeMismatch, "sequences must be non-empty");
  for (double w : weights)
    require(std::isfinite(w) && w >= 0.0, ErrorCode::InvalidWeight, "weights must be >= 0");

  const double inv_n = 1.0 / static_cast<double>(pred.size());
  SeqLossValue out;
  out.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    if (kind.base == LossBase::L1) {
      out.value += weights[i] * std::abs(r);
      out.grad[i] = weights[i] * static_cast<double>((r > 0.0) - (r < 0.0)) * inv_n;
    } else {
      out.value += weights[i] * r * r;
      out.grad[i] = 2.0 * weights[i] * r * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

/// w_i = 1 / max(p(bin of targets_i), floor), optionally rescaled to mean 1.
inline std::vector<double> inverse_weights(const LabelDensity& density,
                                           std::span<const double> targets, double floor,
                                           bool normalize) {
  require(std::isfinite(floor) && floor > 0.0 && floor <= 1.0, ErrorCode::InvalidWeight,
          "probability floor must lie in (0, 1]");
  std::vector<double> w(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    w[i] = 1.0 / std::max(density.probs[bin_index(density.space, targets[i])], floor);
  if (normalize && !w.empty()) {
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (double& v : w) v /= mean;
  }
  return w;
}

inline std::vector<double> term_weights(const LabelDensity& density, std::span<const double> targets,
                                        const DistLossConfig& cfg, bool weighted) {
  if (!weighted || cfg.kind.weighting == Weighting::uniform)
    return std::vector<double>(targets.size(), 1.0);
  return inverse_weights(density, targets, cfg.weight_floor, cfg.normalize_weights);
}

/// Sample-level error plus dist_weight times the distance between the
/// soft-sorted predictions and the pseudo-label sequence.
inline LossOutput dist_loss(std::span<const double> predictions, std::span<const double> labels,
                            const PseudoSequence& pseudo_labels, const LabelDensity& density,
                            const SoftSortConfig& sort_cfg, const DistLossConfig& cfg) {
  const std::size_t m = predictions.size();
  require(m >= 1 && labels.size() == m && pseudo_labels.values.size() == m,
          ErrorCode::ShapeMismatch, "predictions, labels and pseudo-labels must share length M");
  require(std::isfinite(cfg.dist_weight) && cfg.dist_weight >= 0.0, ErrorCode::ConfigError,
          "dist_weight must be finite and non-negative");

  LossOutput out;
  const auto sample_w = term_weights(density, labels, cfg, cfg.weight_sample_term);
  auto sample = weighted_seq_loss(predictions, labels, sample_w, cfg.kind);
  out.sample_term = sample.value;
  out.grad_predictions = std::move(sample.grad);

  SoftSortConfig sc = sort_cfg;
  sc.direction = SortDirection::ascending;
  const SoftSortResult sorted = soft_sort(predictions, sc);
  const auto dist_w = term_weights(density, pseudo_labels.values, cfg, true);
  const auto dist = weighted_seq_loss(sorted.sorted_values, pseudo_labels.values, dist_w, cfg.kind);
  out.dist_term = dist.value;
  out.total = out.sample_term + cfg.dist_weight * out.dist_term;

  if (cfg.dist_weight != 0.0) {
    const auto back = soft_sort_vjp(sorted, dist.grad);
    for (std::size_t i = 0; i < m; ++i) out.grad_predictions[i] += cfg.dist_weight * back[i];
  }
  return out;
}

}  // namespace distloss
