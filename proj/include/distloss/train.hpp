#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "distloss/dataset.hpp"
#include "distloss/evaluation.hpp"
#include "distloss/label_space.hpp"
#include "distloss/loss.hpp"
#include "distloss/nnet.hpp"
#include "distloss/pseudo.hpp"
#include "distloss/rng.hpp"
#include "distloss/softsort.hpp"

namespace distloss {

struct TrainConfig {
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::relu;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  /// Epochs (0-based) at whose start the learning rate is multiplied by
  /// lr_decay. nullopt places them at 60/90 and 80/90 of the run.
  std::optional<std::vector<std::size_t>> lr_milestones;
  double lr_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  /// Drop the final short batch instead of building pseudo-labels for its size.
  bool drop_last = false;
  /// Only the output layer is updated (fine-tuning protocol).
  bool last_layer_only = false;
  bool init_bias_to_mean = true;

  DistLossConfig loss;
  std::optional<double> sort_epsilon;

  double y_min = 0.0;
  double y_max = 10.0;
  double delta_y = 0.1;
  std::optional<double> bandwidth;

  ShotScheme scheme = ShotScheme::absolute_counts;
  double region_low = 20.0;
  double region_high = 100.0;
  double gm_eps = 1e-10;

  std::uint64_t seed = 0;
};

inline std::vector<std::size_t> resolve_milestones(const TrainConfig& cfg) {
  if (cfg.lr_milestones) return *cfg.lr_milestones;
  const double e = static_cast<double>(cfg.epochs);
  return {static_cast<std::size_t>(std::lround(e * 60.0 / 90.0)),
          static_cast<std::size_t>(std::lround(e * 80.0 / 90.0))};
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_sample_term = 0.0;
  double train_dist_term = 0.0;
  RegionReport val;
};

struct TrainResult {
  MlpParams params;
  AdamState optimizer;
  std::vector<EpochLog> log;
};

inline Eigen::MatrixXd gather_inputs(const RegressionDataset& ds, std::span<const std::size_t> rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(ds.dim), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto r = ds.row(rows[j]);
    for (std::size_t k = 0; k < ds.dim; ++k)
      x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = r[k];
  }
  return x;
}

inline std::vector<double> predict(const MlpParams& params, const RegressionDataset& ds,
                                   std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  constexpr std::size_t chunk = 4096;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const auto part = rows.subspan(start, std::min(chunk, rows.size() - start));
    const auto fr = forward(params, gather_inputs(ds, part));
    out.insert(out.end(), fr.predictions.begin(), fr.predictions.end());
  }
  return out;
}

inline LabelSpace train_label_space(const TrainConfig& cfg) {
  return make_label_space(cfg.y_min, cfg.y_max, cfg.delta_y);
}

inline RegionReport evaluate_split(const MlpParams& params, const RegressionDataset& ds, Split split,
                                   const ShotRegions& regions, const LabelSpace& space,
                                   double gm_eps) {
  const auto rows = ds.indices(split);
  const auto preds = predict(params, ds, rows);
  return region_metrics(preds, ds.targets_of(split), regions, space, gm_eps);
}

inline ShotRegions train_regions(const RegressionDataset& ds, const TrainConfig& cfg,
                                 const LabelSpace& space) {
  return assign_regions(ds.targets_of(Split::train), space, cfg.scheme, cfg.region_low,
                        cfg.region_high);
}

/// Mini-batch training against the Dist Loss objective. Shuffling,
/// initialization and everything else random derive from cfg.seed.
inline TrainResult train(const RegressionDataset& ds, const TrainConfig& cfg,
                         std::optional<MlpParams> warm_start = std::nullopt) {
  const auto train_rows = ds.indices(Split::train);
  require(!train_rows.empty(), ErrorCode::EmptyDataset, "no training rows");
  require(cfg.batch_size >= 1, ErrorCode::ConfigError, "batch_size must be >= 1");

  const LabelSpace space = train_label_space(cfg);
  const auto train_targets = ds.targets_of(Split::train);
  PseudoLabelCache pseudo(kde_density(space, train_targets, cfg.bandwidth));
  const ShotRegions regions = train_regions(ds, cfg, space);
  const bool has_val = !ds.indices(Split::val).empty();

  TrainResult res;
  if (warm_start) {
    res.params = std::move(*warm_start);
    require(res.params.input_dim() == ds.dim, ErrorCode::ShapeMismatch,
            "warm-start network does not match the dataset dimension");
  } else {
    std::vector<std::size_t> dims{ds.dim};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(1);
    res.params = init_mlp(dims, cfg.activation, sub_seed(cfg.seed, SeedStream::init));
    if (cfg.init_bias_to_mean) {
      const double mean =
          std::accumulate(train_targets.begin(), train_targets.end(), 0.0) /
          static_cast<double>(train_targets.size());
      res.params.layers.back().bias(0) = mean;
    }
  }
  res.optimizer = make_adam(res.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  std::vector<bool> trainable;
  if (cfg.last_layer_only) {
    trainable.assign(res.params.layers.size(), false);
    trainable.back() = true;
  }

  const auto milestones = resolve_milestones(cfg);
  const SoftSortConfig sort_cfg{cfg.sort_epsilon, SortDirection::ascending};
  Rng shuffle_rng(sub_seed(cfg.seed, SeedStream::shuffle));
  std::vector<std::size_t> order = train_rows;
  std::vector<double> batch_targets;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (std::find(milestones.begin(), milestones.end(), epoch) != milestones.end() && epoch > 0)
      res.optimizer.lr *= cfg.lr_decay;
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0, sample_sum = 0.0, dist_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      if (cfg.drop_last && len < cfg.batch_size && start > 0) break;
      const std::span<const std::size_t> rows(order.data() + start, len);
      batch_targets.resize(len);
      for (std::size_t j = 0; j < len; ++j) batch_targets[j] = ds.targets[rows[j]];

      const auto fr = forward(res.params, gather_inputs(ds, rows));
      const auto& seq = pseudo.get(static_cast<std::int64_t>(len));
      LossOutput lo;
      try {
        for (double p : fr.predictions)
          require(std::isfinite(p), ErrorCode::NonFiniteGradient, "non-finite prediction");
        lo = dist_loss(fr.predictions, batch_targets, seq, pseudo.density(), sort_cfg, cfg.loss);
        for (double g : lo.grad_predictions)
          require(std::isfinite(g), ErrorCode::NonFiniteGradient, "non-finite loss gradient");
        adam_step(res.params, backward(res.params, fr.tape, lo.grad_predictions), res.optimizer,
                  trainable);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteGradient) throw;
        throw Error(ErrorCode::NonFiniteGradient,
                    "epoch " + std::to_string(epoch) + ", batch at row " + std::to_string(start) +
                        ": " + e.what());
      }
      const auto w = static_cast<double>(len);
      loss_sum += w * lo.total;
      sample_sum += w * lo.sample_term;
      dist_sum += w * lo.dist_term;
      seen += len;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = res.optimizer.lr;
    entry.train_loss = loss_sum / static_cast<double>(seen);
    entry.train_sample_term = sample_sum / static_cast<double>(seen);
    entry.train_dist_term = dist_sum / static_cast<double>(seen);
    if (has_val) entry.val = evaluate_split(res.params, ds, Split::val, regions, space, cfg.gm_eps);
    res.log.push_back(std::move(entry));
  }
  return res;
}

}  // namespace distloss
