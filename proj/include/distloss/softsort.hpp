#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "distloss/errors.hpp"

namespace distloss {

enum class SortDirection { ascending, descending };

/// Half-open index range [begin, end) of one pooled block.
struct Block {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const Block&, const Block&) = default;
};

struct IsotonicFit {
  std::vector<double> fitted;
  std::vector<Block> blocks;
};

/// epsilon == nullopt resolves to default_sort_epsilon() of the input.
struct SoftSortConfig {
  std::optional<double> epsilon;
  SortDirection direction = SortDirection::ascending;
};

struct SoftSortResult {
  std::vector<double> sorted_values;
  /// permutation[j] is the input index placed at output position j.
  std::vector<std::size_t> permutation;
  /// Pooled blocks, in output order.
  std::vector<Block> blocks;
  SortDirection direction = SortDirection::ascending;
  double epsilon = 0.0;
};

namespace detail {

struct PavBlock {
  std::size_t begin;
  std::size_t end;
  double anchor_sum;
  double data_sum;

  double len() const { return static_cast<double>(end - begin); }
  double anchor_mean() const { return anchor_sum / len(); }
  double data_mean() const { return data_sum / len(); }
};

/// Pool-adjacent-violators for the non-increasing least-squares fit of
/// v_i = scale * anchor_i - data_i. The two parts are pooled separately so a
/// huge anchor scale never swamps the data in floating point.
inline std::vector<PavBlock> pav_nonincreasing(std::span<const double> anchor, double scale,
                                               std::span<const double> data) {
  const std::size_t n = anchor.size();
  std::vector<PavBlock> stack;
  stack.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    stack.push_back({i, i + 1, anchor[i], data[i]});
    while (stack.size() > 1) {
      const PavBlock& next = stack[stack.size() - 1];
      const PavBlock& prev = stack[stack.size() - 2];
      // Violation: mean(prev) < mean(next).
      const double anchor_gap = (prev.anchor_mean() - next.anchor_mean()) * scale;
      const double data_gap = prev.data_mean() - next.data_mean();
      if (!(anchor_gap < data_gap)) break;
      PavBlock merged{prev.begin, next.end, prev.anchor_sum + next.anchor_sum,
                      prev.data_sum + next.data_sum};
      stack.pop_back();
      stack.back() = merged;
    }
  }
  return stack;
}

inline void require_finite(std::span<const double> values) {
  for (double v : values)
    require(std::isfinite(v), ErrorCode::InvalidInput, "input must be finite");
}

}  // namespace detail

/// Non-increasing isotonic regression (least squares) by pool-adjacent-violators.
inline IsotonicFit isotonic_regression(std::span<const double> values) {
  detail::require_finite(values);
  const std::vector<double> zeros(values.size(), 0.0);
  const auto pooled = detail::pav_nonincreasing(values, 1.0, zeros);
  IsotonicFit fit;
  fit.fitted.resize(values.size());
  fit.blocks.reserve(pooled.size());
  for (const auto& b : pooled) {
    const double mean = b.anchor_mean();
    std::fill(fit.fitted.begin() + static_cast<std::ptrdiff_t>(b.begin),
              fit.fitted.begin() + static_cast<std::ptrdiff_t>(b.end), mean);
    fit.blocks.push_back({b.begin, b.end});
  }
  return fit;
}

inline double default_sort_epsilon(std::span<const double> values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return 1e-3 * (*hi - *lo + 1e-12) / static_cast<double>(values.size());
}

/// Quadratically regularized sort: the projection of rho / epsilon onto the
/// permutahedron of the input, rho = (n, n-1, ..., 1). Small epsilon
/// approaches the hard sort; pooled blocks are replaced by their mean plus
/// evenly spaced offsets of 1/epsilon.
inline SoftSortResult soft_sort(std::span<const double> values, const SoftSortConfig& config = {}) {
  require(!values.empty(), ErrorCode::EmptySample, "cannot sort an empty sequence");
  detail::require_finite(values);
  const std::size_t n = values.size();
  const double eps = config.epsilon ? *config.epsilon : default_sort_epsilon(values);
  require(std::isfinite(eps) && eps > 0.0, ErrorCode::InvalidInput,
          "epsilon must be finite and positive");

  SoftSortResult out;
  out.direction = config.direction;
  out.epsilon = eps;
  out.permutation.resize(n);
  std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
  if (config.direction == SortDirection::ascending) {
    std::stable_sort(out.permutation.begin(), out.permutation.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  } else {
    std::stable_sort(out.permutation.begin(), out.permutation.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  }

  // The projection is solved natively in descending order.
  const bool flip = config.direction == SortDirection::ascending;
  std::vector<double> desc(n);
  std::vector<double> rho(n);
  for (std::size_t k = 0; k < n; ++k) {
    desc[k] = values[out.permutation[flip ? n - 1 - k : k]];
    rho[k] = static_cast<double>(n - k);
  }
  const auto pooled = detail::pav_nonincreasing(rho, 1.0 / eps, desc);

  std::vector<double> mu(n);
  for (const auto& b : pooled) {
    const double data_mean = b.data_mean();
    const double rho_mean = b.anchor_mean();
    for (std::size_t k = b.begin; k < b.end; ++k)
      mu[k] = b.end - b.begin == 1 ? desc[k] : data_mean + (rho[k] - rho_mean) / eps;
  }

  out.sorted_values.resize(n);
  out.blocks.reserve(pooled.size());
  if (flip) {
    for (std::size_t k = 0; k < n; ++k) out.sorted_values[k] = mu[n - 1 - k];
    for (auto it = pooled.rbegin(); it != pooled.rend(); ++it)
      out.blocks.push_back({n - it->end, n - it->begin});
  } else {
    out.sorted_values = std::move(mu);
    for (const auto& b : pooled) out.blocks.push_back({b.begin, b.end});
  }
  return out;
}

/// Vector-Jacobian product of soft_sort at its input. The Jacobian with
/// respect to the sorted input is block-diagonal averaging, so the product is
/// a per-block mean of `upstream` scattered back through the permutation.
inline std::vector<double> soft_sort_vjp(const SoftSortResult& result,
                                         std::span<const double> upstream) {
  const std::size_t n = result.sorted_values.size();
  require(upstream.size() == n, ErrorCode::ShapeMismatch,
          "upstream gradient length differs from the sorted sequence");
  std::vector<double> grad(n);
  for (const auto& b : result.blocks) {
    double mean = 0.0;
    for (std::size_t j = b.begin; j < b.end; ++j) mean += upstream[j];
    mean /= static_cast<double>(b.size());
    for (std::size_t j = b.begin; j < b.end; ++j)
      grad[result.permutation[j]] = b.size() == 1 ? upstream[j] : mean;
  }
  return grad;
}

}  // namespace distloss
