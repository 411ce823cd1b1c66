#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "distloss/errors.hpp"

namespace distloss {

/// Equal-width discretization of a label interval. Bin i covers
/// [centers[i], centers[i] + delta_y) and is represented by its lower bound.
struct LabelSpace {
  double y_min = 0.0;
  double y_max = 1.0;
  double delta_y = 1.0;
  std::size_t num_bins = 1;
  std::vector<double> centers;

  /// Upper edge of the last bin; may lie past y_max.
  double upper_edge() const { return y_min + static_cast<double>(num_bins) * delta_y; }
};

struct LabelDensity {
  LabelSpace space;
  std::vector<double> probs;
};

inline LabelSpace make_label_space(double y_min, double y_max, double delta_y) {
  require(std::isfinite(delta_y) && delta_y > 0.0, ErrorCode::InvalidBinWidth,
          "bin width must be finite and positive");
  require(std::isfinite(y_min) && std::isfinite(y_max), ErrorCode::EmptyRange,
          "label range must be finite");
  require(y_max > y_min, ErrorCode::EmptyRange, "y_max must exceed y_min");

  // A quotient within rounding noise of an integer counts as that integer,
  // so (0, 1, 0.1) yields 10 bins rather than 11.
  const double q = (y_max - y_min) / delta_y;
  const double nearest = std::round(q);
  const double bins = std::abs(q - nearest) <= 1e-9 * std::max(1.0, q) ? nearest : std::ceil(q);

  LabelSpace space;
  space.y_min = y_min;
  space.y_max = y_max;
  space.delta_y = delta_y;
  space.num_bins = std::max<std::size_t>(1, static_cast<std::size_t>(bins));
  space.centers.resize(space.num_bins);
  for (std::size_t i = 0; i < space.num_bins; ++i)
    space.centers[i] = y_min + static_cast<double>(i) * delta_y;
  return space;
}

/// Index of the bin containing y. Out-of-range values clamp to the edge bins.
inline std::size_t bin_index(const LabelSpace& space, double y) {
  require(std::isfinite(y), ErrorCode::InvalidLabel, "label must be finite");
  const std::size_t last = space.num_bins - 1;
  if (y < space.y_min) return 0;
  const double pos = std::floor((y - space.y_min) / space.delta_y);
  if (pos >= static_cast<double>(last)) {
    // Rounding can put y just below centers[last].
    return y < space.centers[last] ? last - 1 : last;
  }
  auto i = static_cast<std::size_t>(std::max(0.0, pos));
  // Snap to the stored centers so centers[i] <= y < centers[i + 1] holds exactly.
  if (i > 0 && y < space.centers[i]) --i;
  if (i < last && y >= space.centers[i + 1]) ++i;
  return i;
}

inline LabelDensity histogram_density(const LabelSpace& space, std::span<const double> labels) {
  require(!labels.empty(), ErrorCode::EmptyDataset, "no labels");
  LabelDensity density{space, std::vector<double>(space.num_bins, 0.0)};
  for (double y : labels) density.probs[bin_index(space, y)] += 1.0;
  const double n = static_cast<double>(labels.size());
  for (double& p : density.probs) p /= n;
  return density;
}

/// Silverman's rule of thumb, floored at half a bin width.
inline double silverman_bandwidth(const LabelSpace& space, std::span<const double> labels) {
  require(!labels.empty(), ErrorCode::EmptyDataset, "no labels");
  const double floor_h = 0.5 * space.delta_y;
  const std::size_t n = labels.size();
  if (n < 2) return floor_h;
  double mean = 0.0;
  for (double y : labels) mean += y;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double y : labels) ss += (y - mean) * (y - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double h = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
  return std::max(h, floor_h);
}

/// Gaussian KDE evaluated at the bin centers and normalized over bins.
/// bandwidth == nullopt selects silverman_bandwidth().
inline LabelDensity kde_density(const LabelSpace& space, std::span<const double> labels,
                                std::optional<double> bandwidth = std::nullopt) {
  require(!labels.empty(), ErrorCode::EmptyDataset, "no labels");
  if (bandwidth) {
    require(std::isfinite(*bandwidth) && *bandwidth > 0.0, ErrorCode::InvalidBandwidth,
            "bandwidth must be finite and positive");
  }
  for (double y : labels)
    require(std::isfinite(y), ErrorCode::InvalidLabel, "label must be finite");
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(space, labels);
  const double inv_two_h2 = 1.0 / (2.0 * h * h);

  // Log-sum-exp per bin keeps tiny bandwidths from underflowing to all zeros.
  std::vector<double> log_mass(space.num_bins);
  for (std::size_t i = 0; i < space.num_bins; ++i) {
    const double c = space.centers[i];
    double best = -std::numeric_limits<double>::infinity();
    for (double y : labels) best = std::max(best, -(c - y) * (c - y) * inv_two_h2);
    double acc = 0.0;
    for (double y : labels) acc += std::exp(-(c - y) * (c - y) * inv_two_h2 - best);
    log_mass[i] = best + std::log(acc);
  }
  const double top = *std::max_element(log_mass.begin(), log_mass.end());
  LabelDensity density{space, std::vector<double>(space.num_bins)};
  double total = 0.0;
  for (std::size_t i = 0; i < space.num_bins; ++i) {
    density.probs[i] = std::exp(log_mass[i] - top);
    total += density.probs[i];
  }
  for (double& p : density.probs) p /= total;
  return density;
}

}  // namespace distloss
