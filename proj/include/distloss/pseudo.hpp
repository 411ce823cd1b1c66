#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "distloss/errors.hpp"
#include "distloss/label_space.hpp"

namespace distloss {

enum class SequenceSource { labels, predictions };

/// Ascending sequence of bin values whose multiset encodes a distribution.
struct PseudoSequence {
  std::vector<double> values;
  SequenceSource source = SequenceSource::labels;
};

struct FrequencyPlan {
  std::size_t m = 0;
  std::vector<double> real_freqs;
  std::vector<std::int64_t> int_freqs;
};

inline std::vector<double> expected_frequencies(const LabelDensity& density, std::int64_t m) {
  require(m >= 1, ErrorCode::InvalidSampleCount, "sample count must be at least 1");
  std::vector<double> out(density.probs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(m) * density.probs[i];
  return out;
}

/// Floors every expected frequency, then hands the a = m - sum(floor) leftover
/// units out one each to the first ceil(a/2) and the last floor(a/2) bins.
inline std::vector<std::int64_t> round_frequencies(std::span<const double> real_freqs,
                                                   std::int64_t m) {
  require(m >= 1, ErrorCode::InvalidSampleCount, "sample count must be at least 1");
  double total = 0.0;
  for (double f : real_freqs) {
    require(std::isfinite(f) && f >= 0.0, ErrorCode::InvalidFrequency,
            "frequencies must be finite and non-negative");
    total += f;
  }
  require(std::abs(total - static_cast<double>(m)) <= 1e-6, ErrorCode::FrequencySumMismatch,
          "frequencies do not sum to the sample count");

  const std::size_t bins = real_freqs.size();
  std::vector<std::int64_t> out(bins);
  std::int64_t floor_sum = 0;
  for (std::size_t i = 0; i < bins; ++i) {
    // 2.9999999999999996 is a rounding artifact of 3, not a frequency below 3.
    const double near = std::round(real_freqs[i]);
    const double f = std::abs(real_freqs[i] - near) <= 1e-9 ? near : std::floor(real_freqs[i]);
    out[i] = static_cast<std::int64_t>(f);
    floor_sum += out[i];
  }
  const std::int64_t a = m - floor_sum;
  require(a >= 0 && a <= static_cast<std::int64_t>(bins), ErrorCode::FrequencySumMismatch,
          "rounding remainder exceeds the number of bins");

  const std::int64_t head = (a + 1) / 2;
  const std::int64_t tail = a / 2;
  const auto b = static_cast<std::int64_t>(bins);
  for (std::int64_t i = 1; i <= b; ++i) {
    if (i <= head || i > b - tail) out[static_cast<std::size_t>(i - 1)] += 1;
  }
  return out;
}

inline PseudoSequence expand_pseudo_labels(const LabelSpace& space,
                                           std::span<const std::int64_t> int_freqs) {
  require(int_freqs.size() == space.num_bins, ErrorCode::ShapeMismatch,
          "one frequency per bin expected");
  std::int64_t total = 0;
  for (auto n : int_freqs) {
    require(n >= 0, ErrorCode::InvalidFrequency, "frequencies must be non-negative");
    total += n;
  }
  require(total >= 1, ErrorCode::EmptySample, "all frequencies are zero");

  PseudoSequence seq;
  seq.source = SequenceSource::labels;
  seq.values.reserve(static_cast<std::size_t>(total));
  for (std::size_t i = 0; i < int_freqs.size(); ++i)
    seq.values.insert(seq.values.end(), static_cast<std::size_t>(int_freqs[i]), space.centers[i]);
  return seq;
}

inline FrequencyPlan plan_frequencies(const LabelDensity& density, std::int64_t m) {
  FrequencyPlan plan;
  plan.m = static_cast<std::size_t>(m);
  plan.real_freqs = expected_frequencies(density, m);
  plan.int_freqs = round_frequencies(plan.real_freqs, m);
  return plan;
}

inline PseudoSequence make_pseudo_labels(const LabelDensity& density, std::int64_t m) {
  const FrequencyPlan plan = plan_frequencies(density, m);
  return expand_pseudo_labels(density.space, plan.int_freqs);
}

/// Pseudo-label sequences for one fixed density, built lazily per sample count.
class PseudoLabelCache {
 public:
  explicit PseudoLabelCache(LabelDensity density) : density_(std::move(density)) {}

  const LabelDensity& density() const { return density_; }

  const PseudoSequence& get(std::int64_t m) {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(m);
    if (it == cache_.end())
      it = cache_.emplace(m, std::make_unique<PseudoSequence>(make_pseudo_labels(density_, m))).first;
    return *it->second;
  }

 private:
  LabelDensity density_;
  std::mutex mutex_;
  std::map<std::int64_t, std::unique_ptr<PseudoSequence>> cache_;
};

}  // namespace distloss
