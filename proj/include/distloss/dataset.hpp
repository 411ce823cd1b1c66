#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "distloss/errors.hpp"
#include "distloss/label_space.hpp"
#include "distloss/rng.hpp"

namespace distloss {

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

/// N x d inputs stored row-major, one target and split tag per row.
struct RegressionDataset {
  std::size_t dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
  std::vector<Split> split;

  std::size_t size() const { return targets.size(); }

  std::span<const double> row(std::size_t i) const {
    return {inputs.data() + i * dim, dim};
  }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }

  std::vector<double> targets_of(Split s) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(targets[i]);
    return out;
  }

  friend bool operator==(const RegressionDataset&, const RegressionDataset&) = default;
};

enum class TargetLaw { uniform, exponential, lognormal, bimodal };

inline std::string_view to_string(TargetLaw law) {
  switch (law) {
    case TargetLaw::uniform: return "uniform";
    case TargetLaw::exponential: return "exponential";
    case TargetLaw::lognormal: return "lognormal";
    case TargetLaw::bimodal: return "bimodal";
  }
  return "uniform";
}

inline TargetLaw parse_target_law(std::string_view s) {
  if (s == "uniform") return TargetLaw::uniform;
  if (s == "exponential") return TargetLaw::exponential;
  if (s == "lognormal") return TargetLaw::lognormal;
  if (s == "bimodal") return TargetLaw::bimodal;
  throw Error(ErrorCode::ConfigError, "unknown target law '" + std::string(s) + "'");
}

struct SynthSpec {
  std::size_t n_train = 20000;
  /// Rows in each of the validation and test splits.
  std::size_t n_eval = 2000;
  std::size_t d = 8;
  double y_min = 0.0;
  double y_max = 10.0;
  TargetLaw law = TargetLaw::exponential;
  /// Exponential law: density ratio between the y_min and y_max ends.
  double imbalance_ratio = 100.0;
  /// Lognormal law: y = y_min + exp(mu + sigma * Z), truncated to the range.
  double lognormal_mu = 0.5;
  double lognormal_sigma = 0.6;
  /// Bimodal law: modes at 25% and 75% of the range, the first with this weight.
  double bimodal_weight = 0.85;
  double bimodal_sd = 0.08;  // as a fraction of the range
  double noise_sd = 0.3;
  std::uint64_t seed = 0;
};

namespace detail {

inline double draw_target(const SynthSpec& spec, Rng& rng) {
  const double range = spec.y_max - spec.y_min;
  switch (spec.law) {
    case TargetLaw::uniform:
      return rng.uniform(spec.y_min, spec.y_max);
    case TargetLaw::exponential: {
      const double rate = std::log(spec.imbalance_ratio) / range;
      if (rate == 0.0) return rng.uniform(spec.y_min, spec.y_max);
      const double u = rng.uniform();
      return spec.y_min - std::log1p(-u * -std::expm1(-rate * range)) / rate;
    }
    case TargetLaw::lognormal:
    case TargetLaw::bimodal:
      break;
  }
  for (int attempt = 0; attempt < 1'000'000; ++attempt) {
    double y;
    if (spec.law == TargetLaw::lognormal) {
      y = spec.y_min + std::exp(rng.normal(spec.lognormal_mu, spec.lognormal_sigma));
    } else {
      const bool first = rng.uniform() < spec.bimodal_weight;
      const double mode = spec.y_min + range * (first ? 0.25 : 0.75);
      y = rng.normal(mode, spec.bimodal_sd * range);
    }
    if (y >= spec.y_min && y < spec.y_max) return y;
  }
  throw Error(ErrorCode::InvalidSpec, "target law puts almost no mass inside [y_min, y_max)");
}

/// Smooth invertible map of the label plus pure-noise features.
inline void fill_features(const SynthSpec& spec, double y, Rng& rng, double* out) {
  const double t = 2.0 * (y - spec.y_min) / (spec.y_max - spec.y_min) - 1.0;
  const double signal[3] = {t, t * t, std::sin(2.0 * t)};
  for (std::size_t k = 0; k < spec.d; ++k)
    out[k] = (k < 3 ? signal[k] : 0.0) + rng.normal(0.0, k < 3 ? spec.noise_sd : 1.0);
}

}  // namespace detail

/// Imbalanced training split, balanced (uniform target) validation and test splits.
inline RegressionDataset synth_imbalanced(const SynthSpec& spec) {
  require(spec.n_train >= 1 && spec.n_eval >= 1, ErrorCode::InvalidSpec, "split sizes must be >= 1");
  require(spec.d >= 1, ErrorCode::InvalidSpec, "input dimension must be >= 1");
  require(std::isfinite(spec.y_min) && std::isfinite(spec.y_max) && spec.y_max > spec.y_min,
          ErrorCode::InvalidSpec, "invalid target range");
  require(std::isfinite(spec.noise_sd) && spec.noise_sd >= 0.0, ErrorCode::InvalidSpec,
          "noise_sd must be >= 0");
  require(spec.imbalance_ratio >= 1.0, ErrorCode::InvalidSpec, "imbalance_ratio must be >= 1");
  require(spec.lognormal_sigma > 0.0 && spec.bimodal_sd > 0.0, ErrorCode::InvalidSpec,
          "spread parameters must be positive");
  require(spec.bimodal_weight >= 0.0 && spec.bimodal_weight <= 1.0, ErrorCode::InvalidSpec,
          "bimodal_weight must lie in [0, 1]");

  RegressionDataset ds;
  ds.dim = spec.d;
  const std::size_t total = spec.n_train + 2 * spec.n_eval;
  ds.inputs.resize(total * spec.d);
  ds.targets.reserve(total);
  ds.split.reserve(total);

  Rng train_rng(sub_seed(spec.seed, SeedStream::train_data));
  Rng eval_rng(sub_seed(spec.seed, SeedStream::eval_data));
  for (std::size_t i = 0; i < total; ++i) {
    const bool train = i < spec.n_train;
    Rng& rng = train ? train_rng : eval_rng;
    const double y = train ? detail::draw_target(spec, rng) : rng.uniform(spec.y_min, spec.y_max);
    detail::fill_features(spec, y, rng, ds.inputs.data() + i * spec.d);
    ds.targets.push_back(y);
    ds.split.push_back(train ? Split::train : (i < spec.n_train + spec.n_eval ? Split::val : Split::test));
  }
  return ds;
}

enum class Region { many, median, few };

inline std::string_view to_string(Region r) {
  switch (r) {
    case Region::many: return "many";
    case Region::median: return "median";
    case Region::few: return "few";
  }
  return "few";
}

enum class ShotScheme { absolute_counts, nmax_fractions };

inline std::string_view to_string(ShotScheme s) {
  return s == ShotScheme::absolute_counts ? "absolute_counts" : "nmax_fractions";
}

inline ShotScheme parse_shot_scheme(std::string_view s) {
  if (s == "absolute_counts") return ShotScheme::absolute_counts;
  if (s == "nmax_fractions") return ShotScheme::nmax_fractions;
  throw Error(ErrorCode::ConfigError, "unknown shot scheme '" + std::string(s) + "'");
}

struct ShotRegions {
  ShotScheme scheme = ShotScheme::absolute_counts;
  double low = 20.0;
  double high = 100.0;
  std::vector<std::size_t> counts;
  std::vector<Region> regions;
};

/// Absolute: count < low is few, count > high is many, otherwise median.
/// Fractions: count > high * n_max is many, count < low * n_max is few.
inline ShotRegions assign_regions(std::span<const double> train_targets, const LabelSpace& space,
                                  ShotScheme scheme, double low, double high) {
  require(!train_targets.empty(), ErrorCode::EmptyDataset, "no training targets");
  require(low < high, ErrorCode::ConfigError, "region thresholds must satisfy low < high");
  ShotRegions out;
  out.scheme = scheme;
  out.low = low;
  out.high = high;
  out.counts.assign(space.num_bins, 0);
  for (double y : train_targets) ++out.counts[bin_index(space, y)];

  double lo = low, hi = high;
  if (scheme == ShotScheme::nmax_fractions) {
    const double n_max = static_cast<double>(*std::max_element(out.counts.begin(), out.counts.end()));
    lo = low * n_max;
    hi = high * n_max;
  }
  out.regions.reserve(space.num_bins);
  for (auto c : out.counts) {
    const auto n = static_cast<double>(c);
    out.regions.push_back(n > hi ? Region::many : (n < lo ? Region::few : Region::median));
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Header `x_0,...,x_{d-1},y,split`. Lines starting with '#' are comments.
inline void write_csv(const RegressionDataset& ds, std::ostream& os) {
  for (std::size_t k = 0; k < ds.dim; ++k) os << "x_" << k << ',';
  os << "y,split\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) os << format_double(v) << ',';
    os << format_double(ds.targets[i]) << ',' << to_string(ds.split[i]) << '\n';
  }
}

inline RegressionDataset read_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + what);
  };
  auto split_fields = [](const std::string& s) {
    std::vector<std::string> fields;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!s.empty() && s.back() == ',') fields.emplace_back();
    return fields;
  };

  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    header = split_fields(line);
    break;
  }
  if (header.empty()) fail("missing header row");

  RegressionDataset ds;
  std::size_t y_col = header.size(), split_col = header.size();
  std::vector<std::size_t> x_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "y") y_col = c;
    else if (header[c] == "split") split_col = c;
    else if (header[c] == "x_" + std::to_string(x_cols.size())) x_cols.push_back(c);
    else fail("unexpected column '" + header[c] + "'");
  }
  if (y_col == header.size()) fail("missing column 'y'");
  if (split_col == header.size()) fail("missing column 'split'");
  if (x_cols.empty()) fail("missing column 'x_0'");
  ds.dim = x_cols.size();

  auto parse_num = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail("not a number: '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) fail("not a finite number: '" + s + "'");
    return v;
  };

  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      fail("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    for (auto c : x_cols) ds.inputs.push_back(parse_num(fields[c]));
    ds.targets.push_back(parse_num(fields[y_col]));
    const auto& s = fields[split_col];
    if (s == "train") ds.split.push_back(Split::train);
    else if (s == "val") ds.split.push_back(Split::val);
    else if (s == "test") ds.split.push_back(Split::test);
    else fail("unknown split '" + s + "'");
  }
  if (ds.targets.empty()) throw Error(ErrorCode::ParseError, "no data rows");
  return ds;
}

inline RegressionDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_csv(in);
}

inline void save_csv(const RegressionDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_csv(ds, out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace distloss
