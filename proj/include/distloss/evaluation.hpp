#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "distloss/dataset.hpp"
#include "distloss/errors.hpp"
#include "distloss/io.hpp"
#include "distloss/label_space.hpp"

namespace distloss {

inline double mae(std::span<const double> errors) {
  require(!errors.empty(), ErrorCode::EmptyRegion, "no errors to average");
  double s = 0.0;
  for (double e : errors) s += std::abs(e);
  return s / static_cast<double>(errors.size());
}

/// Geometric mean of |e_i| + eps, accumulated in log space.
inline double gm(std::span<const double> errors, double eps = 1e-10) {
  require(!errors.empty(), ErrorCode::EmptyRegion, "no errors to average");
  require(eps > 0.0, ErrorCode::InvalidInput, "gm epsilon must be positive");
  double s = 0.0;
  for (double e : errors) s += std::log(std::abs(e) + eps);
  return std::exp(s / static_cast<double>(errors.size()));
}

/// delta_y * sum_i |CDF1(i) - CDF2(i)| over mass-normalized histograms.
inline double wasserstein1_hist(std::span<const double> h1, std::span<const double> h2,
                                double delta_y) {
  require(h1.size() == h2.size(), ErrorCode::ShapeMismatch, "histograms differ in length");
  double t1 = 0.0, t2 = 0.0;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    require(h1[i] >= 0.0 && h2[i] >= 0.0, ErrorCode::InvalidInput, "negative histogram mass");
    t1 += h1[i];
    t2 += h2[i];
  }
  require(t1 > 0.0 && t2 > 0.0, ErrorCode::EmptyHistogram, "histogram has zero mass");
  double c1 = 0.0, c2 = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    c1 += h1[i] / t1;
    c2 += h2[i] / t2;
    acc += std::abs(c1 - c2);
  }
  return delta_y * acc;
}

struct RegionMetrics {
  /// Absent (nullopt) when the region holds no evaluation rows.
  std::optional<double> mae;
  std::optional<double> gm;
  std::size_t count = 0;
  friend bool operator==(const RegionMetrics&, const RegionMetrics&) = default;
};

inline constexpr std::array<std::string_view, 4> kRegionNames = {"all", "many", "median", "few"};

struct RegionReport {
  /// Indexed like kRegionNames.
  std::array<RegionMetrics, 4> regions;
  double wasserstein1 = 0.0;
  double delta_y = 1.0;
  double gm_eps = 1e-10;
  std::vector<double> prediction_hist;
  std::vector<double> label_hist;

  const RegionMetrics& all() const { return regions[0]; }
  const RegionMetrics& of(Region r) const { return regions[1 + static_cast<std::size_t>(r)]; }

  friend bool operator==(const RegionReport&, const RegionReport&) = default;
};

inline std::vector<double> histogram_counts(const LabelSpace& space, std::span<const double> values) {
  std::vector<double> h(space.num_bins, 0.0);
  for (double v : values) h[bin_index(space, v)] += 1.0;
  return h;
}

/// Each evaluation row inherits the region of its target's bin.
inline RegionReport region_metrics(std::span<const double> predictions,
                                   std::span<const double> targets, const ShotRegions& regions,
                                   const LabelSpace& space, double gm_eps = 1e-10) {
  require(predictions.size() == targets.size(), ErrorCode::ShapeMismatch,
          "predictions and targets differ in length");
  require(regions.regions.size() == space.num_bins, ErrorCode::ShapeMismatch,
          "region map does not match the label space");
  require(!targets.empty(), ErrorCode::EmptyRegion, "no evaluation rows");

  std::array<std::vector<double>, 4> errs;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double e = predictions[i] - targets[i];
    errs[0].push_back(e);
    errs[1 + static_cast<std::size_t>(regions.regions[bin_index(space, targets[i])])].push_back(e);
  }
  RegionReport rep;
  rep.delta_y = space.delta_y;
  rep.gm_eps = gm_eps;
  for (std::size_t r = 0; r < errs.size(); ++r) {
    rep.regions[r].count = errs[r].size();
    if (errs[r].empty()) continue;
    rep.regions[r].mae = mae(errs[r]);
    rep.regions[r].gm = gm(errs[r], gm_eps);
  }
  rep.prediction_hist = histogram_counts(space, predictions);
  rep.label_hist = histogram_counts(space, targets);
  rep.wasserstein1 = wasserstein1_hist(rep.prediction_hist, rep.label_hist, space.delta_y);
  return rep;
}

enum class ReportFormat { json, csv };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw Error(ErrorCode::UnsupportedFormat, "unknown report format '" + std::string(s) + "'");
}

inline nlohmann::json report_to_json(const RegionReport& rep, const nlohmann::json& config = nullptr) {
  using nlohmann::json;
  json regions = json::array();
  for (std::size_t r = 0; r < rep.regions.size(); ++r) {
    const auto& m = rep.regions[r];
    regions.push_back({{"region", kRegionNames[r]},
                       {"mae", m.mae ? json(*m.mae) : json(nullptr)},
                       {"gm", m.gm ? json(*m.gm) : json(nullptr)},
                       {"count", m.count}});
  }
  json j = {{"format", "distloss-report"},
            {"version", 1},
            {"regions", regions},
            {"wasserstein1", rep.wasserstein1},
            {"delta_y", rep.delta_y},
            {"gm_eps", rep.gm_eps},
            {"histograms", {{"predictions", rep.prediction_hist}, {"labels", rep.label_hist}}}};
  if (!config.is_null()) j["config"] = config;
  return j;
}

inline RegionReport report_from_json(const nlohmann::json& j) {
  try {
    RegionReport rep;
    const auto& regions = j.at("regions");
    require(regions.size() == kRegionNames.size(), ErrorCode::ParseError, "expected four regions");
    for (std::size_t r = 0; r < kRegionNames.size(); ++r) {
      const auto& e = regions.at(r);
      require(e.at("region").get<std::string>() == kRegionNames[r], ErrorCode::ParseError,
              "regions out of order");
      if (!e.at("mae").is_null()) rep.regions[r].mae = e.at("mae").get<double>();
      if (!e.at("gm").is_null()) rep.regions[r].gm = e.at("gm").get<double>();
      rep.regions[r].count = e.at("count").get<std::size_t>();
    }
    rep.wasserstein1 = j.at("wasserstein1").get<double>();
    rep.delta_y = j.at("delta_y").get<double>();
    rep.gm_eps = j.at("gm_eps").get<double>();
    rep.prediction_hist = j.at("histograms").at("predictions").get<std::vector<double>>();
    rep.label_hist = j.at("histograms").at("labels").get<std::vector<double>>();
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

/// region,metric,value rows; absent metrics are written as `null`.
inline std::string report_to_csv(const RegionReport& rep, const std::string& config_line = {}) {
  std::ostringstream os;
  if (!config_line.empty()) os << "# config: " << config_line << '\n';
  os << "region,metric,value\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("null"); };
  for (std::size_t r = 0; r < rep.regions.size(); ++r) {
    const auto& m = rep.regions[r];
    os << kRegionNames[r] << ",mae," << opt(m.mae) << '\n';
    os << kRegionNames[r] << ",gm," << opt(m.gm) << '\n';
    os << kRegionNames[r] << ",count," << m.count << '\n';
  }
  os << "all,wasserstein1," << format_double(rep.wasserstein1) << '\n';
  return os.str();
}

inline void emit_report(const RegionReport& rep, const std::filesystem::path& path,
                        ReportFormat format, const nlohmann::json& config = nullptr) {
  if (format == ReportFormat::json) {
    write_file_atomic(path, report_to_json(rep, config).dump(2) + "\n");
  } else {
    write_file_atomic(path, report_to_csv(rep, config.is_null() ? std::string() : config.dump()));
  }
}

inline void emit_report(const RegionReport& rep, const std::filesystem::path& path,
                        std::string_view format, const nlohmann::json& config = nullptr) {
  emit_report(rep, path, parse_report_format(format), config);
}

inline RegionReport read_report(const std::filesystem::path& path) {
  try {
    return report_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace distloss
