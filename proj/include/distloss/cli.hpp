#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distloss/checkpoint.hpp"
#include "distloss/config.hpp"
#include "distloss/dataset.hpp"
#include "distloss/evaluation.hpp"
#include "distloss/io.hpp"
#include "distloss/train.hpp"

namespace distloss {

// Run directory layout, <out_dir>/<tag>/:
//   dataset.csv          gen: synthesized dataset
//   train_histogram.csv  gen: training-label counts per bin
//   checkpoint.json      train: network + optimizer state
//   epoch_log.json       train: per-epoch loss terms and validation report
//   report.json/.csv     eval: test-split region report
//   histograms.csv       eval: label vs prediction counts per bin
//   ablation.csv/.json   ablate: one row per sweep point (points in subdirectories)
// Every file carries the resolved config (a "config" object in JSON, a
// leading "# config:" comment line in CSV).

inline std::filesystem::path run_dir(const RunConfig& cfg) {
  return std::filesystem::path(cfg.out_dir) / cfg.tag;
}

inline std::filesystem::path ensure_run_dir(const RunConfig& cfg) {
  const auto dir = run_dir(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

inline RegressionDataset resolve_dataset(const RunConfig& cfg) {
  if (!cfg.data_path.empty()) return load_csv(cfg.data_path);
  return synth_imbalanced(cfg.data);
}

inline std::string config_comment(const RunConfig& cfg) { return "# config: " + config_to_line(cfg) + "\n"; }

inline RegressionDataset cmd_gen(const RunConfig& cfg) {
  const auto dir = ensure_run_dir(cfg);
  const auto ds = resolve_dataset(cfg);
  std::ostringstream data;
  data << config_comment(cfg);
  write_csv(ds, data);
  write_file_atomic(dir / "dataset.csv", data.str());

  const auto space = train_label_space(cfg.train);
  const auto counts = histogram_counts(space, ds.targets_of(Split::train));
  std::ostringstream hist;
  hist << config_comment(cfg) << "bin_lower,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i)
    hist << format_double(space.centers[i]) << ',' << static_cast<long long>(counts[i]) << '\n';
  write_file_atomic(dir / "train_histogram.csv", hist.str());
  return ds;
}

inline nlohmann::json epoch_log_json(const std::vector<EpochLog>& log, const RunConfig& cfg) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : log) {
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"train_loss", e.train_loss},
                      {"sample_term", e.train_sample_term},
                      {"dist_term", e.train_dist_term},
                      {"val", e.val.regions[0].count ? report_to_json(e.val) : nlohmann::json(nullptr)}});
  }
  return {{"config", config_to_json(cfg)}, {"epochs", epochs}};
}

inline TrainResult cmd_train(const RunConfig& cfg) {
  const auto dir = ensure_run_dir(cfg);
  const auto ds = resolve_dataset(cfg);
  std::optional<MlpParams> warm;
  if (!cfg.init_from.empty()) warm = load_checkpoint(cfg.init_from).params;
  auto res = train(ds, cfg.train, std::move(warm));
  save_checkpoint(dir / "checkpoint.json", res.params, res.optimizer, config_to_json(cfg));
  write_file_atomic(dir / "epoch_log.json", epoch_log_json(res.log, cfg).dump(2) + "\n");
  return res;
}

inline RegionReport cmd_eval(const RunConfig& cfg) {
  const auto dir = ensure_run_dir(cfg);
  const auto ds = resolve_dataset(cfg);
  const auto ck = load_checkpoint(cfg.checkpoint.empty() ? dir / "checkpoint.json"
                                                         : std::filesystem::path(cfg.checkpoint));
  const auto space = train_label_space(cfg.train);
  const auto regions = train_regions(ds, cfg.train, space);
  const auto rep = evaluate_split(ck.params, ds, Split::test, regions, space, cfg.train.gm_eps);

  const auto cj = config_to_json(cfg);
  emit_report(rep, dir / "report.json", ReportFormat::json, cj);
  emit_report(rep, dir / "report.csv", ReportFormat::csv, cj);
  std::ostringstream hist;
  hist << config_comment(cfg) << "bin_lower,label_count,prediction_count\n";
  for (std::size_t i = 0; i < space.num_bins; ++i) {
    hist << format_double(space.centers[i]) << ',' << static_cast<long long>(rep.label_hist[i]) << ','
         << static_cast<long long>(rep.prediction_hist[i]) << '\n';
  }
  write_file_atomic(dir / "histograms.csv", hist.str());
  return rep;
}

enum class AblationAxis { seq_loss_kind, batch_size, dist_weight, imbalance_ratio };

inline AblationAxis parse_ablation_axis(std::string_view s) {
  if (s == "seq_loss_kind") return AblationAxis::seq_loss_kind;
  if (s == "batch_size") return AblationAxis::batch_size;
  if (s == "dist_weight") return AblationAxis::dist_weight;
  if (s == "imbalance_ratio") return AblationAxis::imbalance_ratio;
  throw Error(ErrorCode::ConfigError, "unknown ablation axis '" + std::string(s) + "'");
}

inline std::string_view to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::seq_loss_kind: return "seq_loss_kind";
    case AblationAxis::batch_size: return "batch_size";
    case AblationAxis::dist_weight: return "dist_weight";
    case AblationAxis::imbalance_ratio: return "imbalance_ratio";
  }
  return "";
}

inline std::vector<std::string> default_ablation_values(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::seq_loss_kind: return {"vanilla", "INV-L1", "INV-L2"};
    case AblationAxis::batch_size: return {"64", "128", "256"};
    case AblationAxis::dist_weight: return {"0", "0.5", "1"};
    case AblationAxis::imbalance_ratio: return {"10", "100", "1000"};
  }
  return {};
}

/// Configuration of one sweep point. For seq_loss_kind, "vanilla" means an
/// unweighted L2 sample loss with the distribution term switched off.
inline RunConfig ablation_point(const RunConfig& base, AblationAxis axis, const std::string& value) {
  RunConfig c = base;
  switch (axis) {
    case AblationAxis::seq_loss_kind:
      if (value == "vanilla") {
        set_config_value(c, "seq_loss", "L2");
        set_config_value(c, "dist_weight", "0");
      } else {
        set_config_value(c, "seq_loss", value);
      }
      break;
    case AblationAxis::batch_size: set_config_value(c, "batch_size", value); break;
    case AblationAxis::dist_weight: set_config_value(c, "dist_weight", value); break;
    case AblationAxis::imbalance_ratio: set_config_value(c, "imbalance_ratio", value); break;
  }
  c.tag = base.tag + "/" + std::string(to_string(axis)) + "_" + value;
  c.checkpoint.clear();
  c.ablate_values.clear();
  return c;
}

struct AblationRow {
  std::string value;
  RegionReport report;
};

inline std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, AblationAxis axis) {
  const auto dir = ensure_run_dir(cfg);
  const auto values = cfg.ablate_values.empty() ? default_ablation_values(axis) : cfg.ablate_values;
  std::vector<AblationRow> rows;
  for (const auto& v : values) {
    const RunConfig point = ablation_point(cfg, axis, v);
    cmd_train(point);
    rows.push_back({v, cmd_eval(point)});
  }

  auto cell = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string("null"); };
  std::ostringstream csv;
  csv << config_comment(cfg) << to_string(axis);
  for (auto r : kRegionNames) csv << ',' << r << "_mae," << r << "_gm," << r << "_count";
  csv << ",wasserstein1\n";
  nlohmann::json table = nlohmann::json::array();
  for (const auto& row : rows) {
    csv << row.value;
    for (const auto& m : row.report.regions) csv << ',' << cell(m.mae) << ',' << cell(m.gm) << ',' << m.count;
    csv << ',' << format_double(row.report.wasserstein1) << '\n';
    auto j = report_to_json(row.report);
    j["value"] = row.value;
    table.push_back(std::move(j));
  }
  write_file_atomic(dir / "ablation.csv", csv.str());
  nlohmann::json out = {{"axis", to_string(axis)}, {"rows", table}, {"config", config_to_json(cfg)}};
  write_file_atomic(dir / "ablation.json", out.dump(2) + "\n");
  return rows;
}

/// Process exit code for a library error: 2 config, 3 numeric failure, 4 I/O.
inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NonFiniteGradient: return 3;
    case ErrorCode::IoError:
    case ErrorCode::ParseError: return 4;
    default: return 2;
  }
}

}  // namespace distloss
