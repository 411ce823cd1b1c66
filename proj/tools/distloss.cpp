// distloss: synthesize data, train, evaluate and sweep Dist Loss runs.
//
//   distloss gen    [--config FILE] [--<key> VALUE ...]
//   distloss train  [--config FILE] [--<key> VALUE ...]
//   distloss eval   [--config FILE] [--<key> VALUE ...]
//   distloss ablate --axis {seq_loss_kind,batch_size,dist_weight,imbalance_ratio} [...]
//
// Every RunConfig key is accepted as a flag; flags override the config file.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "distloss/cli.hpp"

namespace {

struct Options {
  std::string config_file;
  std::string axis;
  std::map<std::string, std::string> overrides;
  bool print_config = false;
};

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config_file, "flat key = value config file");
  sub->add_flag("--print-config", opt.print_config, "print the resolved config before running");
  for (const auto& key : distloss::config_key_names()) {
    sub->add_option_function<std::string>(
        "--" + key, [&opt, key](const std::string& v) { opt.overrides[key] = v; }, "config key " + key);
  }
}

distloss::RunConfig resolve(const Options& opt) {
  distloss::RunConfig cfg;
  if (!opt.config_file.empty()) {
    std::string text;
    try {
      text = distloss::read_file(opt.config_file);
    } catch (const distloss::Error& e) {
      throw distloss::Error(distloss::ErrorCode::ConfigError, e.what());
    }
    distloss::apply_config_text(cfg, text);
  }
  for (const auto& [k, v] : opt.overrides) distloss::set_config_value(cfg, k, v);
  return cfg;
}

void print_report(const distloss::RegionReport& rep) {
  for (std::size_t r = 0; r < rep.regions.size(); ++r) {
    const auto& m = rep.regions[r];
    if (m.mae)
      std::printf("  %-6s  n=%-6zu mae=%.4f gm=%.4f\n", std::string(distloss::kRegionNames[r]).c_str(),
                  m.count, *m.mae, *m.gm);
    else
      std::printf("  %-6s  n=0      (absent)\n", std::string(distloss::kRegionNames[r]).c_str());
  }
  std::printf("  wasserstein1=%.4f\n", rep.wasserstein1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dist Loss training and evaluation harness"};
  app.require_subcommand(1);
  Options opt;
  auto* gen = app.add_subcommand("gen", "synthesize a dataset and its training-label histogram");
  auto* train = app.add_subcommand("train", "train a regressor and write a checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* ablate = app.add_subcommand("ablate", "sweep one axis, train+eval per point");
  for (auto* s : {gen, train, eval, ablate}) add_common(s, opt);
  ablate->add_option("--axis", opt.axis, "seq_loss_kind | batch_size | dist_weight | imbalance_ratio")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto cfg = resolve(opt);
    if (opt.print_config) std::cout << distloss::config_to_text(cfg);
    const auto dir = distloss::run_dir(cfg).string();
    if (*gen) {
      const auto ds = distloss::cmd_gen(cfg);
      std::printf("wrote %s/dataset.csv (%zu rows, d=%zu)\n", dir.c_str(), ds.size(), ds.dim);
    } else if (*train) {
      const auto res = distloss::cmd_train(cfg);
      for (const auto& e : res.log) {
        const auto& few = e.val.of(distloss::Region::few);
        std::printf("epoch %3zu  lr=%.2e  loss=%.5f  sample=%.5f  dist=%.5f  val_few_mae=%s\n", e.epoch,
                    e.lr, e.train_loss, e.train_sample_term, e.train_dist_term,
                    few.mae ? std::to_string(*few.mae).c_str() : "n/a");
      }
      std::printf("wrote %s/checkpoint.json\n", dir.c_str());
    } else if (*eval) {
      const auto rep = distloss::cmd_eval(cfg);
      print_report(rep);
      std::printf("wrote %s/report.json\n", dir.c_str());
    } else if (*ablate) {
      const auto axis = distloss::parse_ablation_axis(opt.axis);
      for (const auto& row : distloss::cmd_ablate(cfg, axis)) {
        std::printf("%s = %s\n", opt.axis.c_str(), row.value.c_str());
        print_report(row.report);
      }
      std::printf("wrote %s/ablation.csv\n", dir.c_str());
    }
  } catch (const distloss::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return distloss::exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
