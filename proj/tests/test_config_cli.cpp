#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "distloss/checkpoint.hpp"
#include "distloss/cli.hpp"
#include "distloss/config.hpp"

using namespace distloss;
namespace fs = std::filesystem;

namespace {

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("distloss_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DISTLOSS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig tiny_config(const fs::path& out, const std::string& tag) {
  RunConfig c;
  c.out_dir = out.string();
  c.tag = tag;
  set_config_value(c, "n_train", "400");
  set_config_value(c, "n_eval", "100");
  set_config_value(c, "d", "3");
  set_config_value(c, "hidden", "8");
  set_config_value(c, "epochs", "2");
  set_config_value(c, "batch_size", "64");
  set_config_value(c, "seed", "11");
  return c;
}

std::string tiny_flags(const fs::path& out, const std::string& tag) {
  return "--out_dir " + out.string() + " --tag " + tag +
         " --n_train 400 --n_eval 100 --d 3 --hidden 8 --epochs 2 --batch_size 64 --seed 11";
}

}  // namespace

TEST(Config, TextRoundTrip) {
  RunConfig c;
  set_config_value(c, "seq_loss", "INV-L1");
  set_config_value(c, "dist_weight", "0.5");
  set_config_value(c, "hidden", "32,16");
  set_config_value(c, "lr_milestones", "3,7");
  set_config_value(c, "bandwidth", "0.25");
  set_config_value(c, "target_law", "bimodal");
  set_config_value(c, "shot_scheme", "absolute_counts");
  const auto text = config_to_text(c);
  const auto back = parse_config_text(text);
  EXPECT_EQ(config_to_text(back), text);
  EXPECT_EQ(back.train.loss.kind.base, LossBase::L1);
  EXPECT_EQ(back.train.hidden, (std::vector<std::size_t>{32, 16}));
  EXPECT_EQ(*back.train.bandwidth, 0.25);
}

TEST(Config, SeedAndRangeFlowToModules) {
  const auto c = parse_config_text("seed = 42\ny_max = 20\n# comment\n\n");
  EXPECT_EQ(c.data.seed, 42u);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.train.y_max, 20.0);
  EXPECT_EQ(c.data.y_max, 20.0);
}

TEST(Config, UnknownKeyRejected) {
  expect_code(ErrorCode::ConfigError, [] { parse_config_text("learning_rate = 0.1\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config_text("epochs 10\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config_text("epochs = ten\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config_text("seq_loss = L3\n"); });
}

TEST(Config, AutoValues) {
  auto c = parse_config_text("bandwidth = 0.3\nsort_epsilon = 1e-4\n");
  set_config_value(c, "bandwidth", "auto");
  set_config_value(c, "sort_epsilon", "auto");
  EXPECT_FALSE(c.train.bandwidth.has_value());
  EXPECT_FALSE(c.train.sort_epsilon.has_value());
}

TEST(Checkpoint, RoundTripIsExact) {
  auto p = init_mlp({3, 5, 1}, Activation::tanh, 9);
  auto opt = make_adam(p);
  const auto fr = forward(p, Eigen::MatrixXd::Random(3, 4));
  adam_step(p, backward(p, fr.tape, std::vector<double>{0.1, -0.2, 0.3, 0.05}), opt);
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(dir / "c.json", p, opt);
  const auto ck = load_checkpoint(dir / "c.json");
  EXPECT_EQ(ck.params.layer_dims, p.layer_dims);
  EXPECT_EQ(ck.params.activation, p.activation);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    EXPECT_EQ(ck.params.layers[l].weight, p.layers[l].weight);
    EXPECT_EQ(ck.params.layers[l].bias, p.layers[l].bias);
    EXPECT_EQ(ck.optimizer.second[l].weight, opt.second[l].weight);
  }
  EXPECT_EQ(ck.optimizer.step, 1);
  write_file_atomic(dir / "bad.json", "{\"format\": \"something-else\"}");
  expect_code(ErrorCode::ParseError, [&] { load_checkpoint(dir / "bad.json"); });
  expect_code(ErrorCode::IoError, [&] { load_checkpoint(dir / "missing.json"); });
  fs::remove_all(dir);
}

TEST(Commands, TrainEvalReproducible) {
  const auto dir = scratch_dir("repro");
  auto a = tiny_config(dir, "a");
  auto b = tiny_config(dir, "b");
  cmd_train(a);
  cmd_eval(a);
  cmd_train(b);
  cmd_eval(b);
  // tags differ, so compare everything except the embedded config
  auto ja = nlohmann::json::parse(read_file(dir / "a" / "report.json"));
  auto jb = nlohmann::json::parse(read_file(dir / "b" / "report.json"));
  ja.erase("config");
  jb.erase("config");
  EXPECT_EQ(ja, jb);
  EXPECT_EQ(read_file(dir / "a" / "histograms.csv").substr(read_file(dir / "a" / "histograms.csv").find('\n')),
            read_file(dir / "b" / "histograms.csv").substr(read_file(dir / "b" / "histograms.csv").find('\n')));
  fs::remove_all(dir);
}

TEST(Commands, ZeroWeightEqualsBaselinePath) {
  const auto dir = scratch_dir("baseline");
  auto c = tiny_config(dir, "x");
  set_config_value(c, "dist_weight", "0");
  const auto via_cli = cmd_train(c);
  const auto direct = train(synth_imbalanced(c.data), c.train);
  for (std::size_t l = 0; l < direct.params.layers.size(); ++l)
    EXPECT_EQ(via_cli.params.layers[l].weight, direct.params.layers[l].weight);
  fs::remove_all(dir);
}

TEST(Commands, OracleCheckpointGivesZeroError) {
  // A net whose first input is the normalized label, passed straight through
  // and mapped back to the label range, predicts exactly y when noise is off.
  const auto dir = scratch_dir("oracle");
  auto c = tiny_config(dir, "o");
  set_config_value(c, "noise_sd", "0");
  set_config_value(c, "d", "1");
  auto p = init_mlp({1, 1}, Activation::relu, 0);
  // feature x_0 = 2 * (y - y_min) / (y_max - y_min) - 1, so y = 5 * x_0 + 5 on [0, 10]
  p.layers[0].weight(0, 0) = 5.0;
  p.layers[0].bias(0) = 5.0;
  fs::create_directories(dir / "o");
  save_checkpoint(dir / "o" / "checkpoint.json", p, make_adam(p));
  const auto rep = cmd_eval(c);
  for (const auto& m : rep.regions)
    if (m.mae) EXPECT_NEAR(*m.mae, 0.0, 1e-9);
  fs::remove_all(dir);
}

TEST(Commands, AblationTable) {
  const auto dir = scratch_dir("ablate");
  auto c = tiny_config(dir, "sweep");
  c.ablate_values = {"64", "128", "256"};
  const auto rows = cmd_ablate(c, AblationAxis::batch_size);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "sweep" / "ablation.csv"));
  EXPECT_TRUE(fs::exists(dir / "sweep" / "batch_size_128" / "report.json"));

  // a single sweep point equals train + eval of the same configuration
  auto single = ablation_point(c, AblationAxis::batch_size, "128");
  single.tag = "single";
  cmd_train(single);
  EXPECT_EQ(cmd_eval(single), rows[1].report);

  auto kinds = tiny_config(dir, "kinds");
  const auto krows = cmd_ablate(kinds, AblationAxis::seq_loss_kind);
  ASSERT_EQ(krows.size(), 3u);
  EXPECT_EQ(krows[1].value, "INV-L1");
  EXPECT_EQ(krows[2].value, "INV-L2");
  fs::remove_all(dir);
}

TEST(Cli, GenTrainEvalSucceed) {
  const auto dir = scratch_dir("run");
  const auto flags = tiny_flags(dir, "t");
  EXPECT_EQ(run_cli("gen " + flags), 0);
  EXPECT_EQ(run_cli("train " + flags), 0);
  EXPECT_EQ(run_cli("eval " + flags), 0);
  for (const char* f : {"dataset.csv", "train_histogram.csv", "checkpoint.json", "epoch_log.json",
                        "report.json", "report.csv", "histograms.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "t" / f)) << f;
  }
  EXPECT_EQ(read_file(dir / "t" / "dataset.csv").rfind("# config: ", 0), 0u);
  const auto report = nlohmann::json::parse(read_file(dir / "t" / "report.json"));
  EXPECT_EQ(report["config"]["seed"], "11");

  // data_path reuses the generated file
  EXPECT_EQ(run_cli("eval " + flags + " --data_path " + (dir / "t" / "dataset.csv").string()), 0);
  fs::remove_all(dir);
}

TEST(Cli, ConfigFileAndFlagsAgree) {
  const auto dir = scratch_dir("cfgfile");
  write_file_atomic(dir / "run.cfg", "n_train = 400\nn_eval = 100\nd = 3\nhidden = 8\nepochs = 2\n"
                                     "batch_size = 64\nseed = 11\ntag = f\nout_dir = " +
                                         dir.string() + "\n");
  EXPECT_EQ(run_cli("train --config " + (dir / "run.cfg").string()), 0);
  EXPECT_EQ(run_cli("eval --config " + (dir / "run.cfg").string()), 0);
  EXPECT_EQ(run_cli("train " + tiny_flags(dir, "g")), 0);
  EXPECT_EQ(run_cli("eval " + tiny_flags(dir, "g")), 0);
  auto jf = nlohmann::json::parse(read_file(dir / "f" / "report.json"));
  auto jg = nlohmann::json::parse(read_file(dir / "g" / "report.json"));
  jf.erase("config");
  jg.erase("config");
  EXPECT_EQ(jf, jg);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("codes");
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("train --no_such_key 3"), 2);
  EXPECT_EQ(run_cli("train --seq_loss L7 " + tiny_flags(dir, "c")), 2);
  EXPECT_EQ(run_cli("ablate --axis nonsense " + tiny_flags(dir, "c")), 2);
  write_file_atomic(dir / "bad.cfg", "not_a_key = 1\n");
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.cfg").string()), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "absent.cfg").string()), 2);
  // numeric blow-up
  EXPECT_EQ(run_cli("train --lr 1e300 " + tiny_flags(dir, "nan")), 3);
  // eval without a checkpoint, and an unreadable dataset
  EXPECT_EQ(run_cli("eval " + tiny_flags(dir, "nockpt")), 4);
  write_file_atomic(dir / "broken.csv", "x_0,split\n1,train\n");
  EXPECT_EQ(run_cli("train --data_path " + (dir / "broken.csv").string() + " " + tiny_flags(dir, "c")), 4);
  fs::remove_all(dir);
}
