#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distloss/errors.hpp"
#include "distloss/io.hpp"
#include "distloss/nnet.hpp"

namespace distloss {

// Checkpoint format, version 1 (JSON):
//   format        "distloss-checkpoint"
//   version       1
//   layer_dims    [d, hidden..., 1]
//   activation    "relu" | "tanh"
//   layers        [{weight: {rows, cols, data (column-major)}, bias: [...]}, ...]
//   optimizer     {step, lr, beta1, beta2, eps_hat, weight_decay,
//                  first: layers, second: layers}   (same layout as above)
//   config        resolved run configuration (informational)
// Doubles are written in shortest round-trip form, so reloading is exact.

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json layers_to_json(const std::vector<DenseLayer>& layers) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers) {
    arr.push_back({{"weight",
                    {{"rows", l.weight.rows()},
                     {"cols", l.weight.cols()},
                     {"data", std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size())}}},
                   {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return arr;
}

inline std::vector<DenseLayer> layers_from_json(const nlohmann::json& arr) {
  std::vector<DenseLayer> layers;
  for (const auto& e : arr) {
    const auto rows = e.at("weight").at("rows").get<Eigen::Index>();
    const auto cols = e.at("weight").at("cols").get<Eigen::Index>();
    const auto data = e.at("weight").at("data").get<std::vector<double>>();
    const auto bias = e.at("bias").get<std::vector<double>>();
    require(static_cast<Eigen::Index>(data.size()) == rows * cols &&
                static_cast<Eigen::Index>(bias.size()) == rows,
            ErrorCode::ParseError, "checkpoint layer shape mismatch");
    DenseLayer l{Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols),
                 Eigen::Map<const Eigen::VectorXd>(bias.data(), rows)};
    layers.push_back(std::move(l));
  }
  return layers;
}

}  // namespace detail

struct Checkpoint {
  MlpParams params;
  AdamState optimizer;
};

inline nlohmann::json checkpoint_to_json(const MlpParams& params, const AdamState& opt,
                                         const nlohmann::json& config = nullptr) {
  nlohmann::json j = {{"format", "distloss-checkpoint"},
                      {"version", kCheckpointVersion},
                      {"layer_dims", params.layer_dims},
                      {"activation", to_string(params.activation)},
                      {"layers", detail::layers_to_json(params.layers)},
                      {"optimizer",
                       {{"step", opt.step},
                        {"lr", opt.lr},
                        {"beta1", opt.beta1},
                        {"beta2", opt.beta2},
                        {"eps_hat", opt.eps_hat},
                        {"weight_decay", opt.weight_decay},
                        {"first", detail::layers_to_json(opt.first)},
                        {"second", detail::layers_to_json(opt.second)}}}};
  if (!config.is_null()) j["config"] = config;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == "distloss-checkpoint", ErrorCode::ParseError,
            "not a distloss checkpoint");
    require(j.at("version").get<int>() == kCheckpointVersion, ErrorCode::ParseError,
            "unsupported checkpoint version");
    Checkpoint ck;
    ck.params.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    ck.params.activation = parse_activation(j.at("activation").get<std::string>());
    ck.params.layers = detail::layers_from_json(j.at("layers"));
    require(ck.params.layers.size() + 1 == ck.params.layer_dims.size(), ErrorCode::ParseError,
            "checkpoint layer count mismatch");
    const auto& o = j.at("optimizer");
    ck.optimizer.step = o.at("step").get<std::int64_t>();
    ck.optimizer.lr = o.at("lr").get<double>();
    ck.optimizer.beta1 = o.at("beta1").get<double>();
    ck.optimizer.beta2 = o.at("beta2").get<double>();
    ck.optimizer.eps_hat = o.at("eps_hat").get<double>();
    ck.optimizer.weight_decay = o.at("weight_decay").get<double>();
    ck.optimizer.first = detail::layers_from_json(o.at("first"));
    ck.optimizer.second = detail::layers_from_json(o.at("second"));
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const MlpParams& params,
                            const AdamState& opt, const nlohmann::json& config = nullptr) {
  write_file_atomic(path, checkpoint_to_json(params, opt, config).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return checkpoint_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace distloss
