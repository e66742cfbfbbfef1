#include "hnp/models/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "hnp/models/cnp.hpp"
#include "hnp/models/hnp.hpp"
#include "hnp/models/np.hpp"

namespace hnp::models {

namespace {
constexpr int kFormatVersion = 1;
}

nlohmann::json model_to_json(const EpisodicModel& m) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["model"] = m.kind();
  j["config"] = m.config_json();
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : m.params()) {
    params[name] = std::vector<real>(t.values().begin(), t.values().end());
  }
  j["params"] = std::move(params);
  return j;
}

std::unique_ptr<EpisodicModel> make_model(const std::string& kind, const nlohmann::json& config,
                                          std::uint64_t init_seed) {
  if (kind == "hnp") {
    return std::make_unique<HnpModel>(HnpModel::config_from_json(config), init_seed);
  }
  if (kind == "cnp") {
    return std::make_unique<CnpModel>(CnpModel::config_from_json(config), init_seed);
  }
  if (kind == "np") {
    return std::make_unique<NpModel>(NpModel::config_from_json(config), init_seed);
  }
  throw ModelError("unknown model kind '" + kind + "'");
}

std::unique_ptr<EpisodicModel> model_from_json(const nlohmann::json& j, bool trainable) {
  if (j.at("format_version").get<int>() != kFormatVersion) {
    throw ModelError("checkpoint format version " +
                     std::to_string(j.at("format_version").get<int>()) + " is not supported");
  }
  auto model = make_model(j.at("model").get<std::string>(), j.at("config"), 0);
  const auto& params = j.at("params");
  std::size_t loaded = 0;
  for (const auto& [name, t] : model->params()) {
    if (!params.contains(name)) {
      throw ModelError("checkpoint is missing parameter '" + name + "'");
    }
    const auto vals = params.at(name).get<std::vector<real>>();
    Tensor tensor = t;  // shared handle
    if (vals.size() != tensor.numel()) {
      throw ModelError("checkpoint parameter '" + name + "' holds " +
                       std::to_string(vals.size()) + " values, model expects " +
                       std::to_string(tensor.numel()));
    }
    std::copy(vals.begin(), vals.end(), tensor.values_mut().begin());
    ++loaded;
  }
  if (loaded != params.size()) {
    throw ModelError("checkpoint holds " + std::to_string(params.size()) +
                     " parameters, model expects " + std::to_string(loaded));
  }
  model->params().set_requires_grad(trainable);
  return model;
}

void save_checkpoint(const EpisodicModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint '" + path + "'");
  out << model_to_json(m).dump();
  out << "\n";
  if (!out) throw ModelError("failed while writing checkpoint '" + path + "'");
}

std::unique_ptr<EpisodicModel> load_checkpoint(const std::string& path, bool trainable) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  in >> j;
  return model_from_json(j, trainable);
}

}  // namespace hnp::models
