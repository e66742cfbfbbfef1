#pragma once

#include "hnp/models/common.hpp"

namespace hnp::models {

struct CnpConfig {
  episodes::Mode mode = episodes::Mode::kRegression;
  int m_tasks = 4;
  int o_way = 5;
  int d_x = 1;
  int d_model = 64;

  int enc_in() const {
    return mode == episodes::Mode::kRegression ? d_x + 1 : d_x + o_way;
  }
  int dec_out() const { return mode == episodes::Mode::kRegression ? 2 : o_way; }
};

/// Conditional neural process baseline: deterministic mean-pooled context
/// representation per task, decoded jointly with each target embedding.
class CnpModel : public EpisodicModel {
 public:
  CnpModel(CnpConfig cfg, std::uint64_t init_seed);

  std::string kind() const override { return "cnp"; }
  episodes::Mode mode() const override { return cfg_.mode; }
  const CnpConfig& config() const { return cfg_; }

  LossParts training_loss(const episodes::Episode& e, int n_z, int n_w, Rng& rng) override;
  PredictiveOutput predict(const Query& q, int n_z, int n_w, std::uint64_t seed) const override;

  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  nlohmann::json config_json() const override;
  static CnpConfig config_from_json(const nlohmann::json& j);

 private:
  Tensor encode(std::span<const episodes::LabeledPoint> pts, bool with_labels) const;
  Tensor encode_targets(const std::vector<std::vector<real>>& xs) const;
  /// Decoder outputs [n x dec_out] for one task.
  Tensor decode(const Tensor& pooled_ctx, const Tensor& target_emb) const;

  CnpConfig cfg_;
  ParamSet params_;
  MlpParams enc_;
  MlpParams dec_;
};

}  // namespace hnp::models
