#pragma once

#include "hnp/models/common.hpp"

namespace hnp::models {

struct NpConfig {
  episodes::Mode mode = episodes::Mode::kRegression;
  int m_tasks = 4;
  int o_way = 5;
  int d_x = 1;
  int d_model = 64;
  int d_z = 32;

  int enc_in() const {
    return mode == episodes::Mode::kRegression ? d_x + 1 : d_x + o_way;
  }
  int dec_out() const { return mode == episodes::Mode::kRegression ? 2 : o_way; }
};

/// Vanilla neural process baseline: one global latent per task, posterior
/// from the target set, prior from the context set, mean-pooled encoder.
class NpModel : public EpisodicModel {
 public:
  NpModel(NpConfig cfg, std::uint64_t init_seed);

  std::string kind() const override { return "np"; }
  episodes::Mode mode() const override { return cfg_.mode; }
  const NpConfig& config() const { return cfg_; }

  LossParts training_loss(const episodes::Episode& e, int n_z, int n_w, Rng& rng) override;
  PredictiveOutput predict(const Query& q, int n_z, int n_w, std::uint64_t seed) const override;

  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  nlohmann::json config_json() const override;
  static NpConfig config_from_json(const nlohmann::json& j);

  GaussianDiag latent_from(std::span<const episodes::LabeledPoint> pts) const;

 private:
  Tensor encode(std::span<const episodes::LabeledPoint> pts, bool with_labels) const;
  Tensor encode_targets(const std::vector<std::vector<real>>& xs) const;
  /// [n_z * n x dec_out]: sample-major rows, z_i paired with every target.
  Tensor decode(const Tensor& z_rows, const Tensor& target_emb) const;

  NpConfig cfg_;
  ParamSet params_;
  MlpParams enc_;
  MlpParams mu_head_, sigma_head_;
  MlpParams dec_;
};

}  // namespace hnp::models
