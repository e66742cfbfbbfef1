#pragma once

#include "hnp/models/common.hpp"

namespace hnp::models {

/// How a global-latent sample enters the local-parameter inference:
/// merged with the refined token at the output heads (the default), or
/// concatenated/added to every input embedding before the phi block.
enum class ZConditioning { kTokenMerge, kConcat, kAdd };

std::string conditioning_name(ZConditioning c);
ZConditioning conditioning_from_name(const std::string& s);

struct HnpConfig {
  episodes::Mode mode = episodes::Mode::kRegression;
  int m_tasks = 4;
  int o_way = 5;  // classification target-space size; regression ignores it
  int d_x = 1;    // raw feature dimension
  int d_model = 64;
  int d_z = 32;
  int d_w = 64;
  int heads = 4;
  ZConditioning conditioning = ZConditioning::kTokenMerge;
  bool z_path = true;
  bool w_path = true;

  /// Decoder slots: one local parameter per category, or a (mean, scale)
  /// row pair for regression.
  int n_slots() const { return mode == episodes::Mode::kRegression ? 2 : o_way; }
  int phi_width() const {
    return conditioning == ZConditioning::kConcat ? d_model + d_z : d_model;
  }
  void validate() const;
};

/// Hierarchical neural process: per-task global latents from a
/// token-augmented self-attention module, per-slot local decoder
/// parameters from a second module that mixes all tasks, trained on the
/// Monte Carlo ELBO with shared prior/posterior inference modules.
class HnpModel : public EpisodicModel {
 public:
  HnpModel(HnpConfig cfg, std::uint64_t init_seed);

  std::string kind() const override { return "hnp"; }
  episodes::Mode mode() const override { return cfg_.mode; }
  const HnpConfig& config() const { return cfg_; }

  LossParts training_loss(const episodes::Episode& e, int n_z, int n_w, Rng& rng) override;
  PredictiveOutput predict(const Query& q, int n_z, int n_w, std::uint64_t seed) const override;

  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  nlohmann::json config_json() const override;
  static HnpConfig config_from_json(const nlohmann::json& j);

  // Inference pieces, exposed for the gradient/property test suites.
  Tensor encode_pairs(std::span<const episodes::LabeledPoint> pts, bool with_y) const;
  Tensor encode_features(std::span<const episodes::LabeledPoint> pts) const;
  GaussianDiag infer_z(const Tensor& embeddings, int task_index) const;
  Tensor refined_omega(const Tensor& agg_rows, int slot) const;
  GaussianDiag infer_w(const Tensor& agg_rows, int slot, const Tensor& z_sample) const;

 private:
  struct EpisodeTensors;  // per-forward working set

  Tensor encode_any(std::span<const episodes::LabeledPoint> pts, bool with_y) const;
  Tensor decoder_inputs(const std::vector<std::vector<real>>& xs) const;
  /// Per-slot [M x phi_width] aggregate rows from one side of the episode.
  std::vector<Tensor> slot_aggregates(const std::vector<Tensor>& task_embs,
                                      const std::vector<std::vector<int>>& labels) const;
  /// Output-head distribution over stacked (task, z-sample) rows.
  GaussianDiag heads_on_rows(const Tensor& omega_hat, const Tensor& z_rows) const;
  /// Variant-aware batched q/p distributions for one slot.
  std::pair<GaussianDiag, GaussianDiag> slot_distributions(const Tensor& post_agg,
                                                           const Tensor& prior_agg, int slot,
                                                           const Tensor& z_rows) const;

  HnpConfig cfg_;
  ParamSet params_;
  MlpParams enc_mlp_;      // regression pair encoder
  LinearParams enc_lin_;   // classification feature projection
  BlockParams theta_block_;
  MlpParams theta_mu_, theta_sigma_;
  BlockParams phi_block_;
  MlpParams phi_mu_, phi_sigma_;
  LinearParams z_proj_;    // kAdd conditioning only
  Tensor nu_tokens_;       // [M x d_model]
  Tensor omega_tokens_;    // [n_slots x phi_width]
};

}  // namespace hnp::models
