#pragma once

#include "hnp/episodes/episode.hpp"

namespace hnp::episodes {

/// Heterogeneous classification domains built from shared category
/// prototypes pushed through per-domain affine maps. Meta-train and
/// meta-test categories are disjoint by construction.
struct SyntheticConfig {
  int proto_dim = 16;
  int n_domains = 4;
  int n_train_categories = 40;
  int n_test_categories = 25;
  real noise_scale = real(0.3);
  real proto_scale = real(0.5);
  /// Fixes prototypes and domain maps; must match between the training and
  /// evaluation runs of one experiment.
  std::uint64_t domain_seed = 9001;
};

class SyntheticDomains {
 public:
  explicit SyntheticDomains(const SyntheticConfig& cfg);

  const SyntheticConfig& config() const { return cfg_; }
  int feature_dim() const { return cfg_.proto_dim; }

  /// Points are A_m * (prototype_o + noise) + b_m; context holds K per
  /// category, target n_target/O per category. label_map is the freshly
  /// shuffled raw-category list of this episode.
  Episode sample_episode(const EpisodeSpec& spec, Split split, Rng& rng) const;

 private:
  SyntheticConfig cfg_;
  std::vector<std::vector<real>> prototypes_;       // [category][proto_dim]
  std::vector<std::vector<real>> domain_maps_;      // [domain][proto_dim x proto_dim], row-major
  std::vector<std::vector<real>> domain_offsets_;   // [domain][proto_dim]
};

}  // namespace hnp::episodes
