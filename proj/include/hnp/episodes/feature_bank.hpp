#pragma once

#include "hnp/episodes/episode.hpp"

namespace hnp::episodes {

/// Externally supplied per-domain features with a disjoint category split,
/// the ingestion path for real-dataset experiments. Immutable after load.
struct FeatureBank {
  int feature_dim = 0;
  int n_domains = 0;
  std::vector<int> train_categories;
  std::vector<int> test_categories;

  struct Entry {
    int domain = 0;
    int category = 0;
    std::vector<real> features;
  };
  std::vector<Entry> entries;

  const std::vector<int>& categories(Split s) const {
    return s == Split::kMetaTrain ? train_categories : test_categories;
  }
};

/// Plain-text format:
///   dim=<d> domains=<M>
///   train_categories=<comma list>
///   test_categories=<comma list>
///   <domain_id>,<category_id>,<f1>,...,<fd>
/// Load errors carry the offending line number.
FeatureBank load_feature_bank(const std::string& path);

/// Task m samples from domain m; per category, K context plus N_T/O target
/// entries drawn without replacement. Errors name the starved
/// (domain, category) pair.
Episode sample_feature_episode(const FeatureBank& bank, const EpisodeSpec& spec, Split split,
                               Rng& rng);

}  // namespace hnp::episodes
