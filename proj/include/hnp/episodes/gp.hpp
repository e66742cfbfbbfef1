#pragma once

#include "hnp/episodes/episode.hpp"

namespace hnp::episodes {

/// Multi-task 1-D GP regression episodes: every task draws its inputs from
/// its own interval, all tasks share one function sampled jointly.
struct GpConfig {
  real length_scale = real(0.4);
  real signal_sigma = real(1.0);
  std::vector<std::pair<real, real>> intervals{{-4, -2}, {-2, 0}, {0, 2}, {2, 4}};
  int n_context_per_task = 5;
  int n_target_per_task = 10;
  real jitter = real(1e-6);

  void validate() const;  // positive scales, pairwise-disjoint intervals
};

/// sigma^2 * exp(-(x - x')^2 / (2 l^2)).
real rbf_kernel(real x, real xp, const GpConfig& cfg);

/// One joint zero-mean draw over all given locations (Cholesky with jitter,
/// escalated x10 up to 3 retries before giving up with DataError).
std::vector<real> sample_gp_values(const std::vector<real>& xs, const GpConfig& cfg, Rng& rng);

/// Context sets hold n_context points, target sets the n_target extra
/// points; training code forms context-target unions itself.
Episode sample_gp_episode(const GpConfig& cfg, Rng& rng);

}  // namespace hnp::episodes
