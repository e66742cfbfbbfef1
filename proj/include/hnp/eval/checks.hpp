#pragma once

#include <functional>
#include <memory>

#include "hnp/eval/metrics.hpp"
#include "hnp/models/common.hpp"

namespace hnp::eval {

struct CheckReport {
  std::string check;
  int episode_id = 0;
  int trials = 0;
  real max_rel_err = 0;
  bool pass = false;
};

nlohmann::json report_to_json(const CheckReport& r);
nlohmann::json reports_to_json(std::span<const CheckReport> rs);

/// Predictive-density oracle with latent samples pinned by seed: the same
/// (episode context, seed) always produces the same latent draws, so the
/// stochastic-process consistency properties hold exactly per sample set.
class DensityProbe {
 public:
  virtual ~DensityProbe() = default;
  /// Per task, per target point: log sample-averaged predictive density at
  /// the episode's ground truth.
  virtual std::vector<std::vector<real>> point_log_densities(const episodes::Episode& e,
                                                             std::uint64_t seed) const = 0;
  /// Per task: log sample-averaged joint density over the target set.
  virtual std::vector<real> joint_log_densities(const episodes::Episode& e,
                                                std::uint64_t seed) const = 0;
};

/// Probe over a frozen copy of any model.
class ModelProbe : public DensityProbe {
 public:
  ModelProbe(const models::EpisodicModel& m, int n_z, int n_w);
  std::vector<std::vector<real>> point_log_densities(const episodes::Episode& e,
                                                     std::uint64_t seed) const override;
  std::vector<real> joint_log_densities(const episodes::Episode& e,
                                        std::uint64_t seed) const override;

 private:
  std::unique_ptr<models::EpisodicModel> frozen_;
  int n_z_, n_w_;
};

/// How the exchangeability trials permute target points. kLabelsOnly breaks
/// the (x, y) pairing on purpose; it exists so tests can prove the checker
/// detects misalignment.
enum class PermutationStyle { kPairs, kLabelsOnly };

/// Joint target log-density invariance under within-task permutations of
/// target points, with latents pinned by seed. PASS iff every trial agrees
/// with the baseline within 1e-6 relative.
CheckReport exchangeability_check(const DensityProbe& probe, const episodes::Episode& e,
                                  std::uint64_t seed, int trials, int episode_id = 0,
                                  PermutationStyle style = PermutationStyle::kPairs);

/// Per-point predictive densities invariant under deletion of random target
/// subsets (at least one point per task retained), latents pinned. PASS iff
/// every retained point agrees within 1e-9 relative.
CheckReport marginalization_check(const DensityProbe& probe, const episodes::Episode& e,
                                  std::uint64_t seed, int trials, int episode_id = 0);

struct GradCheckReport {
  std::string component;
  real max_rel_err = 0;
  bool pass = false;
  std::size_t n_checked = 0;
};

nlohmann::json gradcheck_to_json(const GradCheckReport& r);

/// Central differences (step 1e-5) against reverse-mode gradients for every
/// parameter whose name starts with one of check_prefixes (all when empty).
/// loss_fn must be a deterministic function of the parameters.
GradCheckReport finite_diff_gradcheck_fn(const std::string& name, diff::ParamSet& params,
                                         std::span<const std::string> check_prefixes,
                                         const std::function<diff::Tensor()>& loss_fn,
                                         real tolerance = real(1e-4), real step = real(1e-5));

/// The standard component suite on a small model: "encoder", "theta",
/// "phi" (any conditioning variant via suffix ":merge|:concat|:add"),
/// "decoder", or "elbo".
GradCheckReport finite_diff_gradcheck(const std::string& component, real tolerance = real(1e-4));

}  // namespace hnp::eval
