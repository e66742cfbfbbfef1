#pragma once

#include <memory>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "hnp/diff/gaussian.hpp"
#include "hnp/diff/optim.hpp"
#include "hnp/diff/tensor.hpp"
#include "hnp/episodes/episode.hpp"

namespace hnp::models {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using diff::GaussianDiag;
using diff::ParamSet;
using diff::real;
using diff::Rng;
using diff::Tensor;

// ---- parameter bundles -------------------------------------------------

struct LinearParams {
  Tensor w;  // [out x in]
  Tensor b;  // [out]
};
/// Weights uniform in +-sqrt(1/fan_in), biases zero.
LinearParams make_linear(ParamSet& ps, const std::string& prefix, std::size_t d_out,
                         std::size_t d_in, Rng& rng);
Tensor apply(const LinearParams& p, const Tensor& x);

/// Two layers with a GELU hidden activation.
struct MlpParams {
  LinearParams l1, l2;
};
MlpParams make_mlp(ParamSet& ps, const std::string& prefix, std::size_t d_out,
                   std::size_t d_hidden, std::size_t d_in, Rng& rng);
Tensor apply(const MlpParams& p, const Tensor& x);

struct LayerNormParams {
  Tensor gain, bias;
};
LayerNormParams make_layer_norm(ParamSet& ps, const std::string& prefix, std::size_t d);

struct MsaParams {
  LinearParams q, k, v, o;
  int heads = 4;
};
MsaParams make_msa(ParamSet& ps, const std::string& prefix, std::size_t d, int heads, Rng& rng);
/// Scaled dot-product self-attention over the rows of seq[L x d].
Tensor multi_head_self_attention(const Tensor& seq, const MsaParams& p);

/// One pre-norm block: x + MSA(LN(x)), then + MLP(LN(.)).
struct BlockParams {
  LayerNormParams ln1, ln2;
  MsaParams msa;
  MlpParams mlp;
};
BlockParams make_block(ParamSet& ps, const std::string& prefix, std::size_t d, int heads,
                       Rng& rng);
Tensor transformer_block(const Tensor& seq, const BlockParams& p);

// ---- episode views -----------------------------------------------------

/// Raw feature rows [n x d_x].
Tensor feature_matrix(std::span<const episodes::LabeledPoint> pts);
/// Regression rows [x, y] (or [x, 0] when with_y is false): [n x (d_x + 1)].
Tensor regression_pair_matrix(std::span<const episodes::LabeledPoint> pts, bool with_y);
/// Feature plus one-hot label rows [n x (d_x + n_way)]; zeros in the label
/// slot when with_labels is false.
Tensor feature_onehot_matrix(std::span<const episodes::LabeledPoint> pts, int n_way,
                             bool with_labels);

/// Prediction input: context sets plus bare target features. Target labels
/// are structurally absent so a predictor cannot read them.
struct Query {
  episodes::Mode mode = episodes::Mode::kRegression;
  int n_way = 0;
  struct Task {
    std::vector<episodes::LabeledPoint> context;
    std::vector<std::vector<real>> target_x;
  };
  std::vector<Task> tasks;

  static Query of(const episodes::Episode& e);
};

// ---- predictive output -------------------------------------------------

/// Per-point predictive distributions, kept per Monte Carlo sample so both
/// the averaged prediction and sample-pinned joint densities are available.
struct PredictiveOutput {
  episodes::Mode mode = episodes::Mode::kRegression;
  std::size_t n_samples = 0;
  int n_way = 0;

  struct Task {
    // regression: [sample][point]
    std::vector<std::vector<real>> means;
    std::vector<std::vector<real>> scales;
    // classification: [sample][point * n_way]
    std::vector<std::vector<real>> probs;
    std::size_t n_points = 0;
  };
  std::vector<Task> tasks;

  std::size_t n_points(std::size_t task) const { return tasks[task].n_points; }

  /// log of the sample-averaged density at ground truth y.
  real point_log_density(std::size_t task, std::size_t j, real y) const;
  real point_log_density_class(std::size_t task, std::size_t j, int label) const;
  /// log of the sample-averaged joint density of the whole target set
  /// (the average of per-sample products).
  real joint_log_density(std::size_t task, std::span<const real> ys) const;
  real joint_log_density_class(std::size_t task, std::span<const int> labels) const;

  std::vector<real> avg_probs(std::size_t task, std::size_t j) const;
  /// Ties break toward the lowest category index.
  int argmax_class(std::size_t task, std::size_t j) const;
  real mixture_mean(std::size_t task, std::size_t j) const;
  real mixture_std(std::size_t task, std::size_t j) const;
};

// ---- model interface ---------------------------------------------------

struct LossParts {
  Tensor total;
  real nll = 0;
  real kl_z = 0;
  real kl_w = 0;
};

class EpisodicModel {
 public:
  virtual ~EpisodicModel() = default;
  virtual std::string kind() const = 0;
  virtual episodes::Mode mode() const = 0;
  virtual LossParts training_loss(const episodes::Episode& e, int n_z, int n_w, Rng& rng) = 0;
  virtual PredictiveOutput predict(const Query& q, int n_z, int n_w, std::uint64_t seed) const = 0;
  virtual ParamSet& params() = 0;
  virtual const ParamSet& params() const = 0;
  virtual nlohmann::json config_json() const = 0;
};

real logsumexp(std::span<const real> xs);

}  // namespace hnp::models
