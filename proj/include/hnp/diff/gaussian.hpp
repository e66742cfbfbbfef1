#pragma once

#include "hnp/diff/tensor.hpp"

namespace hnp::diff {

inline constexpr real kSigmaFloor = real(1e-4);

/// Diagonal Gaussian with matching mu/sigma shapes. Rows are treated as
/// independent distributions when the tensors are rank 2 (one distribution
/// per row), which is how the models batch their latent heads.
struct GaussianDiag {
  Tensor mu;
  Tensor sigma;

  GaussianDiag() = default;
  GaussianDiag(Tensor mu_, Tensor sigma_);

  /// sigma = softplus(pre_sigma) + kSigmaFloor.
  static GaussianDiag from_heads(Tensor mu_, Tensor pre_sigma);

  std::size_t dim() const { return mu.numel(); }
};

/// mu + sigma * eps with eps ~ N(0, I) drawn from rng; grads flow to mu and
/// sigma, eps is a constant.
Tensor reparam_sample(const GaussianDiag& q, Rng& rng);

/// As above but each row of q drawn n_draws times, giving
/// [rows(q) * n_draws x dim] with draws of one row contiguous.
Tensor reparam_sample_rows(const GaussianDiag& q, std::size_t n_draws, Rng& rng);

/// Closed-form KL(q || p) summed over every dimension (and row) -> scalar.
Tensor kl_diag_gaussian(const GaussianDiag& q, const GaussianDiag& p);

/// Sum over all entries of -log N(y | mean, scale), with y constant data.
/// mean/scale may be [n x s] against y[n] (each column is one MC sample).
Tensor gaussian_nll(const Tensor& mean, const Tensor& scale, const Tensor& y);

/// Plain-value log N(y | mu, sigma) for scoring paths.
real gaussian_logpdf(real y, real mu, real sigma);

}  // namespace hnp::diff
