#include "hnp/diff/gaussian.hpp"

#include <cmath>

namespace hnp::diff {

namespace {
constexpr real kHalfLog2Pi = real(0.91893853320467274178);  // 0.5*ln(2*pi)
}

GaussianDiag::GaussianDiag(Tensor mu_, Tensor sigma_)
    : mu(std::move(mu_)), sigma(std::move(sigma_)) {
  if (mu.shape() != sigma.shape()) {
    throw ShapeError("GaussianDiag: mu " + shape_str(mu.shape()) + " vs sigma " +
                     shape_str(sigma.shape()));
  }
  for (real s : sigma.values()) {
    if (!(s >= kSigmaFloor)) {
      throw ConfigError("GaussianDiag: sigma component below floor");
    }
  }
}

GaussianDiag GaussianDiag::from_heads(Tensor mu_, Tensor pre_sigma) {
  return GaussianDiag(std::move(mu_), add_scalar(softplus(pre_sigma), kSigmaFloor));
}

Tensor reparam_sample(const GaussianDiag& q, Rng& rng) {
  Tensor eps = Tensor::randn(q.mu.shape(), rng, real(1));
  return add(q.mu, mul(q.sigma, eps));
}

Tensor reparam_sample_rows(const GaussianDiag& q, std::size_t n_draws, Rng& rng) {
  Tensor mu_rep = repeat_each_row(q.mu, n_draws);
  Tensor sd_rep = repeat_each_row(q.sigma, n_draws);
  Tensor eps = Tensor::randn(mu_rep.shape(), rng, real(1));
  return add(mu_rep, mul(sd_rep, eps));
}

Tensor kl_diag_gaussian(const GaussianDiag& q, const GaussianDiag& p) {
  if (q.mu.shape() != p.mu.shape()) {
    throw ShapeError("kl_diag_gaussian: q " + shape_str(q.mu.shape()) + " vs p " +
                     shape_str(p.mu.shape()));
  }
  // KL = sum log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
  Tensor var_p = square(p.sigma);
  Tensor num = add(square(q.sigma), square(sub(q.mu, p.mu)));
  Tensor terms = add(sub(log(p.sigma), log(q.sigma)),
                     add_scalar(scale(div(num, var_p), real(0.5)), real(-0.5)));
  return sum_all(terms);
}

Tensor gaussian_nll(const Tensor& mean, const Tensor& scale_t, const Tensor& y) {
  if (mean.shape() != scale_t.shape()) {
    throw ShapeError("gaussian_nll: mean " + shape_str(mean.shape()) + " vs scale " +
                     shape_str(scale_t.shape()));
  }
  Tensor diff;
  if (y.numel() == mean.numel()) {
    Tensor yy = y;
    if (y.shape() != mean.shape()) {
      yy = mean.rank() == 1 ? flatten(y) : reshape_2d(y, mean.rows(), mean.cols());
    }
    diff = sub(mean, yy);
  } else if (y.numel() == mean.rows()) {
    diff = sub_colvec(mean, y);
  } else {
    throw ShapeError("gaussian_nll: targets " + shape_str(y.shape()) +
                     " do not match predictions " + shape_str(mean.shape()));
  }
  Tensor z = div(diff, scale_t);
  Tensor per = add_scalar(add(scale(square(z), real(0.5)), log(scale_t)), kHalfLog2Pi);
  return sum_all(per);
}

real gaussian_logpdf(real y, real mu, real sigma) {
  const real z = (y - mu) / sigma;
  return -kHalfLog2Pi - std::log(sigma) - real(0.5) * z * z;
}

}  // namespace hnp::diff
