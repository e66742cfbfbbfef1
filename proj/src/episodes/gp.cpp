#include "hnp/episodes/gp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>

namespace hnp::episodes {

void GpConfig::validate() const {
  if (!(length_scale > 0) || !(signal_sigma > 0) || !(jitter > 0)) {
    throw DataError("GpConfig: length_scale, signal_sigma and jitter must be positive");
  }
  if (intervals.empty() || n_context_per_task <= 0 || n_target_per_task <= 0) {
    throw DataError("GpConfig: needs at least one interval and positive point counts");
  }
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto& [lo, hi] = intervals[i];
    if (!(lo < hi)) throw DataError("GpConfig: interval " + std::to_string(i) + " is empty");
    for (std::size_t j = i + 1; j < intervals.size(); ++j) {
      const auto& [lo2, hi2] = intervals[j];
      if (lo < hi2 && lo2 < hi) {
        throw DataError("GpConfig: intervals " + std::to_string(i) + " and " +
                        std::to_string(j) + " overlap");
      }
    }
  }
}

real rbf_kernel(real x, real xp, const GpConfig& cfg) {
  const real d = x - xp;
  return cfg.signal_sigma * cfg.signal_sigma *
         std::exp(-d * d / (real(2) * cfg.length_scale * cfg.length_scale));
}

std::vector<real> sample_gp_values(const std::vector<real>& xs, const GpConfig& cfg, Rng& rng) {
  using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<real, Eigen::Dynamic, 1>;
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());

  Mat k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const real v = rbf_kernel(xs[static_cast<std::size_t>(i)],
                                xs[static_cast<std::size_t>(j)], cfg);
      k(i, j) = v;
      k(j, i) = v;
    }
  }

  // the standard normal draw happens before factorization so the consumed
  // rng sequence does not depend on how many jitter retries were needed
  Vec eps(n);
  for (Eigen::Index i = 0; i < n; ++i) eps(i) = rng.normal();

  real jitter = cfg.jitter;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Mat kj = k + jitter * Mat::Identity(n, n);
    Eigen::LLT<Mat> llt(kj);
    if (llt.info() == Eigen::Success) {
      Vec y = llt.matrixL() * eps;
      return {y.data(), y.data() + n};
    }
    jitter *= real(10);
  }
  throw DataError("sample_gp_values: Cholesky failed after jitter escalation to " +
                  std::to_string(jitter / 10));
}

Episode sample_gp_episode(const GpConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t m = cfg.intervals.size();
  const std::size_t per_task =
      static_cast<std::size_t>(cfg.n_context_per_task + cfg.n_target_per_task);

  std::vector<real> xs;
  xs.reserve(m * per_task);
  for (std::size_t t = 0; t < m; ++t) {
    const auto& [lo, hi] = cfg.intervals[t];
    for (std::size_t i = 0; i < per_task; ++i) xs.push_back(rng.uniform(lo, hi));
  }
  const std::vector<real> ys = sample_gp_values(xs, cfg, rng);

  Episode e;
  e.mode = Mode::kRegression;
  e.tasks.resize(m);
  for (std::size_t t = 0; t < m; ++t) {
    TaskData& task = e.tasks[t];
    task.task_index = static_cast<int>(t);
    for (std::size_t i = 0; i < per_task; ++i) {
      LabeledPoint p;
      p.x = {xs[t * per_task + i]};
      p.y = ys[t * per_task + i];
      if (i < static_cast<std::size_t>(cfg.n_context_per_task)) {
        task.context.push_back(std::move(p));
      } else {
        task.target.push_back(std::move(p));
      }
    }
  }
  return e;
}

}  // namespace hnp::episodes
