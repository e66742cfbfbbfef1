#include "hnp/models/np.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace hnp::models {

namespace d = hnp::diff;
using episodes::Episode;
using episodes::Mode;

NpModel::NpModel(NpConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  Rng rng(init_seed);
  const auto dm = static_cast<std::size_t>(cfg_.d_model);
  const auto dz = static_cast<std::size_t>(cfg_.d_z);
  enc_ = make_mlp(params_, "enc", dm, dm, static_cast<std::size_t>(cfg_.enc_in()), rng);
  mu_head_ = make_mlp(params_, "mu", dz, dm, dm, rng);
  sigma_head_ = make_mlp(params_, "sigma", dz, dm, dm, rng);
  dec_ = make_mlp(params_, "dec", static_cast<std::size_t>(cfg_.dec_out()), dm, dz + dm, rng);
}

Tensor NpModel::encode(std::span<const episodes::LabeledPoint> pts, bool with_labels) const {
  Tensor in = cfg_.mode == Mode::kRegression
                  ? regression_pair_matrix(pts, with_labels)
                  : feature_onehot_matrix(pts, cfg_.o_way, with_labels);
  return apply(enc_, in);
}

Tensor NpModel::encode_targets(const std::vector<std::vector<real>>& xs) const {
  std::vector<episodes::LabeledPoint> pts(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    pts[i].x = xs[i];
    pts[i].label = 0;
  }
  return encode(pts, false);
}

GaussianDiag NpModel::latent_from(std::span<const episodes::LabeledPoint> pts) const {
  Tensor pooled = d::mean_rows(encode(pts, true));
  return GaussianDiag::from_heads(apply(mu_head_, pooled), apply(sigma_head_, pooled));
}

Tensor NpModel::decode(const Tensor& z_rows, const Tensor& target_emb) const {
  const std::size_t s = z_rows.rows(), n = target_emb.rows();
  Tensor in = d::concat_cols({d::repeat_each_row(z_rows, n), d::repeat_rows(target_emb, s)});
  return apply(dec_, in);
}

LossParts NpModel::training_loss(const Episode& e, int n_z, int /*n_w*/, Rng& rng) {
  if (e.mode != cfg_.mode) throw ModelError("training_loss: episode mode mismatch");
  const std::size_t nz = static_cast<std::size_t>(n_z);
  Tensor nll_sum, kl_sum;
  for (const auto& task : e.tasks) {
    std::vector<episodes::LabeledPoint> targets = task.target;
    if (cfg_.mode == Mode::kRegression) {
      targets.insert(targets.end(), task.context.begin(), task.context.end());
    }
    GaussianDiag q = latent_from(targets);
    GaussianDiag p = latent_from(task.context);
    Tensor kl = d::kl_diag_gaussian(q, p);
    kl_sum = kl_sum.defined() ? d::add(kl_sum, kl) : kl;

    Tensor z_rows = d::reparam_sample_rows(q, nz, rng);
    Tensor tgt_emb = encode(targets, false);
    Tensor out = decode(z_rows, tgt_emb);  // [nz * n x dec_out]

    const std::size_t n = targets.size();
    Tensor nll_m;
    if (cfg_.mode == Mode::kRegression) {
      Tensor mean_col = d::narrow_cols(out, 0, 1);
      Tensor scale_col = d::add_scalar(d::softplus(d::narrow_cols(out, 1, 1)), d::kSigmaFloor);
      std::vector<real> ys(nz * n);
      for (std::size_t i = 0; i < nz; ++i)
        for (std::size_t j = 0; j < n; ++j) ys[i * n + j] = targets[j].y;
      nll_m = d::gaussian_nll(mean_col, scale_col, Tensor::from({nz * n}, std::move(ys)));
    } else {
      std::vector<int> labels(nz * n);
      for (std::size_t i = 0; i < nz; ++i)
        for (std::size_t j = 0; j < n; ++j) labels[i * n + j] = targets[j].label;
      nll_m = d::nll_categorical_segments(out, labels, static_cast<std::size_t>(cfg_.o_way));
    }
    nll_m = d::scale(nll_m, real(1) / real(nz));
    nll_sum = nll_sum.defined() ? d::add(nll_sum, nll_m) : nll_m;
  }
  LossParts parts;
  parts.total = d::add(nll_sum, kl_sum);
  parts.nll = nll_sum.scalar();
  parts.kl_z = kl_sum.scalar();
  if (!std::isfinite(parts.total.scalar())) {
    throw ModelError("training_loss: non-finite loss (nll=" + std::to_string(parts.nll) +
                     ", kl=" + std::to_string(parts.kl_z) + ")");
  }
  return parts;
}

PredictiveOutput NpModel::predict(const Query& q, int n_z, int /*n_w*/,
                                  std::uint64_t seed) const {
  if (q.mode != cfg_.mode) throw ModelError("predict: query mode mismatch");
  Rng rng(seed);
  const std::size_t nz = static_cast<std::size_t>(n_z);
  PredictiveOutput out;
  out.mode = cfg_.mode;
  out.n_samples = nz;
  out.n_way = cfg_.mode == Mode::kClassification ? cfg_.o_way : 0;
  out.tasks.resize(q.tasks.size());
  for (std::size_t m = 0; m < q.tasks.size(); ++m) {
    const auto& xs = q.tasks[m].target_x;
    const std::size_t n = xs.size();
    auto& task_out = out.tasks[m];
    task_out.n_points = n;
    GaussianDiag prior = latent_from(q.tasks[m].context);
    Tensor z_rows = d::reparam_sample_rows(prior, nz, rng);
    if (n == 0) continue;
    Tensor dec_out = decode(z_rows, encode_targets(xs));
    if (cfg_.mode == Mode::kRegression) {
      task_out.means.assign(nz, std::vector<real>(n));
      task_out.scales.assign(nz, std::vector<real>(n));
      for (std::size_t s = 0; s < nz; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
          task_out.means[s][j] = dec_out.value_at((s * n + j) * 2);
          const real pre = dec_out.value_at((s * n + j) * 2 + 1);
          task_out.scales[s][j] =
              std::max(real(0), pre) + std::log1p(std::exp(-std::abs(pre))) + d::kSigmaFloor;
        }
      }
    } else {
      const auto o_way = static_cast<std::size_t>(cfg_.o_way);
      task_out.probs.assign(nz, std::vector<real>(n * o_way));
      std::vector<real> logits(o_way);
      for (std::size_t s = 0; s < nz; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t o = 0; o < o_way; ++o) {
            logits[o] = dec_out.value_at((s * n + j) * o_way + o);
          }
          const real lse = logsumexp(logits);
          for (std::size_t o = 0; o < o_way; ++o) {
            task_out.probs[s][j * o_way + o] = std::exp(logits[o] - lse);
          }
        }
      }
    }
  }
  return out;
}

nlohmann::json NpModel::config_json() const {
  nlohmann::json j;
  j["mode"] = episodes::mode_name(cfg_.mode);
  j["m_tasks"] = cfg_.m_tasks;
  j["o_way"] = cfg_.o_way;
  j["d_x"] = cfg_.d_x;
  j["d_model"] = cfg_.d_model;
  j["d_z"] = cfg_.d_z;
  return j;
}

NpConfig NpModel::config_from_json(const nlohmann::json& j) {
  NpConfig c;
  c.mode = episodes::mode_from_name(j.at("mode").get<std::string>());
  c.m_tasks = j.at("m_tasks").get<int>();
  c.o_way = j.at("o_way").get<int>();
  c.d_x = j.at("d_x").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_z = j.at("d_z").get<int>();
  return c;
}

}  // namespace hnp::models
