#include "hnp/models/cnp.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace hnp::models {

namespace d = hnp::diff;
using episodes::Episode;
using episodes::Mode;

CnpModel::CnpModel(CnpConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  Rng rng(init_seed);
  const auto dm = static_cast<std::size_t>(cfg_.d_model);
  enc_ = make_mlp(params_, "enc", dm, dm, static_cast<std::size_t>(cfg_.enc_in()), rng);
  dec_ = make_mlp(params_, "dec", static_cast<std::size_t>(cfg_.dec_out()), dm, 2 * dm, rng);
}

Tensor CnpModel::encode(std::span<const episodes::LabeledPoint> pts, bool with_labels) const {
  Tensor in = cfg_.mode == Mode::kRegression
                  ? regression_pair_matrix(pts, with_labels)
                  : feature_onehot_matrix(pts, cfg_.o_way, with_labels);
  return apply(enc_, in);
}

Tensor CnpModel::encode_targets(const std::vector<std::vector<real>>& xs) const {
  std::vector<episodes::LabeledPoint> pts(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    pts[i].x = xs[i];
    pts[i].label = 0;  // masked out below
  }
  return encode(pts, false);
}

Tensor CnpModel::decode(const Tensor& pooled_ctx, const Tensor& target_emb) const {
  Tensor in = d::concat_cols({d::repeat_rows(pooled_ctx, target_emb.rows()), target_emb});
  return apply(dec_, in);
}

LossParts CnpModel::training_loss(const Episode& e, int /*n_z*/, int /*n_w*/, Rng& /*rng*/) {
  if (e.mode != cfg_.mode) throw ModelError("training_loss: episode mode mismatch");
  Tensor nll_sum;
  for (const auto& task : e.tasks) {
    std::vector<episodes::LabeledPoint> targets = task.target;
    if (cfg_.mode == Mode::kRegression) {
      // same meta-training convention as the other models: score the
      // context-target union
      targets.insert(targets.end(), task.context.begin(), task.context.end());
    }
    Tensor pooled = d::mean_rows(encode(task.context, true));
    Tensor tgt_emb = encode(targets, false);
    Tensor out = decode(pooled, tgt_emb);

    Tensor nll_m;
    if (cfg_.mode == Mode::kRegression) {
      Tensor mean_col = d::narrow_cols(out, 0, 1);
      Tensor scale_col = d::add_scalar(d::softplus(d::narrow_cols(out, 1, 1)), d::kSigmaFloor);
      std::vector<real> ys(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i) ys[i] = targets[i].y;
      nll_m = d::gaussian_nll(mean_col, scale_col, Tensor::from({ys.size()}, std::move(ys)));
    } else {
      std::vector<int> labels(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i) labels[i] = targets[i].label;
      nll_m = d::nll_categorical_segments(out, labels, static_cast<std::size_t>(cfg_.o_way));
    }
    nll_sum = nll_sum.defined() ? d::add(nll_sum, nll_m) : nll_m;
  }
  LossParts parts;
  parts.total = nll_sum;
  parts.nll = nll_sum.scalar();
  if (!std::isfinite(parts.nll)) {
    throw ModelError("training_loss: non-finite loss (nll=" + std::to_string(parts.nll) + ")");
  }
  return parts;
}

PredictiveOutput CnpModel::predict(const Query& q, int /*n_z*/, int /*n_w*/,
                                   std::uint64_t /*seed*/) const {
  if (q.mode != cfg_.mode) throw ModelError("predict: query mode mismatch");
  PredictiveOutput out;
  out.mode = cfg_.mode;
  out.n_samples = 1;
  out.n_way = cfg_.mode == Mode::kClassification ? cfg_.o_way : 0;
  out.tasks.resize(q.tasks.size());
  for (std::size_t m = 0; m < q.tasks.size(); ++m) {
    const auto& xs = q.tasks[m].target_x;
    const std::size_t n = xs.size();
    auto& task_out = out.tasks[m];
    task_out.n_points = n;
    if (n == 0) continue;
    Tensor pooled = d::mean_rows(encode(q.tasks[m].context, true));
    Tensor dec_out = decode(pooled, encode_targets(xs));
    if (cfg_.mode == Mode::kRegression) {
      task_out.means.assign(1, std::vector<real>(n));
      task_out.scales.assign(1, std::vector<real>(n));
      for (std::size_t j = 0; j < n; ++j) {
        task_out.means[0][j] = dec_out.value_at(j * 2);
        const real pre = dec_out.value_at(j * 2 + 1);
        task_out.scales[0][j] =
            std::max(real(0), pre) + std::log1p(std::exp(-std::abs(pre))) + d::kSigmaFloor;
      }
    } else {
      const auto o_way = static_cast<std::size_t>(cfg_.o_way);
      task_out.probs.assign(1, std::vector<real>(n * o_way));
      std::vector<real> logits(o_way);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t o = 0; o < o_way; ++o) logits[o] = dec_out.value_at(j * o_way + o);
        const real lse = logsumexp(logits);
        for (std::size_t o = 0; o < o_way; ++o) {
          task_out.probs[0][j * o_way + o] = std::exp(logits[o] - lse);
        }
      }
    }
  }
  return out;
}

nlohmann::json CnpModel::config_json() const {
  nlohmann::json j;
  j["mode"] = episodes::mode_name(cfg_.mode);
  j["m_tasks"] = cfg_.m_tasks;
  j["o_way"] = cfg_.o_way;
  j["d_x"] = cfg_.d_x;
  j["d_model"] = cfg_.d_model;
  return j;
}

CnpConfig CnpModel::config_from_json(const nlohmann::json& j) {
  CnpConfig c;
  c.mode = episodes::mode_from_name(j.at("mode").get<std::string>());
  c.m_tasks = j.at("m_tasks").get<int>();
  c.o_way = j.at("o_way").get<int>();
  c.d_x = j.at("d_x").get<int>();
  c.d_model = j.at("d_model").get<int>();
  return c;
}

}  // namespace hnp::models
