#include "hnp/models/hnp.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace hnp::models {

namespace d = hnp::diff;
using episodes::Episode;
using episodes::Mode;

std::string conditioning_name(ZConditioning c) {
  switch (c) {
    case ZConditioning::kTokenMerge: return "merge";
    case ZConditioning::kConcat: return "concat";
    case ZConditioning::kAdd: return "add";
  }
  return "merge";
}

ZConditioning conditioning_from_name(const std::string& s) {
  if (s == "merge") return ZConditioning::kTokenMerge;
  if (s == "concat") return ZConditioning::kConcat;
  if (s == "add") return ZConditioning::kAdd;
  throw ModelError("unknown z-conditioning variant '" + s + "'");
}

void HnpConfig::validate() const {
  if (m_tasks <= 0 || d_x <= 0 || d_model <= 0 || d_z <= 0 || d_w <= 0 || heads <= 0) {
    throw ModelError("HnpConfig: all sizes must be positive");
  }
  if (mode == Mode::kClassification && o_way <= 1) {
    throw ModelError("HnpConfig: classification needs o_way >= 2");
  }
  if (d_model % heads != 0) {
    throw ModelError("HnpConfig: d_model " + std::to_string(d_model) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (d_w != d_model) {
    throw ModelError("HnpConfig: decoder rows are dotted with encoder embeddings, so d_w (" +
                     std::to_string(d_w) + ") must equal d_model (" + std::to_string(d_model) +
                     ")");
  }
}

HnpModel::HnpModel(HnpConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const auto dm = static_cast<std::size_t>(cfg_.d_model);
  const auto dz = static_cast<std::size_t>(cfg_.d_z);
  const auto dw = static_cast<std::size_t>(cfg_.d_w);
  const auto dphi = static_cast<std::size_t>(cfg_.phi_width());

  if (cfg_.mode == Mode::kRegression) {
    enc_mlp_ = make_mlp(params_, "enc", dm, dm, static_cast<std::size_t>(cfg_.d_x) + 1, rng);
  } else {
    enc_lin_ = make_linear(params_, "enc", dm, static_cast<std::size_t>(cfg_.d_x), rng);
  }

  theta_block_ = make_block(params_, "theta.block", dm, cfg_.heads, rng);
  theta_mu_ = make_mlp(params_, "theta.mu", dz, dm, dm, rng);
  theta_sigma_ = make_mlp(params_, "theta.sigma", dz, dm, dm, rng);

  phi_block_ = make_block(params_, "phi.block", dphi, cfg_.heads, rng);
  const std::size_t head_in =
      cfg_.conditioning == ZConditioning::kTokenMerge ? dphi + dz : dphi;
  phi_mu_ = make_mlp(params_, "phi.mu", dw, dm, head_in, rng);
  phi_sigma_ = make_mlp(params_, "phi.sigma", dw, dm, head_in, rng);
  if (cfg_.conditioning == ZConditioning::kAdd) {
    z_proj_ = make_linear(params_, "phi.z_proj", dphi, dz, rng);
  }

  nu_tokens_ = params_.add(
      "nu", Tensor::randn({static_cast<std::size_t>(cfg_.m_tasks), dm}, rng, real(0.02), true));
  omega_tokens_ = params_.add(
      "omega",
      Tensor::randn({static_cast<std::size_t>(cfg_.n_slots()), dphi}, rng, real(0.02), true));
}

// ---- encoders ----

Tensor HnpModel::encode_pairs(std::span<const episodes::LabeledPoint> pts, bool with_y) const {
  return apply(enc_mlp_, regression_pair_matrix(pts, with_y));
}

Tensor HnpModel::encode_features(std::span<const episodes::LabeledPoint> pts) const {
  return apply(enc_lin_, feature_matrix(pts));
}

Tensor HnpModel::encode_any(std::span<const episodes::LabeledPoint> pts, bool with_y) const {
  if (pts.empty()) throw ModelError("encode: empty point set");
  if (pts.front().x.size() != static_cast<std::size_t>(cfg_.d_x)) {
    throw ModelError("encode: feature dimension " + std::to_string(pts.front().x.size()) +
                     " does not match configured d_x " + std::to_string(cfg_.d_x));
  }
  return cfg_.mode == Mode::kRegression ? encode_pairs(pts, with_y) : encode_features(pts);
}

Tensor HnpModel::decoder_inputs(const std::vector<std::vector<real>>& xs) const {
  const std::size_t n = xs.size();
  const auto dx = static_cast<std::size_t>(cfg_.d_x);
  for (const auto& x : xs) {
    if (x.size() != dx) {
      throw ModelError("decoder inputs: feature dimension " + std::to_string(x.size()) +
                       " does not match configured d_x " + std::to_string(cfg_.d_x));
    }
  }
  if (cfg_.mode == Mode::kRegression) {
    std::vector<real> data(n * (dx + 1), real(0));
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(xs[i].begin(), xs[i].end(), data.begin() + static_cast<std::ptrdiff_t>(i * (dx + 1)));
    }
    return apply(enc_mlp_, Tensor::from({n, dx + 1}, std::move(data)));
  }
  std::vector<real> data(n * dx);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(xs[i].begin(), xs[i].end(), data.begin() + static_cast<std::ptrdiff_t>(i * dx));
  }
  return apply(enc_lin_, Tensor::from({n, dx}, std::move(data)));
}

// ---- inference modules ----

GaussianDiag HnpModel::infer_z(const Tensor& embeddings, int task_index) const {
  if (embeddings.rows() == 0) throw ModelError("infer_z: empty sequence");
  if (task_index < 0 || task_index >= cfg_.m_tasks) {
    throw ModelError("infer_z: task index " + std::to_string(task_index) + " outside M=" +
                     std::to_string(cfg_.m_tasks));
  }
  Tensor nu = d::narrow_rows(nu_tokens_, static_cast<std::size_t>(task_index), 1);
  Tensor refined = transformer_block(d::concat_rows({embeddings, nu}), theta_block_);
  Tensor nu_hat = d::narrow_rows(refined, embeddings.rows(), 1);
  return GaussianDiag::from_heads(apply(theta_mu_, nu_hat), apply(theta_sigma_, nu_hat));
}

Tensor HnpModel::refined_omega(const Tensor& agg_rows, int slot) const {
  if (agg_rows.rows() != static_cast<std::size_t>(cfg_.m_tasks)) {
    throw ModelError("refined_omega: " + std::to_string(agg_rows.rows()) +
                     " aggregate rows for M=" + std::to_string(cfg_.m_tasks) + " tasks");
  }
  Tensor om = d::narrow_rows(omega_tokens_, static_cast<std::size_t>(slot), 1);
  Tensor refined = transformer_block(d::concat_rows({agg_rows, om}), phi_block_);
  return d::narrow_rows(refined, agg_rows.rows(), 1);
}

GaussianDiag HnpModel::heads_on_rows(const Tensor& omega_hat, const Tensor& z_rows) const {
  Tensor h = d::concat_cols({d::repeat_rows(omega_hat, z_rows.rows()), z_rows});
  return GaussianDiag::from_heads(apply(phi_mu_, h), apply(phi_sigma_, h));
}

GaussianDiag HnpModel::infer_w(const Tensor& agg_rows, int slot, const Tensor& z_sample) const {
  Tensor z_row = z_sample.rank() == 1
                     ? d::reshape_2d(z_sample, 1, z_sample.numel())
                     : z_sample;
  switch (cfg_.conditioning) {
    case ZConditioning::kTokenMerge:
      return heads_on_rows(refined_omega(agg_rows, slot), z_row);
    case ZConditioning::kConcat: {
      Tensor core = d::concat_cols({agg_rows, d::repeat_rows(z_row, agg_rows.rows())});
      Tensor oh = refined_omega(core, slot);
      return GaussianDiag::from_heads(apply(phi_mu_, oh), apply(phi_sigma_, oh));
    }
    case ZConditioning::kAdd: {
      Tensor core = d::add(agg_rows, d::repeat_rows(apply(z_proj_, z_row), agg_rows.rows()));
      Tensor oh = refined_omega(core, slot);
      return GaussianDiag::from_heads(apply(phi_mu_, oh), apply(phi_sigma_, oh));
    }
  }
  throw ModelError("infer_w: unreachable conditioning variant");
}

std::pair<GaussianDiag, GaussianDiag> HnpModel::slot_distributions(const Tensor& post_agg,
                                                                   const Tensor& prior_agg,
                                                                   int slot,
                                                                   const Tensor& z_rows) const {
  if (cfg_.conditioning == ZConditioning::kTokenMerge) {
    return {heads_on_rows(refined_omega(post_agg, slot), z_rows),
            heads_on_rows(refined_omega(prior_agg, slot), z_rows)};
  }
  const std::size_t m = static_cast<std::size_t>(cfg_.m_tasks);
  const std::size_t total = z_rows.rows();
  std::vector<Tensor> q_mu, q_sd, p_mu, p_sd;
  q_mu.reserve(total);
  for (std::size_t r = 0; r < total; ++r) {
    Tensor z_r = d::narrow_rows(z_rows, r, 1);
    auto one_side = [&](const Tensor& agg) {
      Tensor core;
      if (cfg_.conditioning == ZConditioning::kConcat) {
        core = d::concat_cols({agg, d::repeat_rows(z_r, m)});
      } else {
        core = d::add(agg, d::repeat_rows(apply(z_proj_, z_r), m));
      }
      Tensor oh = refined_omega(core, slot);
      return std::pair<Tensor, Tensor>(apply(phi_mu_, oh), apply(phi_sigma_, oh));
    };
    auto [qm, qs] = one_side(post_agg);
    auto [pm, ps] = one_side(prior_agg);
    q_mu.push_back(qm);
    q_sd.push_back(qs);
    p_mu.push_back(pm);
    p_sd.push_back(ps);
  }
  return {GaussianDiag::from_heads(d::concat_rows(q_mu), d::concat_rows(q_sd)),
          GaussianDiag::from_heads(d::concat_rows(p_mu), d::concat_rows(p_sd))};
}

std::vector<Tensor> HnpModel::slot_aggregates(const std::vector<Tensor>& task_embs,
                                              const std::vector<std::vector<int>>& labels) const {
  const int slots = cfg_.n_slots();
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(slots));
  if (cfg_.mode == Mode::kRegression) {
    std::vector<Tensor> means;
    means.reserve(task_embs.size());
    for (const auto& e : task_embs) means.push_back(d::mean_rows(e));
    Tensor agg = d::concat_rows(means);
    for (int o = 0; o < slots; ++o) out.push_back(agg);
    return out;
  }
  for (int o = 0; o < slots; ++o) {
    std::vector<Tensor> rows;
    rows.reserve(task_embs.size());
    for (std::size_t m = 0; m < task_embs.size(); ++m) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < labels[m].size(); ++i) {
        if (labels[m][i] == o) idx.push_back(i);
      }
      if (idx.empty()) {
        throw ModelError("slot_aggregates: task " + std::to_string(m) +
                         " has no points of category " + std::to_string(o));
      }
      rows.push_back(d::mean_rows(d::gather_rows(task_embs[m], idx)));
    }
    out.push_back(d::concat_rows(rows));
  }
  return out;
}

// ---- training loss (the Monte Carlo ELBO) ----

LossParts HnpModel::training_loss(const Episode& e, int n_z, int n_w, Rng& rng) {
  if (e.mode != cfg_.mode) throw ModelError("training_loss: episode mode mismatch");
  if (static_cast<int>(e.tasks.size()) != cfg_.m_tasks) {
    throw ModelError("training_loss: episode has " + std::to_string(e.tasks.size()) +
                     " tasks, model expects " + std::to_string(cfg_.m_tasks));
  }
  if (cfg_.mode == Mode::kClassification &&
      static_cast<int>(e.label_map.size()) != cfg_.o_way) {
    throw ModelError("training_loss: episode is " + std::to_string(e.label_map.size()) +
                     "-way, model expects " + std::to_string(cfg_.o_way));
  }
  const std::size_t m_count = e.tasks.size();
  const std::size_t nz_eff = cfg_.z_path ? static_cast<std::size_t>(n_z) : 1;
  const std::size_t nw_eff = cfg_.w_path ? static_cast<std::size_t>(n_w) : 1;
  const std::size_t s_pairs = nz_eff * nw_eff;

  // tasks ordered by task_index
  std::vector<const episodes::TaskData*> tasks(m_count, nullptr);
  for (const auto& t : e.tasks) tasks[static_cast<std::size_t>(t.task_index)] = &t;

  std::vector<Tensor> ctx_emb(m_count), post_emb(m_count), dec_emb(m_count);
  std::vector<std::vector<int>> ctx_labels(m_count), post_labels(m_count);
  std::vector<Tensor> y_targets(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const auto& task = *tasks[m];
    if (cfg_.mode == Mode::kRegression) {
      // meta-training target set = context plus the extra target points
      std::vector<episodes::LabeledPoint> joint = task.context;
      joint.insert(joint.end(), task.target.begin(), task.target.end());
      ctx_emb[m] = encode_any(task.context, true);
      post_emb[m] = encode_any(joint, true);
      dec_emb[m] = encode_pairs(joint, false);
      std::vector<real> ys(joint.size());
      for (std::size_t i = 0; i < joint.size(); ++i) ys[i] = joint[i].y;
      y_targets[m] = Tensor::from({ys.size()}, std::move(ys));
    } else {
      ctx_emb[m] = encode_any(task.context, true);
      post_emb[m] = encode_any(task.target, true);
      dec_emb[m] = post_emb[m];
      for (const auto& p : task.context) ctx_labels[m].push_back(p.label);
      for (const auto& p : task.target) post_labels[m].push_back(p.label);
    }
  }

  std::vector<Tensor> loss_terms;
  real kl_z_val = 0, kl_w_val = 0;

  Tensor z_rows;
  if (cfg_.z_path) {
    std::vector<Tensor> q_mu, q_sd;
    Tensor kl_z_sum;
    for (std::size_t m = 0; m < m_count; ++m) {
      GaussianDiag q = infer_z(post_emb[m], static_cast<int>(m));
      GaussianDiag p = infer_z(ctx_emb[m], static_cast<int>(m));
      Tensor kl = d::kl_diag_gaussian(q, p);
      kl_z_sum = kl_z_sum.defined() ? d::add(kl_z_sum, kl) : kl;
      q_mu.push_back(q.mu);
      q_sd.push_back(q.sigma);
    }
    GaussianDiag stacked(d::concat_rows(q_mu), d::concat_rows(q_sd));
    z_rows = d::reparam_sample_rows(stacked, nz_eff, rng);
    kl_z_val = kl_z_sum.scalar();
    loss_terms.push_back(kl_z_sum);
  } else {
    z_rows = Tensor::zeros({m_count * nz_eff, static_cast<std::size_t>(cfg_.d_z)});
  }

  const auto prior_aggs = slot_aggregates(ctx_emb, ctx_labels);
  const auto post_aggs = slot_aggregates(post_emb, post_labels);

  const int slots = cfg_.n_slots();
  std::vector<Tensor> w_rows(static_cast<std::size_t>(slots));
  if (cfg_.w_path) {
    Tensor kl_w_sum;
    for (int o = 0; o < slots; ++o) {
      auto [q_w, p_w] = slot_distributions(post_aggs[static_cast<std::size_t>(o)],
                                           prior_aggs[static_cast<std::size_t>(o)], o, z_rows);
      Tensor kl = d::kl_diag_gaussian(q_w, p_w);
      kl_w_sum = kl_w_sum.defined() ? d::add(kl_w_sum, kl) : kl;
      w_rows[static_cast<std::size_t>(o)] = d::reparam_sample_rows(q_w, nw_eff, rng);
    }
    Tensor kl_w_scaled = d::scale(kl_w_sum, real(1) / real(nz_eff));
    kl_w_val = kl_w_scaled.scalar();
    loss_terms.push_back(kl_w_scaled);
  } else {
    for (int o = 0; o < slots; ++o) {
      // deterministic local parameters from the context side
      if (cfg_.conditioning == ZConditioning::kTokenMerge) {
        Tensor oh = refined_omega(prior_aggs[static_cast<std::size_t>(o)], o);
        Tensor h = d::concat_cols({d::repeat_rows(oh, z_rows.rows()), z_rows});
        w_rows[static_cast<std::size_t>(o)] = apply(phi_mu_, h);
      } else {
        auto [q_w, p_w] = slot_distributions(prior_aggs[static_cast<std::size_t>(o)],
                                             prior_aggs[static_cast<std::size_t>(o)], o, z_rows);
        w_rows[static_cast<std::size_t>(o)] = q_w.mu;
      }
    }
  }

  Tensor nll_sum;
  for (std::size_t m = 0; m < m_count; ++m) {
    Tensor nll_m;
    if (cfg_.mode == Mode::kRegression) {
      Tensor w_mean = d::narrow_rows(w_rows[0], m * s_pairs, s_pairs);
      Tensor w_scale = d::narrow_rows(w_rows[1], m * s_pairs, s_pairs);
      Tensor mean_mat = d::matmul_nt(dec_emb[m], w_mean);
      Tensor scale_mat =
          d::add_scalar(d::softplus(d::matmul_nt(dec_emb[m], w_scale)), d::kSigmaFloor);
      nll_m = d::gaussian_nll(mean_mat, scale_mat, y_targets[m]);
    } else {
      std::vector<Tensor> logit_cols;
      logit_cols.reserve(static_cast<std::size_t>(slots));
      for (int o = 0; o < slots; ++o) {
        Tensor w_o = d::narrow_rows(w_rows[static_cast<std::size_t>(o)], m * s_pairs, s_pairs);
        logit_cols.push_back(d::matmul_nt(dec_emb[m], w_o));
      }
      nll_m = d::nll_categorical_segments(d::interleave_cols(logit_cols), post_labels[m],
                                          static_cast<std::size_t>(slots));
    }
    nll_sum = nll_sum.defined() ? d::add(nll_sum, nll_m) : nll_m;
  }
  Tensor nll_scaled = d::scale(nll_sum, real(1) / real(s_pairs));
  loss_terms.push_back(nll_scaled);

  Tensor total = loss_terms.front();
  for (std::size_t i = 1; i < loss_terms.size(); ++i) total = d::add(total, loss_terms[i]);

  LossParts parts;
  parts.total = total;
  parts.nll = nll_scaled.scalar();
  parts.kl_z = kl_z_val;
  parts.kl_w = kl_w_val;
  if (!std::isfinite(parts.total.scalar())) {
    throw ModelError("training_loss: non-finite loss (nll=" + std::to_string(parts.nll) +
                     ", kl_z=" + std::to_string(parts.kl_z) +
                     ", kl_w=" + std::to_string(parts.kl_w) + ")");
  }
  return parts;
}

// ---- meta-test prediction (prior path) ----

PredictiveOutput HnpModel::predict(const Query& q, int n_z, int n_w, std::uint64_t seed) const {
  if (q.mode != cfg_.mode) throw ModelError("predict: query mode mismatch");
  if (static_cast<int>(q.tasks.size()) != cfg_.m_tasks) {
    throw ModelError("predict: query has " + std::to_string(q.tasks.size()) +
                     " tasks, model expects " + std::to_string(cfg_.m_tasks));
  }
  Rng rng(seed);
  const std::size_t m_count = q.tasks.size();
  const std::size_t nz_eff = cfg_.z_path ? static_cast<std::size_t>(n_z) : 1;
  const std::size_t nw_eff = cfg_.w_path ? static_cast<std::size_t>(n_w) : 1;
  const std::size_t s_pairs = nz_eff * nw_eff;

  std::vector<Tensor> ctx_emb(m_count);
  std::vector<std::vector<int>> ctx_labels(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    ctx_emb[m] = encode_any(q.tasks[m].context, true);
    for (const auto& p : q.tasks[m].context) ctx_labels[m].push_back(p.label);
  }

  Tensor z_rows;
  if (cfg_.z_path) {
    std::vector<Tensor> p_mu, p_sd;
    for (std::size_t m = 0; m < m_count; ++m) {
      GaussianDiag p = infer_z(ctx_emb[m], static_cast<int>(m));
      p_mu.push_back(p.mu);
      p_sd.push_back(p.sigma);
    }
    GaussianDiag stacked(d::concat_rows(p_mu), d::concat_rows(p_sd));
    z_rows = d::reparam_sample_rows(stacked, nz_eff, rng);
  } else {
    z_rows = Tensor::zeros({m_count * nz_eff, static_cast<std::size_t>(cfg_.d_z)});
  }

  const auto prior_aggs = slot_aggregates(ctx_emb, ctx_labels);
  const int slots = cfg_.n_slots();
  std::vector<Tensor> w_rows(static_cast<std::size_t>(slots));
  for (int o = 0; o < slots; ++o) {
    auto [p_w, p_w2] = slot_distributions(prior_aggs[static_cast<std::size_t>(o)],
                                          prior_aggs[static_cast<std::size_t>(o)], o, z_rows);
    if (cfg_.w_path) {
      w_rows[static_cast<std::size_t>(o)] = d::reparam_sample_rows(p_w, nw_eff, rng);
    } else {
      w_rows[static_cast<std::size_t>(o)] = p_w.mu;
    }
  }

  PredictiveOutput out;
  out.mode = cfg_.mode;
  out.n_samples = s_pairs;
  out.n_way = cfg_.mode == Mode::kClassification ? cfg_.o_way : 0;
  out.tasks.resize(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const auto& xs = q.tasks[m].target_x;
    const std::size_t n = xs.size();
    auto& task_out = out.tasks[m];
    task_out.n_points = n;
    if (n == 0) continue;
    Tensor emb = decoder_inputs(xs);
    if (cfg_.mode == Mode::kRegression) {
      Tensor w_mean = d::narrow_rows(w_rows[0], m * s_pairs, s_pairs);
      Tensor w_scale = d::narrow_rows(w_rows[1], m * s_pairs, s_pairs);
      Tensor mean_mat = d::matmul_nt(emb, w_mean);
      Tensor scale_mat =
          d::add_scalar(d::softplus(d::matmul_nt(emb, w_scale)), d::kSigmaFloor);
      task_out.means.assign(s_pairs, std::vector<real>(n));
      task_out.scales.assign(s_pairs, std::vector<real>(n));
      for (std::size_t s = 0; s < s_pairs; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
          task_out.means[s][j] = mean_mat.value_at(j * s_pairs + s);
          task_out.scales[s][j] = scale_mat.value_at(j * s_pairs + s);
        }
      }
    } else {
      const auto o_way = static_cast<std::size_t>(cfg_.o_way);
      std::vector<Tensor> logit_cols;
      for (int o = 0; o < slots; ++o) {
        Tensor w_o = d::narrow_rows(w_rows[static_cast<std::size_t>(o)], m * s_pairs, s_pairs);
        logit_cols.push_back(d::matmul_nt(emb, w_o));
      }
      task_out.probs.assign(s_pairs, std::vector<real>(n * o_way));
      std::vector<real> logits(o_way);
      for (std::size_t s = 0; s < s_pairs; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t o = 0; o < o_way; ++o) {
            logits[o] = logit_cols[o].value_at(j * s_pairs + s);
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

// ---- config (de)serialization ----

nlohmann::json HnpModel::config_json() const {
  nlohmann::json j;
  j["mode"] = episodes::mode_name(cfg_.mode);
  j["m_tasks"] = cfg_.m_tasks;
  j["o_way"] = cfg_.o_way;
  j["d_x"] = cfg_.d_x;
  j["d_model"] = cfg_.d_model;
  j["d_z"] = cfg_.d_z;
  j["d_w"] = cfg_.d_w;
  j["heads"] = cfg_.heads;
  j["conditioning"] = conditioning_name(cfg_.conditioning);
  j["z_path"] = cfg_.z_path;
  j["w_path"] = cfg_.w_path;
  return j;
}

HnpConfig HnpModel::config_from_json(const nlohmann::json& j) {
  HnpConfig c;
  c.mode = episodes::mode_from_name(j.at("mode").get<std::string>());
  c.m_tasks = j.at("m_tasks").get<int>();
  c.o_way = j.at("o_way").get<int>();
  c.d_x = j.at("d_x").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_z = j.at("d_z").get<int>();
  c.d_w = j.at("d_w").get<int>();
  c.heads = j.at("heads").get<int>();
  c.conditioning = conditioning_from_name(j.at("conditioning").get<std::string>());
  c.z_path = j.at("z_path").get<bool>();
  c.w_path = j.at("w_path").get<bool>();
  return c;
}

}  // namespace hnp::models
