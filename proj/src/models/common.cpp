#include "hnp/models/common.hpp"

#include <cmath>

namespace hnp::models {

using diff::ConfigError;
using diff::ShapeError;

LinearParams make_linear(ParamSet& ps, const std::string& prefix, std::size_t d_out,
                         std::size_t d_in, Rng& rng) {
  const real bound = real(1) / std::sqrt(real(d_in));
  LinearParams p;
  p.w = ps.add(prefix + ".w", Tensor::uniform({d_out, d_in}, rng, bound, true));
  p.b = ps.add(prefix + ".b", Tensor::zeros({d_out}, true));
  return p;
}

Tensor apply(const LinearParams& p, const Tensor& x) { return diff::linear(x, p.w, p.b); }

MlpParams make_mlp(ParamSet& ps, const std::string& prefix, std::size_t d_out,
                   std::size_t d_hidden, std::size_t d_in, Rng& rng) {
  MlpParams p;
  p.l1 = make_linear(ps, prefix + ".l1", d_hidden, d_in, rng);
  p.l2 = make_linear(ps, prefix + ".l2", d_out, d_hidden, rng);
  return p;
}

Tensor apply(const MlpParams& p, const Tensor& x) {
  return apply(p.l2, diff::gelu(apply(p.l1, x)));
}

LayerNormParams make_layer_norm(ParamSet& ps, const std::string& prefix, std::size_t d) {
  LayerNormParams p;
  p.gain = ps.add(prefix + ".gain", Tensor::constant({d}, real(1), true));
  p.bias = ps.add(prefix + ".bias", Tensor::zeros({d}, true));
  return p;
}

MsaParams make_msa(ParamSet& ps, const std::string& prefix, std::size_t d, int heads, Rng& rng) {
  MsaParams p;
  p.q = make_linear(ps, prefix + ".q", d, d, rng);
  p.k = make_linear(ps, prefix + ".k", d, d, rng);
  p.v = make_linear(ps, prefix + ".v", d, d, rng);
  p.o = make_linear(ps, prefix + ".o", d, d, rng);
  p.heads = heads;
  return p;
}

Tensor multi_head_self_attention(const Tensor& seq, const MsaParams& p) {
  const std::size_t d = seq.cols();
  const std::size_t h = static_cast<std::size_t>(p.heads);
  if (h == 0 || d % h != 0) {
    throw ConfigError("multi_head_self_attention: width " + std::to_string(d) +
                      " not divisible by " + std::to_string(h) + " heads");
  }
  if (seq.rows() == 0) throw ShapeError("multi_head_self_attention: empty sequence");
  const std::size_t dh = d / h;
  const real inv_sqrt = real(1) / std::sqrt(real(dh));

  Tensor q = apply(p.q, seq);
  Tensor k = apply(p.k, seq);
  Tensor v = apply(p.v, seq);

  std::vector<Tensor> heads_out;
  heads_out.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    Tensor qh = diff::narrow_cols(q, i * dh, dh);
    Tensor kh = diff::narrow_cols(k, i * dh, dh);
    Tensor vh = diff::narrow_cols(v, i * dh, dh);
    Tensor attn = diff::softmax(diff::scale(diff::matmul_nt(qh, kh), inv_sqrt), 1);
    heads_out.push_back(diff::matmul(attn, vh));
  }
  return apply(p.o, diff::concat_cols(heads_out));
}

BlockParams make_block(ParamSet& ps, const std::string& prefix, std::size_t d, int heads,
                       Rng& rng) {
  BlockParams p;
  p.ln1 = make_layer_norm(ps, prefix + ".ln1", d);
  p.msa = make_msa(ps, prefix + ".msa", d, heads, rng);
  p.ln2 = make_layer_norm(ps, prefix + ".ln2", d);
  p.mlp = make_mlp(ps, prefix + ".mlp", d, d, d, rng);
  return p;
}

Tensor transformer_block(const Tensor& seq, const BlockParams& p) {
  Tensor h = diff::add(
      seq, multi_head_self_attention(diff::layer_norm(seq, p.ln1.gain, p.ln1.bias), p.msa));
  return diff::add(h, apply(p.mlp, diff::layer_norm(h, p.ln2.gain, p.ln2.bias)));
}

// ---- episode views ----

Tensor feature_matrix(std::span<const episodes::LabeledPoint> pts) {
  const std::size_t n = pts.size();
  const std::size_t d = n ? pts.front().x.size() : 0;
  std::vector<real> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(pts[i].x.begin(), pts[i].x.end(), data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Tensor::from({n, d}, std::move(data));
}

Tensor regression_pair_matrix(std::span<const episodes::LabeledPoint> pts, bool with_y) {
  const std::size_t n = pts.size();
  const std::size_t d = n ? pts.front().x.size() : 0;
  std::vector<real> data(n * (d + 1));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(pts[i].x.begin(), pts[i].x.end(),
              data.begin() + static_cast<std::ptrdiff_t>(i * (d + 1)));
    data[i * (d + 1) + d] = with_y ? pts[i].y : real(0);
  }
  return Tensor::from({n, d + 1}, std::move(data));
}

Tensor feature_onehot_matrix(std::span<const episodes::LabeledPoint> pts, int n_way,
                             bool with_labels) {
  const std::size_t n = pts.size();
  const std::size_t d = n ? pts.front().x.size() : 0;
  const std::size_t w = d + static_cast<std::size_t>(n_way);
  std::vector<real> data(n * w, real(0));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(pts[i].x.begin(), pts[i].x.end(), data.begin() + static_cast<std::ptrdiff_t>(i * w));
    if (with_labels) data[i * w + d + static_cast<std::size_t>(pts[i].label)] = real(1);
  }
  return Tensor::from({n, w}, std::move(data));
}

Query Query::of(const episodes::Episode& e) {
  Query q;
  q.mode = e.mode;
  q.n_way = static_cast<int>(e.label_map.size());
  q.tasks.resize(e.tasks.size());
  for (std::size_t m = 0; m < e.tasks.size(); ++m) {
    q.tasks[m].context = e.tasks[m].context;
    q.tasks[m].target_x.reserve(e.tasks[m].target.size());
    for (const auto& p : e.tasks[m].target) q.tasks[m].target_x.push_back(p.x);
  }
  return q;
}

// ---- predictive output ----

real logsumexp(std::span<const real> xs) {
  real mx = xs[0];
  for (real x : xs) mx = std::max(mx, x);
  real s = 0;
  for (real x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

real PredictiveOutput::point_log_density(std::size_t task, std::size_t j, real y) const {
  const auto& t = tasks[task];
  std::vector<real> lps(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    lps[s] = diff::gaussian_logpdf(y, t.means[s][j], t.scales[s][j]);
  }
  return logsumexp(lps) - std::log(real(n_samples));
}

real PredictiveOutput::point_log_density_class(std::size_t task, std::size_t j, int label) const {
  const auto& t = tasks[task];
  real acc = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    acc += t.probs[s][j * static_cast<std::size_t>(n_way) + static_cast<std::size_t>(label)];
  }
  return std::log(acc / real(n_samples));
}

real PredictiveOutput::joint_log_density(std::size_t task, std::span<const real> ys) const {
  const auto& t = tasks[task];
  std::vector<real> lps(n_samples, real(0));
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t j = 0; j < ys.size(); ++j) {
      lps[s] += diff::gaussian_logpdf(ys[j], t.means[s][j], t.scales[s][j]);
    }
  }
  return logsumexp(lps) - std::log(real(n_samples));
}

real PredictiveOutput::joint_log_density_class(std::size_t task,
                                               std::span<const int> labels) const {
  const auto& t = tasks[task];
  std::vector<real> lps(n_samples, real(0));
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      lps[s] += std::log(
          t.probs[s][j * static_cast<std::size_t>(n_way) + static_cast<std::size_t>(labels[j])]);
    }
  }
  return logsumexp(lps) - std::log(real(n_samples));
}

std::vector<real> PredictiveOutput::avg_probs(std::size_t task, std::size_t j) const {
  const auto& t = tasks[task];
  std::vector<real> out(static_cast<std::size_t>(n_way), real(0));
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (int o = 0; o < n_way; ++o) {
      out[static_cast<std::size_t>(o)] +=
          t.probs[s][j * static_cast<std::size_t>(n_way) + static_cast<std::size_t>(o)];
    }
  }
  for (auto& v : out) v /= real(n_samples);
  return out;
}

int PredictiveOutput::argmax_class(std::size_t task, std::size_t j) const {
  const auto probs = avg_probs(task, j);
  int best = 0;
  for (int o = 1; o < n_way; ++o) {
    if (probs[static_cast<std::size_t>(o)] > probs[static_cast<std::size_t>(best)]) best = o;
  }
  return best;
}

real PredictiveOutput::mixture_mean(std::size_t task, std::size_t j) const {
  const auto& t = tasks[task];
  real acc = 0;
  for (std::size_t s = 0; s < n_samples; ++s) acc += t.means[s][j];
  return acc / real(n_samples);
}

real PredictiveOutput::mixture_std(std::size_t task, std::size_t j) const {
  const auto& t = tasks[task];
  const real m = mixture_mean(task, j);
  real acc = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    acc += t.scales[s][j] * t.scales[s][j] + t.means[s][j] * t.means[s][j];
  }
  return std::sqrt(std::max(acc / real(n_samples) - m * m, real(0)));
}

}  // namespace hnp::models
