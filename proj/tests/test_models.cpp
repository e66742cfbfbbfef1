#include <doctest.h>

#include <cmath>

#include "hnp/diff/optim.hpp"
#include "hnp/episodes/gp.hpp"
#include "hnp/episodes/synthetic.hpp"
#include "hnp/models/checkpoint.hpp"
#include "hnp/models/cnp.hpp"
#include "hnp/models/common.hpp"
#include "hnp/models/hnp.hpp"
#include "hnp/models/np.hpp"

#include <nlohmann/json.hpp>

using namespace hnp::models;
namespace d = hnp::diff;
namespace ep = hnp::episodes;
using d::Rng;
using d::Tensor;
using hnp::diff::real;

namespace {

void set_values(const Tensor& t, const std::vector<real>& vals) {
  Tensor h = t;
  REQUIRE(h.numel() == vals.size());
  std::copy(vals.begin(), vals.end(), h.values_mut().begin());
}

void set_param(d::ParamSet& ps, const std::string& name, const std::vector<real>& vals) {
  const Tensor* t = ps.find(name);
  REQUIRE(t != nullptr);
  set_values(*t, vals);
}

void zero_all_params(EpisodicModel& m) {
  for (const auto& [name, t] : m.params()) {
    Tensor h = t;
    std::fill(h.values_mut().begin(), h.values_mut().end(), real(0));
  }
}

double gelu_ref(double x) { return x * 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }
double softplus_ref(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

HnpConfig small_reg_config() {
  HnpConfig cfg;
  cfg.mode = ep::Mode::kRegression;
  cfg.m_tasks = 2;
  cfg.d_x = 1;
  cfg.d_model = 8;
  cfg.d_z = 4;
  cfg.d_w = 8;
  cfg.heads = 2;
  return cfg;
}

HnpConfig small_cls_config() {
  HnpConfig cfg;
  cfg.mode = ep::Mode::kClassification;
  cfg.m_tasks = 2;
  cfg.o_way = 3;
  cfg.d_x = 4;
  cfg.d_model = 8;
  cfg.d_z = 4;
  cfg.d_w = 8;
  cfg.heads = 2;
  return cfg;
}

ep::Episode small_cls_episode(std::uint64_t seed) {
  ep::SyntheticConfig sc;
  sc.proto_dim = 4;
  sc.n_domains = 2;
  sc.n_train_categories = 6;
  sc.n_test_categories = 4;
  ep::SyntheticDomains domains(sc);
  ep::EpisodeSpec spec;
  spec.m_tasks = 2;
  spec.o_way = 3;
  spec.k_shot = 2;
  spec.n_target = 6;
  Rng rng(seed);
  return domains.sample_episode(spec, ep::Split::kMetaTrain, rng);
}

ep::Episode small_gp_episode(std::uint64_t seed) {
  ep::GpConfig gp;
  gp.intervals = {{-2, 0}, {0, 2}};
  gp.n_context_per_task = 4;
  gp.n_target_per_task = 6;
  Rng rng(seed);
  return ep::sample_gp_episode(gp, rng);
}

}  // namespace

TEST_CASE("multi_head_self_attention: single row, equivariance, head-count errors") {
  d::ParamSet ps;
  Rng rng(3);
  MsaParams msa = make_msa(ps, "msa", 4, 2, rng);

  // a single position attends only to itself: out = Wo (Wv x + bv) + bo
  Tensor one = Tensor::from({1, 4}, {real(0.3), real(-0.2), real(0.5), real(0.1)});
  Tensor got = multi_head_self_attention(one, msa);
  Tensor expect = apply(msa.o, apply(msa.v, one));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(got.value_at(i) == doctest::Approx(expect.value_at(i)).epsilon(1e-12));
  }

  // permuting rows permutes outputs identically
  Tensor seq = Tensor::randn({5, 4}, rng, 1);
  Tensor out = multi_head_self_attention(seq, msa);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor pseq = d::gather_rows(seq, perm);
  Tensor pout = multi_head_self_attention(pseq, msa);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(pout.value_at(r * 4 + c) ==
            doctest::Approx(out.value_at(perm[r] * 4 + c)).epsilon(1e-6));
    }
  }

  d::ParamSet ps5;
  MsaParams bad = make_msa(ps5, "m5", 5, 5, rng);
  bad.heads = 2;  // 5 % 2 != 0
  CHECK_THROWS_AS(multi_head_self_attention(Tensor::randn({2, 5}, rng, 1), bad), d::ConfigError);
}

TEST_CASE("multi_head_self_attention matches a plain-double oracle (L=2, d=2, H=1)") {
  d::ParamSet ps;
  Rng rng(5);
  MsaParams msa = make_msa(ps, "msa", 2, 1, rng);
  set_param(ps, "msa.q.w", {real(0.5), real(0.1), real(-0.2), real(0.4)});
  set_param(ps, "msa.q.b", {0, 0});
  set_param(ps, "msa.k.w", {1, 0, real(0.3), real(0.7)});
  set_param(ps, "msa.k.b", {0, 0});
  set_param(ps, "msa.v.w", {real(0.6), real(-0.5), real(0.2), real(0.9)});
  set_param(ps, "msa.v.b", {real(0.1), real(-0.1)});
  set_param(ps, "msa.o.w", {real(1.1), real(0.2), real(-0.3), real(0.8)});
  set_param(ps, "msa.o.b", {real(0.05), real(-0.05)});

  const double x[2][2] = {{1.0, 0.0}, {0.2, -0.6}};
  const double wq[2][2] = {{0.5, 0.1}, {-0.2, 0.4}};
  const double wk[2][2] = {{1.0, 0.0}, {0.3, 0.7}};
  const double wv[2][2] = {{0.6, -0.5}, {0.2, 0.9}};
  const double wo[2][2] = {{1.1, 0.2}, {-0.3, 0.8}};
  const double bv[2] = {0.1, -0.1};
  const double bo[2] = {0.05, -0.05};

  // oracle with raw loops: q k v, scores, softmax, weighted values, output
  double q[2][2], k[2][2], v[2][2];
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      q[r][c] = x[r][0] * wq[c][0] + x[r][1] * wq[c][1];
      k[r][c] = x[r][0] * wk[c][0] + x[r][1] * wk[c][1];
      v[r][c] = x[r][0] * wv[c][0] + x[r][1] * wv[c][1] + bv[c];
    }
  }
  double expect[2][2];
  for (int r = 0; r < 2; ++r) {
    double s0 = (q[r][0] * k[0][0] + q[r][1] * k[0][1]) / std::sqrt(2.0);
    double s1 = (q[r][0] * k[1][0] + q[r][1] * k[1][1]) / std::sqrt(2.0);
    const double mx = std::max(s0, s1);
    const double e0 = std::exp(s0 - mx), e1 = std::exp(s1 - mx);
    const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
    const double h0 = a0 * v[0][0] + a1 * v[1][0];
    const double h1 = a0 * v[0][1] + a1 * v[1][1];
    expect[r][0] = h0 * wo[0][0] + h1 * wo[0][1] + bo[0];
    expect[r][1] = h0 * wo[1][0] + h1 * wo[1][1] + bo[1];
  }

  Tensor seq = Tensor::from({2, 2}, {real(1.0), real(0.0), real(0.2), real(-0.6)});
  Tensor got = multi_head_self_attention(seq, msa);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      CHECK(got.value_at(std::size_t(r * 2 + c)) ==
            doctest::Approx(expect[r][c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("encoders: shapes, zero weights, dimension errors") {
  HnpModel model(small_reg_config(), 7);
  const ep::Episode e = small_gp_episode(7);
  Tensor emb = model.encode_pairs(e.tasks[0].context, true);
  CHECK(emb.rows() == 4);
  CHECK(emb.cols() == 8);

  HnpModel zeroed(small_reg_config(), 8);
  zero_all_params(zeroed);
  Tensor zemb = zeroed.encode_pairs(e.tasks[0].context, true);
  for (std::size_t i = 0; i < zemb.numel(); ++i) CHECK(zemb.value_at(i) == 0.0);

  HnpModel cls(small_cls_config(), 9);
  ep::LabeledPoint wrong;
  wrong.x = {1, 2};  // configured d_x is 4
  wrong.label = 0;
  const std::vector<ep::LabeledPoint> pts{wrong};
  CHECK_THROWS_AS(cls.encode_features(pts), ModelError);
}

TEST_CASE("infer_z: permutation invariance, output dims, empty input") {
  HnpModel model(small_reg_config(), 11);
  Rng rng(13);
  Tensor embs = Tensor::randn({6, 8}, rng, 1);
  GaussianDiag q = model.infer_z(embs, 0);
  CHECK(q.mu.numel() == 4);
  CHECK(q.sigma.numel() == 4);

  const std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
  GaussianDiag qp = model.infer_z(d::gather_rows(embs, perm), 0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(qp.mu.value_at(i) == doctest::Approx(q.mu.value_at(i)).epsilon(1e-9));
    CHECK(qp.sigma.value_at(i) == doctest::Approx(q.sigma.value_at(i)).epsilon(1e-9));
  }

  CHECK_THROWS_AS(model.infer_z(Tensor::zeros({0, 8}), 0), ModelError);
  CHECK_THROWS_AS(model.infer_z(embs, 5), ModelError);
}

TEST_CASE("infer_z hand-stepped with a zeroed attention core") {
  HnpConfig cfg = small_reg_config();
  cfg.m_tasks = 1;
  cfg.d_model = 2;
  cfg.d_z = 2;
  cfg.d_w = 2;
  cfg.heads = 1;
  HnpModel model(cfg, 17);

  auto& ps = model.params();
  for (const auto& suffix : {"q", "k", "v", "o"}) {
    set_param(ps, std::string("theta.block.msa.") + suffix + ".w", {0, 0, 0, 0});
    set_param(ps, std::string("theta.block.msa.") + suffix + ".b", {0, 0});
  }
  const std::vector<real> eye{1, 0, 0, 1};
  set_param(ps, "theta.block.mlp.l1.w", eye);
  set_param(ps, "theta.block.mlp.l1.b", {0, 0});
  set_param(ps, "theta.block.mlp.l2.w", eye);
  set_param(ps, "theta.block.mlp.l2.b", {0, 0});
  set_param(ps, "theta.mu.l1.w", eye);
  set_param(ps, "theta.mu.l1.b", {0, 0});
  set_param(ps, "theta.mu.l2.w", eye);
  set_param(ps, "theta.mu.l2.b", {0, 0});
  set_param(ps, "theta.sigma.l1.w", eye);
  set_param(ps, "theta.sigma.l1.b", {0, 0});
  set_param(ps, "theta.sigma.l2.w", eye);
  set_param(ps, "theta.sigma.l2.b", {0, 0});
  set_param(ps, "nu", {1, -1});
  // block layer norms keep their default gain 1 / bias 0

  Tensor embs = Tensor::from({1, 2}, {real(0.5), real(0.2)});
  GaussianDiag q = model.infer_z(embs, 0);

  // with the attention core zeroed, the refined token is
  // nu + gelu(LN(nu)); the heads are identity MLPs around gelu
  const double c = 1.0 / std::sqrt(1.0 + 1e-5);  // LN of [1, -1]
  const double nu_hat0 = 1.0 + gelu_ref(c);
  const double nu_hat1 = -1.0 + gelu_ref(-c);
  const double mu0 = gelu_ref(nu_hat0);
  const double mu1 = gelu_ref(nu_hat1);
  const double sd0 = softplus_ref(gelu_ref(nu_hat0)) + 1e-4;
  const double sd1 = softplus_ref(gelu_ref(nu_hat1)) + 1e-4;

  CHECK(q.mu.value_at(0) == doctest::Approx(mu0).epsilon(1e-12));
  CHECK(q.mu.value_at(1) == doctest::Approx(mu1).epsilon(1e-12));
  CHECK(q.sigma.value_at(0) == doctest::Approx(sd0).epsilon(1e-12));
  CHECK(q.sigma.value_at(1) == doctest::Approx(sd1).epsilon(1e-12));
}

TEST_CASE("infer_w: task-permutation invariance, dims, live z-conditioning") {
  for (const auto variant :
       {ZConditioning::kTokenMerge, ZConditioning::kConcat, ZConditioning::kAdd}) {
    HnpConfig cfg = small_cls_config();
    cfg.conditioning = variant;
    HnpModel model(cfg, 19);
    Rng rng(23);
    Tensor agg = Tensor::randn({2, 8}, rng, 1);
    Tensor z = Tensor::randn({4}, rng, 1);

    GaussianDiag q = model.infer_w(agg, 0, z);
    CHECK(q.mu.numel() == 8);
    CHECK(q.sigma.numel() == 8);

    GaussianDiag qp = model.infer_w(d::gather_rows(agg, {1, 0}), 0, z);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(qp.mu.value_at(i) == doctest::Approx(q.mu.value_at(i)).epsilon(1e-9));
    }

    // conditioning is live: nudging z moves mu_w
    Tensor z2 = z.detached();
    z2.values_mut()[1] += real(1e-3);
    GaussianDiag q2 = model.infer_w(agg, 0, z2);
    real diff = 0;
    for (std::size_t i = 0; i < 8; ++i) diff += std::abs(q2.mu.value_at(i) - q.mu.value_at(i));
    CHECK(diff > 1e-8);

    CHECK_THROWS_AS(model.infer_w(Tensor::randn({3, 8}, rng, 1), 0, z), ModelError);
  }
}

TEST_CASE("decode semantics: orthonormal rows, uniform at zero, hand product") {
  // logits are plain dot products between embeddings and local rows
  Tensor emb = Tensor::from({1, 3}, {1, 0, 0});
  Tensor w = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
  Tensor logits = d::matmul_nt(emb, w);
  CHECK(logits.value_at(0) == 1.0);
  CHECK(logits.value_at(1) == 0.0);

  Tensor e2 = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor w2 = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor l2 = d::matmul_nt(e2, w2);
  CHECK(l2.value_at(0) == doctest::Approx(17.0));  // 1*5+2*6
  CHECK(l2.value_at(1) == doctest::Approx(23.0));  // 1*7+2*8
  CHECK(l2.value_at(2) == doctest::Approx(39.0));
  CHECK(l2.value_at(3) == doctest::Approx(53.0));

  // all-zero local parameters: uniform category probabilities
  HnpConfig cfg = small_cls_config();
  cfg.w_path = false;
  cfg.z_path = false;
  HnpModel model(cfg, 29);
  zero_all_params(model);
  const ep::Episode e = small_cls_episode(31);
  const auto out = model.predict(Query::of(e), 2, 2, 5);
  for (std::size_t j = 0; j < out.n_points(0); ++j) {
    const auto probs = out.avg_probs(0, j);
    for (real p : probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(out.argmax_class(0, j) == 0);  // tie breaks toward the lowest index
  }
}

TEST_CASE("regression decode: zeroed model gives mean 0 and scale softplus(0)+floor") {
  HnpConfig cfg = small_reg_config();
  cfg.w_path = false;
  cfg.z_path = false;
  HnpModel model(cfg, 37);
  zero_all_params(model);
  const ep::Episode e = small_gp_episode(37);
  const auto out = model.predict(Query::of(e), 1, 1, 9);

  const double expected_scale = std::log(2.0) + 1e-4;
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t j = 0; j < out.n_points(m); ++j) {
      CHECK(out.mixture_mean(m, j) == doctest::Approx(0.0));
      CHECK(out.tasks[m].scales[0][j] == doctest::Approx(expected_scale).epsilon(1e-12));
      CHECK(out.tasks[m].scales[0][j] > 0.0);
      // log density at the mean: -0.5 ln(2 pi) - ln s
      const double expect_ld = -0.5 * std::log(2 * M_PI) - std::log(expected_scale);
      CHECK(out.point_log_density(m, j, 0.0) == doctest::Approx(expect_ld).epsilon(1e-9));
    }
  }
}

TEST_CASE("hnp elbo: identical context and target sets zero both KL terms") {
  HnpModel reg(small_reg_config(), 41);
  ep::Episode e = small_gp_episode(43);
  for (auto& t : e.tasks) t.target = t.context;
  Rng rng(45);
  const auto parts = reg.training_loss(e, 3, 2, rng);
  CHECK(parts.kl_z == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(parts.kl_w == doctest::Approx(0.0).epsilon(1e-12));

  HnpModel cls(small_cls_config(), 47);
  ep::Episode c = small_cls_episode(49);
  for (auto& t : c.tasks) t.target = t.context;
  Rng rng2(51);
  const auto cparts = cls.training_loss(c, 3, 2, rng2);
  CHECK(cparts.kl_z == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cparts.kl_w == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("hnp elbo: finite on fresh models over 100 random episodes") {
  HnpModel model(small_reg_config(), 53);
  Rng data_rng(55), latent_rng(57);
  ep::GpConfig gp;
  gp.intervals = {{-2, 0}, {0, 2}};
  gp.n_context_per_task = 4;
  gp.n_target_per_task = 6;
  for (int i = 0; i < 100; ++i) {
    const ep::Episode e = ep::sample_gp_episode(gp, data_rng);
    const auto parts = model.training_loss(e, 2, 3, latent_rng);
    CHECK(std::isfinite(parts.total.scalar()));
  }
}

namespace {

real overfit_trend(EpisodicModel& model, const ep::Episode& e, int steps, real lr) {
  auto adam = d::AdamState::init(model.params());
  Rng rng(61);
  std::vector<real> losses;
  for (int i = 0; i < steps; ++i) {
    const auto parts = model.training_loss(e, 3, 3, rng);
    model.params().zero_grad();
    d::backward(parts.total);
    model.params().clip_grad_norm(10);
    d::adam_step(model.params(), adam, lr);
    losses.push_back(parts.total.scalar());
  }
  real head = 0, tail = 0;
  const int k = steps / 4;
  for (int i = 0; i < k; ++i) head += losses[std::size_t(i)];
  for (int i = steps - k; i < steps; ++i) tail += losses[std::size_t(i)];
  return head / k - tail / k;  // positive = improved
}

}  // namespace

TEST_CASE("fixed-episode losses fall under Adam for hnp, cnp and np") {
  const ep::Episode reg = small_gp_episode(63);
  const ep::Episode cls = small_cls_episode(65);

  HnpModel hnp_reg(small_reg_config(), 67);
  CHECK(overfit_trend(hnp_reg, reg, 200, real(1e-3)) > 0);

  HnpModel hnp_cls(small_cls_config(), 69);
  CHECK(overfit_trend(hnp_cls, cls, 200, real(1e-3)) > 0);

  CnpConfig cc;
  cc.mode = ep::Mode::kRegression;
  cc.m_tasks = 2;
  cc.d_x = 1;
  cc.d_model = 8;
  CnpModel cnp(cc, 71);
  CHECK(overfit_trend(cnp, reg, 200, real(1e-3)) > 0);

  NpConfig nc;
  nc.mode = ep::Mode::kRegression;
  nc.m_tasks = 2;
  nc.d_x = 1;
  nc.d_model = 8;
  nc.d_z = 4;
  NpModel np(nc, 73);
  CHECK(overfit_trend(np, reg, 200, real(1e-3)) > 0);
}

TEST_CASE("hnp predict: determinism, probability simplex, mixture floor") {
  HnpModel cls(small_cls_config(), 75);
  const ep::Episode c = small_cls_episode(77);
  const auto q = Query::of(c);
  const auto o1 = cls.predict(q, 1, 1, 123);
  const auto o2 = cls.predict(q, 1, 1, 123);
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t s = 0; s < o1.n_samples; ++s) {
      CHECK(o1.tasks[m].probs[s] == o2.tasks[m].probs[s]);
    }
  }

  const auto out = cls.predict(q, 3, 4, 99);
  CHECK(out.n_samples == 12);
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t j = 0; j < out.n_points(m); ++j) {
      const auto probs = out.avg_probs(m, j);
      real sum = 0;
      for (real p : probs) sum += p;
      CHECK(std::abs(sum - 1) < 1e-6);
    }
  }

  // mixture density is at least any single component over the sample count
  HnpModel reg(small_reg_config(), 79);
  const ep::Episode r = small_gp_episode(81);
  const auto ro = reg.predict(Query::of(r), 2, 3, 101);
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t j = 0; j < ro.n_points(m); ++j) {
      const real y = r.tasks[m].target[j].y;
      const real mix = ro.point_log_density(m, j, y);
      for (std::size_t s = 0; s < ro.n_samples; ++s) {
        const real comp = d::gaussian_logpdf(y, ro.tasks[m].means[s][j], ro.tasks[m].scales[s][j]);
        CHECK(mix >= comp - std::log(real(ro.n_samples)) - real(1e-9));
      }
    }
  }
}

TEST_CASE("cnp: context permutation invariance and logits shape") {
  CnpConfig cc;
  cc.mode = ep::Mode::kClassification;
  cc.m_tasks = 2;
  cc.o_way = 3;
  cc.d_x = 4;
  cc.d_model = 8;
  CnpModel cnp(cc, 83);
  ep::Episode e = small_cls_episode(85);

  const auto out = cnp.predict(Query::of(e), 1, 1, 0);
  CHECK(out.n_samples == 1);
  CHECK(out.tasks[0].probs[0].size() == out.n_points(0) * 3);

  ep::Episode shuffled = e;
  Rng rng(87);
  for (auto& t : shuffled.tasks) hnp::diff::shuffle(t.context, rng);
  const auto out2 = cnp.predict(Query::of(shuffled), 1, 1, 0);
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t i = 0; i < out.tasks[m].probs[0].size(); ++i) {
      CHECK(out2.tasks[m].probs[0][i] ==
            doctest::Approx(out.tasks[m].probs[0][i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("np: zero KL at context==target, deterministic test output") {
  NpConfig nc;
  nc.mode = ep::Mode::kRegression;
  nc.m_tasks = 2;
  nc.d_x = 1;
  nc.d_model = 8;
  nc.d_z = 4;
  NpModel np(nc, 89);

  ep::Episode e = small_gp_episode(91);
  for (auto& t : e.tasks) t.target = t.context;
  Rng rng(93);
  const auto parts = np.training_loss(e, 3, 1, rng);
  CHECK(parts.kl_z == doctest::Approx(0.0).epsilon(1e-12));

  const auto q = Query::of(e);
  const auto o1 = np.predict(q, 4, 1, 7);
  const auto o2 = np.predict(q, 4, 1, 7);
  for (std::size_t m = 0; m < 2; ++m) {
    CHECK(o1.tasks[m].means == o2.tasks[m].means);
    CHECK(o1.tasks[m].scales == o2.tasks[m].scales);
  }
}

TEST_CASE("ablation switches stay trainable and drop their loss terms") {
  const ep::Episode c = small_cls_episode(95);
  Rng rng(97);

  HnpConfig no_z = small_cls_config();
  no_z.z_path = false;
  HnpModel mz(no_z, 99);
  const auto pz = mz.training_loss(c, 3, 2, rng);
  CHECK(pz.kl_z == 0.0);
  CHECK(pz.kl_w > 0.0);
  CHECK(std::isfinite(double(overfit_trend(mz, c, 60, real(1e-3)))));

  HnpConfig no_w = small_cls_config();
  no_w.w_path = false;
  HnpModel mw(no_w, 101);
  const auto pw = mw.training_loss(c, 3, 2, rng);
  CHECK(pw.kl_w == 0.0);
  CHECK(pw.kl_z > 0.0);

  for (const auto variant : {ZConditioning::kConcat, ZConditioning::kAdd}) {
    HnpConfig vc = small_cls_config();
    vc.conditioning = variant;
    HnpModel mv(vc, 103);
    const auto pv = mv.training_loss(c, 2, 2, rng);
    CHECK(std::isfinite(pv.total.scalar()));
    mv.params().zero_grad();
    d::backward(pv.total);
    CHECK(mv.params().grad_norm() > 0);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly and preserve predictions") {
  HnpModel model(small_cls_config(), 105);
  // train a couple of steps so the values are not fresh-init artifacts
  const ep::Episode c = small_cls_episode(107);
  overfit_trend(model, c, 5, real(1e-3));

  const auto j1 = model_to_json(model);
  const std::string dump1 = j1.dump();
  auto loaded = model_from_json(j1, false);
  const std::string dump2 = model_to_json(*loaded).dump();
  CHECK(dump1 == dump2);

  const auto q = Query::of(c);
  const auto a = model.predict(q, 2, 2, 11);
  const auto b = loaded->predict(q, 2, 2, 11);
  for (std::size_t m = 0; m < 2; ++m) CHECK(a.tasks[m].probs == b.tasks[m].probs);

  const std::string path = "/tmp/hnp_test_ckpt.json";
  save_checkpoint(model, path);
  auto from_disk = load_checkpoint(path, true);
  CHECK(model_to_json(*from_disk).dump() == dump1);
  CHECK(from_disk->params().size() == model.params().size());
}
