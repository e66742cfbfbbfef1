#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hnp/episodes/gp.hpp"
#include "hnp/episodes/synthetic.hpp"
#include "hnp/models/checkpoint.hpp"
#include "hnp/models/hnp.hpp"
#include "hnp/training/train.hpp"

#include <nlohmann/json.hpp>

using namespace hnp::training;
namespace d = hnp::diff;
namespace ep = hnp::episodes;
namespace md = hnp::models;
using hnp::diff::real;

namespace {

md::HnpConfig tiny_reg_config() {
  md::HnpConfig cfg;
  cfg.mode = ep::Mode::kRegression;
  cfg.m_tasks = 2;
  cfg.d_x = 1;
  cfg.d_model = 16;
  cfg.d_z = 8;
  cfg.d_w = 16;
  cfg.heads = 2;
  return cfg;
}

EpisodeGenerator tiny_gp_generator() {
  ep::GpConfig gp;
  gp.intervals = {{-2, 0}, {0, 2}};
  gp.n_context_per_task = 4;
  gp.n_target_per_task = 6;
  return [gp](d::Rng& rng) { return ep::sample_gp_episode(gp, rng); };
}

}  // namespace

TEST_CASE("lr_at follows the halving schedule and never increases") {
  TrainConfig cfg;
  CHECK(lr_at(0, cfg) == doctest::Approx(1e-4));
  CHECK(lr_at(2999, cfg) == doctest::Approx(1e-4));
  CHECK(lr_at(3000, cfg) == doctest::Approx(5e-5));
  CHECK(lr_at(9000, cfg) == doctest::Approx(1.25e-5));
  real prev = lr_at(0, cfg);
  for (int i = 1; i < 20000; i += 137) {
    const real cur = lr_at(i, cfg);
    CHECK(cur <= prev + 1e-18);
    prev = cur;
  }
  CHECK_THROWS_AS(lr_at(-1, cfg), TrainError);

  TrainConfig bad;
  bad.decay_factor = real(1.5);
  CHECK_THROWS_AS(bad.validate(), TrainError);
}

TEST_CASE("run log enforces monotone iterations and writes csv") {
  RunLog log;
  log.append({0, 1, 1, 0, 0, real(1e-4), 0.001});
  log.append({1, real(0.9), real(0.9), 0, 0, real(1e-4), 0.001});
  CHECK_THROWS_AS(log.append({1, 0, 0, 0, 0, 0, 0}), TrainError);

  const std::string path = "/tmp/hnp_test_runlog.csv";
  log.write_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,loss,nll,kl_z,kl_w,lr,seconds");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("meta_train: zero iterations keeps the initial parameters") {
  md::HnpModel model(tiny_reg_config(), 3);
  const std::string before = md::model_to_json(model).dump();
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.seed = 17;
  RunLog log;
  meta_train(tiny_gp_generator(), model, cfg, log, "/tmp/hnp_test_zero_iter.json");
  CHECK(md::model_to_json(model).dump() == before);

  auto loaded = md::load_checkpoint("/tmp/hnp_test_zero_iter.json", false);
  CHECK(md::model_to_json(*loaded).dump() == before);
}

TEST_CASE("meta_train is deterministic: same seed, identical checkpoint and records") {
  TrainConfig cfg;
  cfg.iterations = 40;
  cfg.seed = 23;
  cfg.n_z = 2;
  cfg.n_w = 2;

  auto run = [&]() {
    md::HnpModel model(tiny_reg_config(), derive_seed(cfg.seed, 0));
    RunLog log;
    meta_train(tiny_gp_generator(), model, cfg, log);
    return std::pair{md::model_to_json(model).dump(), log.records()};
  };
  const auto [ckpt1, rec1] = run();
  const auto [ckpt2, rec2] = run();
  CHECK(ckpt1 == ckpt2);
  REQUIRE(rec1.size() == rec2.size());
  for (std::size_t i = 0; i < rec1.size(); ++i) {
    CHECK(rec1[i].loss == rec2[i].loss);  // wall time is the only free column
    CHECK(rec1[i].nll == rec2[i].nll);
    CHECK(rec1[i].kl_z == rec2[i].kl_z);
    CHECK(rec1[i].kl_w == rec2[i].kl_w);
    CHECK(rec1[i].lr == rec2[i].lr);
  }
}

TEST_CASE("meta_train: smoke run improves the moving-average loss") {
  md::HnpModel model(tiny_reg_config(), 31);
  TrainConfig cfg;
  cfg.iterations = 600;
  cfg.seed = 37;
  cfg.n_z = 2;
  cfg.n_w = 3;
  cfg.base_lr = real(1e-3);
  RunLog log;
  meta_train(tiny_gp_generator(), model, cfg, log);

  const auto& recs = log.records();
  real head = 0, tail = 0;
  for (int i = 0; i < 100; ++i) head += recs[std::size_t(i)].loss;
  for (int i = 500; i < 600; ++i) tail += recs[std::size_t(i)].loss;
  CHECK(tail / 100 < head / 100);
}

TEST_CASE("meta_test: chance-level accuracy for an untrained 5-way model") {
  ep::SyntheticConfig sc;
  ep::SyntheticDomains domains(sc);
  ep::EpisodeSpec spec;  // 4-task 5-way 1-shot

  md::HnpConfig mc;
  mc.mode = ep::Mode::kClassification;
  mc.m_tasks = 4;
  mc.o_way = 5;
  mc.d_x = sc.proto_dim;
  mc.d_model = 16;
  mc.d_z = 8;
  mc.d_w = 16;
  mc.heads = 2;
  md::HnpModel model(mc, 41);

  TrainConfig cfg;
  cfg.seed = 43;
  cfg.n_z = 2;
  cfg.n_w = 2;

  d::Rng rng(47);
  std::vector<ep::Episode> eps;
  for (int i = 0; i < 600; ++i) {
    eps.push_back(domains.sample_episode(spec, ep::Split::kMetaTest, rng));
  }
  const auto rows = meta_test(eps, model, cfg);
  REQUIRE(rows.size() == 5);  // 4 domains + average
  CHECK(rows.back().name == "average");
  CHECK(rows.back().mean == doctest::Approx(0.20).epsilon(0.20));  // 20% +- 4 points
  CHECK(std::abs(double(rows.back().mean) - 0.20) < 0.04);

  // repeated scoring is identical
  const auto rows2 = meta_test(eps, model, cfg);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].mean == rows2[i].mean);
    CHECK(rows[i].ci95 == rows2[i].ci95);
  }

  // single episode in, one row per domain plus the average
  const auto one = meta_test(std::span(eps.data(), 1), model, cfg);
  CHECK(one.size() == 5);
}

TEST_CASE("meta_test never reads target labels outside scoring") {
  // the prediction input is structurally label-free: scrambling target
  // labels changes nothing about the queries or the predictions
  ep::SyntheticDomains domains{ep::SyntheticConfig{}};
  ep::EpisodeSpec spec;
  d::Rng rng(53);
  ep::Episode a = domains.sample_episode(spec, ep::Split::kMetaTest, rng);
  ep::Episode b = a;
  for (auto& t : b.tasks) {
    for (auto& p : t.target) p.label = (p.label + 1) % 5;
  }

  md::HnpConfig mc;
  mc.mode = ep::Mode::kClassification;
  mc.m_tasks = 4;
  mc.o_way = 5;
  mc.d_x = 16;
  mc.d_model = 16;
  mc.d_z = 8;
  mc.d_w = 16;
  mc.heads = 2;
  md::HnpModel model(mc, 59);

  const auto qa = md::Query::of(a);
  const auto qb = md::Query::of(b);
  for (std::size_t m = 0; m < qa.tasks.size(); ++m) {
    CHECK(qa.tasks[m].target_x == qb.tasks[m].target_x);
  }
  const auto oa = model.predict(qa, 2, 2, 61);
  const auto ob = model.predict(qb, 2, 2, 61);
  for (std::size_t m = 0; m < oa.tasks.size(); ++m) {
    CHECK(oa.tasks[m].probs == ob.tasks[m].probs);
  }
}

TEST_CASE("meta_train aborts with an emergency checkpoint on non-finite loss") {
  md::HnpModel model(tiny_reg_config(), 67);
  // poison a parameter so the first forward pass blows up
  d::Tensor t = *model.params().find("enc.l1.w");
  t.values_mut()[0] = std::numeric_limits<real>::quiet_NaN();

  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.seed = 71;
  RunLog log;
  const std::string ckpt = "/tmp/hnp_test_emergency.json";
  std::remove((ckpt + ".emergency").c_str());
  CHECK_THROWS_AS(meta_train(tiny_gp_generator(), model, cfg, log, ckpt), TrainError);
  std::ifstream probe(ckpt + ".emergency");
  CHECK(probe.good());
}
