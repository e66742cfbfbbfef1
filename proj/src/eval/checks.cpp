#include "hnp/eval/checks.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

#include "hnp/models/checkpoint.hpp"
#include "hnp/models/hnp.hpp"

namespace hnp::eval {

namespace d = hnp::diff;
using episodes::Episode;
using episodes::Mode;

nlohmann::json report_to_json(const CheckReport& r) {
  nlohmann::json j;
  j["check"] = r.check;
  j["episode_id"] = r.episode_id;
  j["trials"] = r.trials;
  j["max_rel_err"] = r.max_rel_err;
  j["pass"] = r.pass;
  return j;
}

nlohmann::json reports_to_json(std::span<const CheckReport> rs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rs) arr.push_back(report_to_json(r));
  return arr;
}

ModelProbe::ModelProbe(const models::EpisodicModel& m, int n_z, int n_w)
    : frozen_(models::model_from_json(models::model_to_json(m), false)), n_z_(n_z), n_w_(n_w) {}

std::vector<std::vector<real>> ModelProbe::point_log_densities(const Episode& e,
                                                               std::uint64_t seed) const {
  const auto out = frozen_->predict(models::Query::of(e), n_z_, n_w_, seed);
  std::vector<std::vector<real>> lds(e.tasks.size());
  for (std::size_t m = 0; m < e.tasks.size(); ++m) {
    const auto& task = e.tasks[m];
    lds[m].resize(task.target.size());
    for (std::size_t j = 0; j < task.target.size(); ++j) {
      lds[m][j] = e.mode == Mode::kRegression
                      ? out.point_log_density(m, j, task.target[j].y)
                      : out.point_log_density_class(m, j, task.target[j].label);
    }
  }
  return lds;
}

std::vector<real> ModelProbe::joint_log_densities(const Episode& e, std::uint64_t seed) const {
  const auto out = frozen_->predict(models::Query::of(e), n_z_, n_w_, seed);
  std::vector<real> joints(e.tasks.size());
  for (std::size_t m = 0; m < e.tasks.size(); ++m) {
    const auto& task = e.tasks[m];
    if (e.mode == Mode::kRegression) {
      std::vector<real> ys(task.target.size());
      for (std::size_t j = 0; j < ys.size(); ++j) ys[j] = task.target[j].y;
      joints[m] = out.joint_log_density(m, ys);
    } else {
      std::vector<int> labels(task.target.size());
      for (std::size_t j = 0; j < labels.size(); ++j) labels[j] = task.target[j].label;
      joints[m] = out.joint_log_density_class(m, labels);
    }
  }
  return joints;
}

namespace {

real rel_diff(real a, real b) {
  return std::abs(a - b) / std::max(real(1), std::abs(a));
}

}  // namespace

CheckReport exchangeability_check(const DensityProbe& probe, const Episode& e,
                                  std::uint64_t seed, int trials, int episode_id,
                                  PermutationStyle style) {
  CheckReport rep;
  rep.check = "exchangeability";
  rep.episode_id = episode_id;
  rep.trials = trials;

  const auto base = probe.joint_log_densities(e, seed);
  real base_total = 0;
  for (real v : base) base_total += v;

  d::Rng perm_rng(d::Rng::split_mix(seed ^ 0x45584348ull));
  real max_err = 0;
  for (int t = 0; t < trials; ++t) {
    Episode permuted = e;
    for (auto& task : permuted.tasks) {
      std::vector<std::size_t> order(task.target.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      d::shuffle(order, perm_rng);
      std::vector<episodes::LabeledPoint> shuffled(task.target.size());
      for (std::size_t i = 0; i < order.size(); ++i) {
        if (style == PermutationStyle::kPairs) {
          shuffled[i] = task.target[order[i]];
        } else {
          // negative control: permute labels while inputs stay put
          shuffled[i] = task.target[i];
          shuffled[i].y = task.target[order[i]].y;
          shuffled[i].label = task.target[order[i]].label;
        }
      }
      task.target = std::move(shuffled);
    }
    const auto perm = probe.joint_log_densities(permuted, seed);
    real perm_total = 0;
    for (real v : perm) perm_total += v;
    max_err = std::max(max_err, rel_diff(base_total, perm_total));
  }
  rep.max_rel_err = max_err;
  rep.pass = max_err < real(1e-6);
  return rep;
}

CheckReport marginalization_check(const DensityProbe& probe, const Episode& e,
                                  std::uint64_t seed, int trials, int episode_id) {
  CheckReport rep;
  rep.check = "marginalization";
  rep.episode_id = episode_id;
  rep.trials = trials;

  const auto base = probe.point_log_densities(e, seed);

  d::Rng del_rng(d::Rng::split_mix(seed ^ 0x4d415247ull));
  real max_err = 0;
  for (int t = 0; t < trials; ++t) {
    Episode reduced = e;
    std::vector<std::vector<std::size_t>> kept(e.tasks.size());
    for (std::size_t m = 0; m < e.tasks.size(); ++m) {
      const auto& target = e.tasks[m].target;
      std::vector<std::size_t> keep;
      for (std::size_t j = 0; j < target.size(); ++j) {
        if (del_rng.uniform() < real(0.5)) keep.push_back(j);
      }
      if (keep.empty()) keep.push_back(static_cast<std::size_t>(del_rng.below(target.size())));
      std::vector<episodes::LabeledPoint> pts;
      pts.reserve(keep.size());
      for (std::size_t j : keep) pts.push_back(target[j]);
      reduced.tasks[m].target = std::move(pts);
      kept[m] = std::move(keep);
    }
    const auto after = probe.point_log_densities(reduced, seed);
    for (std::size_t m = 0; m < kept.size(); ++m) {
      for (std::size_t r = 0; r < kept[m].size(); ++r) {
        max_err = std::max(max_err, rel_diff(base[m][kept[m][r]], after[m][r]));
      }
    }
  }
  rep.max_rel_err = max_err;
  rep.pass = max_err < real(1e-9);
  return rep;
}

// ---- gradient checks ----

nlohmann::json gradcheck_to_json(const GradCheckReport& r) {
  nlohmann::json j;
  j["check"] = "gradcheck";
  j["component"] = r.component;
  j["max_rel_err"] = r.max_rel_err;
  j["pass"] = r.pass;
  j["n_checked"] = r.n_checked;
  return j;
}

GradCheckReport finite_diff_gradcheck_fn(const std::string& name, diff::ParamSet& params,
                                         std::span<const std::string> check_prefixes,
                                         const std::function<diff::Tensor()>& loss_fn,
                                         real tolerance, real step) {
  GradCheckReport rep;
  rep.component = name;

  const auto selected = [&](const std::string& pname) {
    if (check_prefixes.empty()) return true;
    for (const auto& p : check_prefixes) {
      if (pname.rfind(p, 0) == 0) return true;
    }
    return false;
  };

  params.zero_grad();
  d::backward(loss_fn());
  std::vector<std::vector<real>> analytic(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [pname, t] = params.at(k);
    if (!selected(pname)) continue;
    analytic[k] = t.has_grad() ? std::vector<real>(t.grad().begin(), t.grad().end())
                               : std::vector<real>(t.numel(), real(0));
  }

  real max_err = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [pname, tc] = params.at(k);
    if (!selected(pname)) continue;
    diff::Tensor t = tc;
    auto w = t.values_mut();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const real keep = w[i];
      w[i] = keep + step;
      const real up = loss_fn().scalar();
      w[i] = keep - step;
      const real down = loss_fn().scalar();
      w[i] = keep;
      const real fd = (up - down) / (2 * step);
      const real ad = analytic[k][i];
      const real err = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), real(1e-2)});
      max_err = std::max(max_err, err);
      ++rep.n_checked;
    }
  }
  rep.max_rel_err = max_err;
  rep.pass = max_err < tolerance;
  return rep;
}

namespace {

models::HnpConfig toy_config(Mode mode, models::ZConditioning variant) {
  models::HnpConfig cfg;
  cfg.mode = mode;
  cfg.m_tasks = 2;
  cfg.o_way = 3;
  cfg.d_x = mode == Mode::kRegression ? 1 : 4;
  cfg.d_model = 8;
  cfg.d_z = 4;
  cfg.d_w = 8;
  cfg.heads = 2;
  cfg.conditioning = variant;
  return cfg;
}

Episode toy_episode(Mode mode, std::uint64_t seed) {
  d::Rng rng(seed);
  Episode e;
  e.mode = mode;
  const int n_ctx = 3, n_tgt = 3;
  for (int m = 0; m < 2; ++m) {
    episodes::TaskData task;
    task.task_index = m;
    for (int i = 0; i < n_ctx + n_tgt; ++i) {
      episodes::LabeledPoint p;
      if (mode == Mode::kRegression) {
        p.x = {rng.uniform(-2, 2)};
        p.y = rng.normal();
      } else {
        p.x = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        p.label = i % 3;
      }
      (i < n_ctx ? task.context : task.target).push_back(std::move(p));
    }
    e.tasks.push_back(std::move(task));
  }
  if (mode == Mode::kClassification) e.label_map = {10, 11, 12};
  return e;
}

}  // namespace

GradCheckReport finite_diff_gradcheck(const std::string& component, real tolerance) {
  using models::HnpModel;
  using models::ZConditioning;

  std::string base = component;
  ZConditioning variant = ZConditioning::kTokenMerge;
  if (const auto pos = component.find(':'); pos != std::string::npos) {
    base = component.substr(0, pos);
    variant = models::conditioning_from_name(component.substr(pos + 1));
  }

  if (base == "encoder") {
    HnpModel model(toy_config(Mode::kRegression, variant), 11);
    const Episode e = toy_episode(Mode::kRegression, 21);
    const std::vector<std::string> prefixes{"enc"};
    auto loss = [&]() {
      return d::sum_all(d::square(model.encode_pairs(e.tasks[0].context, true)));
    };
    return finite_diff_gradcheck_fn(component, model.params(), prefixes, loss, tolerance);
  }
  if (base == "theta") {
    HnpModel model(toy_config(Mode::kRegression, variant), 12);
    const Episode e = toy_episode(Mode::kRegression, 22);
    const std::vector<std::string> prefixes{"theta", "nu", "enc"};
    auto loss = [&]() {
      auto q = model.infer_z(model.encode_pairs(e.tasks[0].context, true), 0);
      return d::add(d::sum_all(d::square(q.mu)), d::sum_all(d::square(q.sigma)));
    };
    return finite_diff_gradcheck_fn(component, model.params(), prefixes, loss, tolerance);
  }
  if (base == "phi") {
    HnpModel model(toy_config(Mode::kClassification, variant), 13);
    const Episode e = toy_episode(Mode::kClassification, 23);
    const std::vector<std::string> prefixes{"phi", "omega", "enc"};
    const diff::Tensor z = diff::Tensor::from({4}, {real(0.3), real(-0.2), real(0.1), real(0.4)});
    auto loss = [&]() {
      std::vector<diff::Tensor> rows;
      for (const auto& task : e.tasks) {
        rows.push_back(d::mean_rows(model.encode_features(task.context)));
      }
      auto q = model.infer_w(d::concat_rows(rows), 1, z);
      return d::add(d::sum_all(d::square(q.mu)), d::sum_all(d::square(q.sigma)));
    };
    return finite_diff_gradcheck_fn(component, model.params(), prefixes, loss, tolerance);
  }
  if (base == "decoder") {
    // free local-parameter rows plus the encoder feed the decode dot product
    diff::ParamSet params;
    d::Rng rng(14);
    diff::Tensor w_rows = params.add("w", diff::Tensor::randn({2, 8}, rng, real(0.5), true));
    HnpModel model(toy_config(Mode::kRegression, variant), 15);
    for (const auto& [pname, t] : model.params()) {
      if (pname.rfind("enc", 0) == 0) params.add(pname, t);
    }
    const Episode e = toy_episode(Mode::kRegression, 24);
    std::vector<real> ys;
    for (const auto& p : e.tasks[0].target) ys.push_back(p.y);
    const diff::Tensor y = diff::Tensor::from({ys.size()}, std::move(ys));
    auto loss = [&]() {
      diff::Tensor emb = model.encode_pairs(e.tasks[0].target, false);
      diff::Tensor mean_col = d::matmul_nt(emb, d::narrow_rows(w_rows, 0, 1));
      diff::Tensor scale_col =
          d::add_scalar(d::softplus(d::matmul_nt(emb, d::narrow_rows(w_rows, 1, 1))),
                        d::kSigmaFloor);
      return d::gaussian_nll(mean_col, scale_col, y);
    };
    return finite_diff_gradcheck_fn(component, params, {}, loss, tolerance);
  }
  if (base == "elbo") {
    HnpModel model(toy_config(Mode::kClassification, variant), 16);
    const Episode e = toy_episode(Mode::kClassification, 26);
    auto loss = [&]() {
      d::Rng rng(31);
      return model.training_loss(e, 2, 2, rng).total;
    };
    return finite_diff_gradcheck_fn(component, model.params(), {}, loss, tolerance);
  }
  throw EvalError("finite_diff_gradcheck: unknown component '" + component + "'");
}

}  // namespace hnp::eval
