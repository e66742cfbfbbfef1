#include "hnp/training/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hnp/diff/optim.hpp"
#include "hnp/models/checkpoint.hpp"

namespace hnp::training {

void TrainConfig::validate() const {
  if (iterations < 0 || decay_every <= 0 || n_z <= 0 || n_w <= 0 || eval_every < 0) {
    throw TrainError("TrainConfig: counts must be positive");
  }
  if (!(base_lr > 0) || !(grad_clip > 0)) {
    throw TrainError("TrainConfig: base_lr and grad_clip must be positive");
  }
  if (!(decay_factor > 0) || decay_factor > 1) {
    throw TrainError("TrainConfig: decay_factor must lie in (0, 1]");
  }
}

real lr_at(int iter, const TrainConfig& cfg) {
  if (iter < 0) throw TrainError("lr_at: negative iteration");
  return cfg.base_lr * std::pow(cfg.decay_factor, real(iter / cfg.decay_every));
}

void RunLog::append(const RunRecord& r) {
  if (!records_.empty() && r.iter <= records_.back().iter) {
    throw TrainError("RunLog: iteration indices must be strictly increasing");
  }
  records_.push_back(r);
}

void RunLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrainError("cannot write run log '" + path + "'");
  out << csv_header() << "\n";
  char buf[256];
  for (const auto& r : records_) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.iter,
                  double(r.loss), double(r.nll), double(r.kl_z), double(r.kl_w), double(r.lr),
                  r.seconds);
    out << buf;
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return diff::Rng::split_mix(base ^ (stream * 0x9e3779b97f4a7c15ull) ^
                              diff::Rng::split_mix(index));
}

void meta_train(const EpisodeGenerator& gen, models::EpisodicModel& model,
                const TrainConfig& cfg, RunLog& log, const std::string& ckpt_path) {
  cfg.validate();
  diff::Rng episode_rng(derive_seed(cfg.seed, 1));
  diff::Rng latent_rng(derive_seed(cfg.seed, 2));
  auto adam = diff::AdamState::init(model.params());

  const auto describe_tail = [&log]() {
    std::string s;
    const auto& recs = log.records();
    const std::size_t from = recs.size() > 10 ? recs.size() - 10 : 0;
    for (std::size_t i = from; i < recs.size(); ++i) {
      s += "\n  iter " + std::to_string(recs[i].iter) + ": loss=" +
           std::to_string(double(recs[i].loss)) + " nll=" + std::to_string(double(recs[i].nll)) +
           " kl_z=" + std::to_string(double(recs[i].kl_z)) +
           " kl_w=" + std::to_string(double(recs[i].kl_w));
    }
    return s;
  };

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    episodes::Episode ep = gen(episode_rng);
    models::LossParts parts;
    const auto emergency = [&](const char* what) -> TrainError {
      if (!ckpt_path.empty()) models::save_checkpoint(model, ckpt_path + ".emergency");
      return TrainError(std::string("meta_train aborted at iteration ") + std::to_string(iter) +
                        ": " + what + describe_tail());
    };
    try {
      parts = model.training_loss(ep, cfg.n_z, cfg.n_w, latent_rng);
    } catch (const models::ModelError& err) {
      throw emergency(err.what());
    } catch (const diff::ConfigError& err) {
      // a non-finite forward value tripping a distribution invariant
      throw emergency(err.what());
    }
    model.params().zero_grad();
    diff::backward(parts.total);
    model.params().clip_grad_norm(cfg.grad_clip);
    diff::adam_step(model.params(), adam, lr_at(iter, cfg));

    RunRecord rec;
    rec.iter = iter;
    rec.loss = parts.total.scalar();
    rec.nll = parts.nll;
    rec.kl_z = parts.kl_z;
    rec.kl_w = parts.kl_w;
    rec.lr = lr_at(iter, cfg);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.append(rec);

    if (!ckpt_path.empty() && cfg.eval_every > 0 && (iter + 1) % cfg.eval_every == 0) {
      models::save_checkpoint(model, ckpt_path);
    }
  }
  if (!ckpt_path.empty()) models::save_checkpoint(model, ckpt_path);
}

std::vector<eval::MetricRow> meta_test(std::span<const episodes::Episode> eps,
                                       const models::EpisodicModel& model,
                                       const TrainConfig& cfg) {
  if (eps.empty()) throw TrainError("meta_test: no episodes");
  for (const auto& e : eps) {
    if (e.mode != model.mode()) throw TrainError("meta_test: episode/model mode mismatch");
  }
  // frozen copy: no grad recording during scoring
  auto frozen = models::model_from_json(models::model_to_json(model), false);

  if (model.mode() == episodes::Mode::kRegression) {
    std::vector<models::PredictiveOutput> outs;
    outs.reserve(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
      outs.push_back(frozen->predict(models::Query::of(eps[i]), cfg.n_z, cfg.n_w,
                                     derive_seed(cfg.seed, 3, i)));
    }
    return {eval::avg_nll(outs, eps)};
  }

  std::vector<int> predictions, truths, domains;
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto& ep = eps[i];
    starts.push_back(predictions.size());
    const auto out = frozen->predict(models::Query::of(ep), cfg.n_z, cfg.n_w,
                                     derive_seed(cfg.seed, 3, i));
    for (std::size_t m = 0; m < ep.tasks.size(); ++m) {
      const auto& task = ep.tasks[m];
      for (std::size_t j = 0; j < task.target.size(); ++j) {
        predictions.push_back(out.argmax_class(m, j));
        truths.push_back(task.target[j].label);
        domains.push_back(task.task_index);
      }
    }
  }
  return eval::accuracy_with_ci(predictions, truths, starts, domains);
}

}  // namespace hnp::training
