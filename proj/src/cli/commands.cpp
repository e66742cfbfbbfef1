#include "hnp/cli/commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include "hnp/cli/config_file.hpp"
#include "hnp/episodes/feature_bank.hpp"
#include "hnp/episodes/gp.hpp"
#include "hnp/episodes/synthetic.hpp"
#include "hnp/eval/checks.hpp"
#include "hnp/eval/metrics.hpp"
#include "hnp/models/checkpoint.hpp"
#include "hnp/models/cnp.hpp"
#include "hnp/models/hnp.hpp"
#include "hnp/models/np.hpp"
#include "hnp/training/train.hpp"

namespace hnp::cli {

namespace {

namespace d = hnp::diff;
using episodes::Episode;
using episodes::Mode;
using episodes::Split;
using training::derive_seed;

bool log_debug() {
  const char* v = std::getenv("HNP_LOG");
  return v && std::string(v) == "debug";
}

void info(const std::string& msg) { std::cerr << "[hnp] " << msg << "\n"; }

struct DataSources {
  std::shared_ptr<episodes::SyntheticDomains> domains;
  std::shared_ptr<episodes::FeatureBank> bank;
};

void validate_run_config(RunFileConfig& cfg) {
  if (cfg.data == "gp") {
    if (cfg.mode != Mode::kRegression) {
      throw ConfigFileError("data = gp requires mode = regression");
    }
    if (static_cast<std::size_t>(cfg.spec.m_tasks) != cfg.gp.intervals.size()) {
      throw ConfigFileError("m_tasks (" + std::to_string(cfg.spec.m_tasks) +
                            ") must match the number of gp_intervals (" +
                            std::to_string(cfg.gp.intervals.size()) + ")");
    }
  } else {
    if (cfg.mode != Mode::kClassification) {
      throw ConfigFileError("data = " + cfg.data + " requires mode = classification");
    }
    if (cfg.data == "feature" && cfg.feature_bank.empty()) {
      throw ConfigFileError("data = feature requires a feature_bank path");
    }
  }
  if (cfg.data == "synthetic" && cfg.syn.n_domains < cfg.spec.m_tasks) {
    cfg.syn.n_domains = cfg.spec.m_tasks;
  }
}

int data_dx(const RunFileConfig& cfg, const DataSources& src) {
  if (cfg.data == "gp") return 1;
  if (cfg.data == "synthetic") return cfg.syn.proto_dim;
  return src.bank->feature_dim;
}

DataSources open_sources(const RunFileConfig& cfg) {
  DataSources src;
  if (cfg.data == "synthetic") {
    src.domains = std::make_shared<episodes::SyntheticDomains>(cfg.syn);
  } else if (cfg.data == "feature") {
    src.bank =
        std::make_shared<episodes::FeatureBank>(episodes::load_feature_bank(cfg.feature_bank));
  }
  return src;
}

training::EpisodeGenerator make_generator(const RunFileConfig& cfg, const DataSources& src,
                                          Split split) {
  if (cfg.data == "gp") {
    auto gp = cfg.gp;
    return [gp](d::Rng& rng) { return episodes::sample_gp_episode(gp, rng); };
  }
  if (cfg.data == "synthetic") {
    auto domains = src.domains;
    auto spec = cfg.spec;
    return [domains, spec, split](d::Rng& rng) {
      return domains->sample_episode(spec, split, rng);
    };
  }
  auto bank = src.bank;
  auto spec = cfg.spec;
  return [bank, spec, split](d::Rng& rng) {
    return episodes::sample_feature_episode(*bank, spec, split, rng);
  };
}

std::unique_ptr<models::EpisodicModel> build_model(const std::string& kind,
                                                   const RunFileConfig& cfg,
                                                   const DataSources& src,
                                                   std::uint64_t init_seed) {
  const int dx = data_dx(cfg, src);
  if (kind == "hnp") {
    models::HnpConfig mc;
    mc.mode = cfg.mode;
    mc.m_tasks = cfg.spec.m_tasks;
    mc.o_way = cfg.spec.o_way;
    mc.d_x = dx;
    mc.d_model = cfg.d_model;
    mc.d_z = cfg.d_z;
    mc.d_w = cfg.d_w;
    mc.heads = cfg.heads;
    mc.conditioning = cfg.conditioning;
    mc.z_path = cfg.z_path;
    mc.w_path = cfg.w_path;
    return std::make_unique<models::HnpModel>(mc, init_seed);
  }
  if (kind == "cnp") {
    models::CnpConfig mc;
    mc.mode = cfg.mode;
    mc.m_tasks = cfg.spec.m_tasks;
    mc.o_way = cfg.spec.o_way;
    mc.d_x = dx;
    mc.d_model = cfg.d_model;
    return std::make_unique<models::CnpModel>(mc, init_seed);
  }
  if (kind == "np") {
    models::NpConfig mc;
    mc.mode = cfg.mode;
    mc.m_tasks = cfg.spec.m_tasks;
    mc.o_way = cfg.spec.o_way;
    mc.d_x = dx;
    mc.d_model = cfg.d_model;
    mc.d_z = cfg.d_z;
    return std::make_unique<models::NpModel>(mc, init_seed);
  }
  throw ConfigFileError("unknown model '" + kind + "'");
}

RunFileConfig load_config_or_default(const std::string& path, Mode mode_hint) {
  if (!path.empty()) return parse_config_file(path);
  RunFileConfig cfg;
  if (mode_hint == Mode::kClassification) {
    cfg.mode = Mode::kClassification;
    cfg.data = "synthetic";
  }
  return cfg;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigFileError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigFileError("failed while writing '" + path + "'");
}

// ---- subcommands ----

int cmd_gen_data(const std::string& kind, const std::string& config_path, std::uint64_t seed,
                 int count, const std::string& split_name, const std::string& out_path) {
  RunFileConfig cfg = load_config_or_default(
      config_path, kind == "gp" ? Mode::kRegression : Mode::kClassification);
  if (kind != "gp" && kind != "synthetic") {
    throw ConfigFileError("gen-data supports --kind gp|synthetic");
  }
  cfg.data = kind;
  cfg.mode = kind == "gp" ? Mode::kRegression : Mode::kClassification;
  validate_run_config(cfg);
  const DataSources src = open_sources(cfg);
  const Split split = split_name == "test" ? Split::kMetaTest : Split::kMetaTrain;
  auto gen = make_generator(cfg, src, split);

  d::Rng rng(derive_seed(seed, 10));
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ConfigFileError("cannot write '" + out_path + "'");
  for (int i = 0; i < count; ++i) {
    const Episode e = gen(rng);
    episodes::validate_episode(e);
    out << episodes::episode_to_json(e).dump() << "\n";
  }
  info("wrote " + std::to_string(count) + " episodes to " + out_path);
  return 0;
}

int cmd_train(const std::string& model_kind, const std::string& config_path, std::uint64_t seed,
              const std::string& out_path) {
  RunFileConfig cfg = load_config_or_default(config_path, Mode::kRegression);
  validate_run_config(cfg);
  cfg.train.seed = seed;
  const DataSources src = open_sources(cfg);
  auto model = build_model(model_kind, cfg, src, derive_seed(seed, 0));
  auto gen = make_generator(cfg, src, Split::kMetaTrain);

  training::RunLog log;
  info("training " + model_kind + " for " + std::to_string(cfg.train.iterations) +
       " iterations (seed " + std::to_string(seed) + ")");
  if (log_debug()) {
    // wrap the generator so progress is visible per chunk of iterations
    int counter = 0;
    auto inner = gen;
    gen = [inner, counter](d::Rng& rng) mutable {
      if (++counter % 200 == 0) std::cerr << "[hnp] iteration " << counter << "\n";
      return inner(rng);
    };
  }
  training::meta_train(gen, *model, cfg.train, log, out_path);
  log.write_csv(out_path + ".runlog.csv");
  info("checkpoint: " + out_path + ", run log: " + out_path + ".runlog.csv");
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path, int n_episodes,
             std::uint64_t seed, const std::string& out_path) {
  auto model = models::load_checkpoint(ckpt_path, false);
  RunFileConfig cfg = load_config_or_default(config_path, model->mode());
  validate_run_config(cfg);
  if (cfg.mode != model->mode()) {
    throw ConfigFileError("config mode does not match checkpoint mode");
  }
  cfg.train.seed = seed;
  const DataSources src = open_sources(cfg);
  auto gen = make_generator(cfg, src, Split::kMetaTest);

  const int count = n_episodes > 0 ? n_episodes
                    : cfg.eval_episodes > 0 ? cfg.eval_episodes
                                            : cfg.default_eval_episodes();
  d::Rng rng(derive_seed(seed, 11));
  std::vector<Episode> eps;
  eps.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) eps.push_back(gen(rng));

  const auto rows = training::meta_test(eps, *model, cfg.train);
  nlohmann::json j;
  j["model"] = model->kind();
  j["episodes"] = count;
  j["metrics"] = eval::metric_rows_to_json(rows);
  write_text_file(out_path, j.dump(2) + "\n");
  std::string csv_path = out_path;
  if (const auto dot = csv_path.rfind(".json"); dot != std::string::npos) {
    csv_path = csv_path.substr(0, dot);
  }
  write_text_file(csv_path + ".csv", eval::metric_rows_to_csv(rows));
  for (const auto& r : rows) {
    info(r.name + ": " + std::to_string(double(r.mean)) + " +- " + std::to_string(double(r.ci95)));
  }
  return 0;
}

int cmd_predict_curve(const std::string& ckpt_path, const std::string& config_path,
                      std::uint64_t seed, double grid_min, double grid_max, int grid_n,
                      const std::string& out_path) {
  auto model = models::load_checkpoint(ckpt_path, false);
  if (model->mode() != Mode::kRegression) {
    throw ConfigFileError("predict-curve needs a regression checkpoint");
  }
  RunFileConfig cfg = load_config_or_default(config_path, Mode::kRegression);
  validate_run_config(cfg);
  if (grid_n < 2) throw ConfigFileError("grid-n must be at least 2");

  std::vector<d::real> grid(static_cast<std::size_t>(grid_n));
  for (int i = 0; i < grid_n; ++i) {
    grid[static_cast<std::size_t>(i)] = static_cast<d::real>(
        grid_min + (grid_max - grid_min) * double(i) / double(grid_n - 1));
  }
  d::Rng rng(derive_seed(seed, 12));
  const auto ys = episodes::sample_gp_values(grid, cfg.gp, rng);

  // context points are grid points, so every csv row is either a grid-only
  // or a context row for its task
  const std::size_t m_count = cfg.gp.intervals.size();
  std::vector<std::vector<std::size_t>> ctx_idx(m_count);
  models::Query q;
  q.mode = Mode::kRegression;
  q.tasks.resize(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const auto [lo, hi] = cfg.gp.intervals[m];
    std::vector<std::size_t> in_interval;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] >= lo && grid[i] < hi) in_interval.push_back(i);
    }
    if (in_interval.size() < static_cast<std::size_t>(cfg.gp.n_context_per_task)) {
      throw ConfigFileError("interval " + std::to_string(m) +
                            " holds too few grid points for the context set");
    }
    d::shuffle(in_interval, rng);
    in_interval.resize(static_cast<std::size_t>(cfg.gp.n_context_per_task));
    std::sort(in_interval.begin(), in_interval.end());
    ctx_idx[m] = in_interval;
    for (std::size_t i : in_interval) {
      episodes::LabeledPoint p;
      p.x = {grid[i]};
      p.y = ys[i];
      q.tasks[m].context.push_back(std::move(p));
    }
    q.tasks[m].target_x.reserve(grid.size());
    for (d::real x : grid) q.tasks[m].target_x.push_back({x});
  }

  const auto out = model->predict(q, cfg.train.n_z, cfg.train.n_w, derive_seed(seed, 13));

  std::ofstream csv(out_path, std::ios::binary);
  if (!csv) throw ConfigFileError("cannot write '" + out_path + "'");
  csv << "x,mean,std,is_context,task\n";
  char buf[160];
  for (std::size_t m = 0; m < m_count; ++m) {
    std::size_t next_ctx = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      int is_ctx = 0;
      if (next_ctx < ctx_idx[m].size() && ctx_idx[m][next_ctx] == i) {
        is_ctx = 1;
        ++next_ctx;
      }
      std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%d,%zu\n", double(grid[i]),
                    double(out.mixture_mean(m, i)), double(out.mixture_std(m, i)), is_ctx, m);
      csv << buf;
    }
  }
  info("wrote " + std::to_string(grid.size() * m_count) + " rows to " + out_path);
  return 0;
}

int cmd_prop_test(const std::string& ckpt_path, const std::string& check,
                  const std::string& config_path, std::uint64_t seed, int n_episodes, int trials,
                  const std::string& out_path) {
  if (check == "gradcheck") {
    const std::vector<std::string> components{"encoder", "theta",       "phi:merge",
                                              "phi:concat", "phi:add",  "decoder",
                                              "elbo"};
    nlohmann::json arr = nlohmann::json::array();
    bool all_pass = true;
    for (const auto& c : components) {
      const auto rep = eval::finite_diff_gradcheck(c);
      arr.push_back(eval::gradcheck_to_json(rep));
      all_pass = all_pass && rep.pass;
      info("gradcheck " + c + ": " + (rep.pass ? "PASS" : "FAIL") +
           " (max_rel_err=" + std::to_string(double(rep.max_rel_err)) + ")");
    }
    write_text_file(out_path, arr.dump(2) + "\n");
    return all_pass ? 0 : 2;
  }

  auto model = models::load_checkpoint(ckpt_path, false);
  RunFileConfig cfg = load_config_or_default(config_path, model->mode());
  validate_run_config(cfg);
  if (cfg.mode != model->mode()) {
    throw ConfigFileError("config mode does not match checkpoint mode");
  }
  const DataSources src = open_sources(cfg);
  auto gen = make_generator(cfg, src, Split::kMetaTest);
  const eval::ModelProbe probe(*model, cfg.train.n_z, cfg.train.n_w);

  d::Rng rng(derive_seed(seed, 14));
  std::vector<eval::CheckReport> reports;
  bool all_pass = true;
  for (int i = 0; i < n_episodes; ++i) {
    const Episode e = gen(rng);
    eval::CheckReport rep;
    if (check == "exchangeability") {
      rep = eval::exchangeability_check(probe, e, derive_seed(seed, 15, std::uint64_t(i)),
                                        trials, i);
    } else if (check == "marginalization") {
      rep = eval::marginalization_check(probe, e, derive_seed(seed, 15, std::uint64_t(i)),
                                        trials, i);
    } else {
      throw ConfigFileError("prop-test supports exchangeability|marginalization|gradcheck");
    }
    all_pass = all_pass && rep.pass;
    reports.push_back(rep);
  }
  write_text_file(out_path, eval::reports_to_json(reports).dump(2) + "\n");
  info(check + ": " + (all_pass ? "PASS" : "FAIL") + " over " + std::to_string(n_episodes) +
       " episodes");
  return all_pass ? 0 : 2;
}

}  // namespace

int run_command(int argc, const char* const* argv) {
  CLI::App app{"Heterogeneous neural processes for episodic multi-task learning"};
  app.require_subcommand(1);

  std::string config_path, out_path, ckpt_path, kind, model_kind, check, split_name = "train";
  std::uint64_t seed = 0;
  int count = 10, n_episodes = 0, trials = 20, grid_n = 200;
  double grid_min = -4.0, grid_max = 4.0;

  auto* gen = app.add_subcommand("gen-data", "Sample episodes and dump them as JSON lines");
  gen->add_option("--kind", kind, "Episode generator: gp|synthetic")->required();
  gen->add_option("--config", config_path, "Run config file");
  gen->add_option("--seed", seed, "Random seed")->required();
  gen->add_option("--count", count, "Number of episodes")->required();
  gen->add_option("--split", split_name, "Category split: train|test (classification)");
  gen->add_option("--out", out_path, "Output path (JSON lines)")->required();

  auto* train = app.add_subcommand("train", "Meta-train a model and write a checkpoint");
  train->add_option("--model", model_kind, "Model: hnp|cnp|np")->required();
  train->add_option("--config", config_path, "Run config file");
  train->add_option("--seed", seed, "Random seed")->required();
  train->add_option("--out", out_path, "Checkpoint path (run log lands beside it)")->required();

  auto* ev = app.add_subcommand("eval", "Meta-test a checkpoint and write metrics");
  ev->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  ev->add_option("--config", config_path, "Run config file");
  ev->add_option("--episodes", n_episodes, "Evaluation episode count (0 = config default)");
  ev->add_option("--seed", seed, "Random seed")->required();
  ev->add_option("--out", out_path, "Metrics JSON path (CSV lands beside it)")->required();

  auto* curve = app.add_subcommand("predict-curve",
                                   "Dump per-task predictive mean/std over an input grid");
  curve->add_option("--ckpt", ckpt_path, "Regression checkpoint")->required();
  curve->add_option("--config", config_path, "Run config file");
  curve->add_option("--seed", seed, "Random seed")->required();
  curve->add_option("--grid-min", grid_min, "Grid lower bound");
  curve->add_option("--grid-max", grid_max, "Grid upper bound");
  curve->add_option("--grid-n", grid_n, "Grid point count");
  curve->add_option("--out", out_path, "Curve CSV path")->required();

  auto* prop = app.add_subcommand("prop-test", "Run consistency/gradient property checks");
  prop->add_option("--ckpt", ckpt_path, "Checkpoint (unused by gradcheck)");
  prop->add_option("--check", check, "exchangeability|marginalization|gradcheck")->required();
  prop->add_option("--config", config_path, "Run config file");
  prop->add_option("--seed", seed, "Random seed");
  prop->add_option("--episodes", n_episodes, "Episode count for consistency checks");
  prop->add_option("--trials", trials, "Trials per episode");
  prop->add_option("--out", out_path, "Report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(kind, config_path, seed, count, split_name, out_path);
    }
    if (train->parsed()) {
      return cmd_train(model_kind, config_path, seed, out_path);
    }
    if (ev->parsed()) {
      return cmd_eval(ckpt_path, config_path, n_episodes, seed, out_path);
    }
    if (curve->parsed()) {
      return cmd_predict_curve(ckpt_path, config_path, seed, grid_min, grid_max, grid_n,
                               out_path);
    }
    if (prop->parsed()) {
      if (check != "gradcheck" && ckpt_path.empty()) {
        std::cerr << "prop-test: --ckpt is required for " << check << "\n";
        return 1;
      }
      if (n_episodes <= 0) n_episodes = 20;
      return cmd_prop_test(ckpt_path, check, config_path, seed, n_episodes, trials, out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int run_command(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_command(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hnp::cli
