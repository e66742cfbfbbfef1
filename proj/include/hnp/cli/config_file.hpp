#pragma once

#include <string>

#include "hnp/episodes/feature_bank.hpp"
#include "hnp/episodes/gp.hpp"
#include "hnp/episodes/synthetic.hpp"
#include "hnp/models/hnp.hpp"
#include "hnp/training/train.hpp"

namespace hnp::cli {

struct ConfigFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a run needs, parsed from plain `key = value` lines. Unknown
/// keys are rejected; every parse error names its line and key. `#` starts
/// a comment.
struct RunFileConfig {
  episodes::Mode mode = episodes::Mode::kRegression;
  std::string data = "gp";  // gp | synthetic | feature
  std::string feature_bank;

  episodes::EpisodeSpec spec;      // m_tasks, o_way, k_shot, n_target
  episodes::GpConfig gp;           // gp_* keys
  episodes::SyntheticConfig syn;   // syn_* keys

  int d_model = 64;
  int d_z = 32;
  int d_w = 64;
  int heads = 4;
  bool z_path = true;
  bool w_path = true;
  models::ZConditioning conditioning = models::ZConditioning::kTokenMerge;

  training::TrainConfig train;
  int eval_episodes = 0;  // 0 -> mode default

  int default_eval_episodes() const {
    return mode == episodes::Mode::kRegression ? 1000 : 600;
  }
};

RunFileConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunFileConfig parse_config_file(const std::string& path);

}  // namespace hnp::cli
