#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hnp/diff/rng.hpp"

namespace hnp::episodes {

using hnp::diff::real;
using hnp::diff::Rng;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { kRegression, kClassification };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);

/// One observation: feature vector plus either a real target (regression)
/// or an episode-local category index (classification).
struct LabeledPoint {
  std::vector<real> x;
  real y = 0;
  int label = -1;
};

struct TaskData {
  int task_index = 0;
  std::vector<LabeledPoint> context;
  std::vector<LabeledPoint> target;
};

struct Episode {
  Mode mode = Mode::kRegression;
  std::vector<TaskData> tasks;
  /// Classification only: label_map[o] is the raw category id that this
  /// episode maps to local label o.
  std::vector<int> label_map;

  std::size_t n_tasks() const { return tasks.size(); }
  std::size_t n_way() const { return label_map.size(); }
};

/// M tasks, O categories, K context shots per category, N_T target points
/// per task (classification: divisible by O).
struct EpisodeSpec {
  int m_tasks = 4;
  int o_way = 5;
  int k_shot = 1;
  int n_target = 15;
};

enum class Split { kMetaTrain, kMetaTest };

/// Enforces the structural invariants: task indices 0..M-1 exactly once,
/// one shared target space, and for classification exactly K context points
/// per category per task. Throws DataError on violation.
void validate_episode(const Episode& e);

nlohmann::json episode_to_json(const Episode& e);
Episode episode_from_json(const nlohmann::json& j);

}  // namespace hnp::episodes
