#include "hnp/episodes/episode.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

namespace hnp::episodes {

std::string mode_name(Mode m) {
  return m == Mode::kRegression ? "regression" : "classification";
}

Mode mode_from_name(const std::string& s) {
  if (s == "regression") return Mode::kRegression;
  if (s == "classification") return Mode::kClassification;
  throw DataError("unknown mode '" + s + "'");
}

void validate_episode(const Episode& e) {
  const std::size_t m = e.tasks.size();
  if (m == 0) throw DataError("episode has no tasks");

  std::vector<bool> seen(m, false);
  for (const auto& t : e.tasks) {
    if (t.task_index < 0 || static_cast<std::size_t>(t.task_index) >= m ||
        seen[static_cast<std::size_t>(t.task_index)]) {
      throw DataError("task indices must cover 0.." + std::to_string(m - 1) +
                      " exactly once (got " + std::to_string(t.task_index) + ")");
    }
    seen[static_cast<std::size_t>(t.task_index)] = true;
    if (t.context.empty()) throw DataError("task " + std::to_string(t.task_index) +
                                           " has an empty context set");
  }

  if (e.mode == Mode::kClassification) {
    const std::size_t o_way = e.label_map.size();
    if (o_way == 0) throw DataError("classification episode without a label_map");
    for (const auto& t : e.tasks) {
      std::vector<int> per_cat(o_way, 0);
      for (const auto& p : t.context) {
        if (p.label < 0 || static_cast<std::size_t>(p.label) >= o_way) {
          throw DataError("context label " + std::to_string(p.label) + " outside 0.." +
                          std::to_string(o_way - 1));
        }
        per_cat[static_cast<std::size_t>(p.label)]++;
      }
      const int k = per_cat[0];
      for (std::size_t o = 0; o < o_way; ++o) {
        if (per_cat[o] != k) {
          throw DataError("task " + std::to_string(t.task_index) + " context holds " +
                          std::to_string(per_cat[o]) + " points of category " +
                          std::to_string(o) + ", expected " + std::to_string(k));
        }
      }
      for (const auto& p : t.target) {
        if (p.label < 0 || static_cast<std::size_t>(p.label) >= o_way) {
          throw DataError("target label " + std::to_string(p.label) + " outside 0.." +
                          std::to_string(o_way - 1));
        }
      }
    }
  } else {
    if (!e.label_map.empty()) throw DataError("regression episode carries a label_map");
  }

  // all tasks share one feature dimensionality
  const std::size_t dx = e.tasks.front().context.front().x.size();
  for (const auto& t : e.tasks) {
    for (const auto* set : {&t.context, &t.target}) {
      for (const auto& p : *set) {
        if (p.x.size() != dx) {
          throw DataError("feature dimension varies inside the episode (" +
                          std::to_string(p.x.size()) + " vs " + std::to_string(dx) + ")");
        }
      }
    }
  }
}

nlohmann::json episode_to_json(const Episode& e) {
  nlohmann::json j;
  j["mode"] = mode_name(e.mode);
  j["label_map"] = e.label_map;
  auto points_json = [&](const std::vector<LabeledPoint>& ps) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : ps) {
      nlohmann::json pj;
      pj["x"] = p.x;
      if (e.mode == Mode::kRegression) {
        pj["y"] = p.y;
      } else {
        pj["y"] = p.label;
      }
      arr.push_back(std::move(pj));
    }
    return arr;
  };
  j["tasks"] = nlohmann::json::array();
  for (const auto& t : e.tasks) {
    nlohmann::json tj;
    tj["task_index"] = t.task_index;
    tj["context"] = points_json(t.context);
    tj["target"] = points_json(t.target);
    j["tasks"].push_back(std::move(tj));
  }
  return j;
}

Episode episode_from_json(const nlohmann::json& j) {
  Episode e;
  e.mode = mode_from_name(j.at("mode").get<std::string>());
  e.label_map = j.at("label_map").get<std::vector<int>>();
  auto points_from = [&](const nlohmann::json& arr) {
    std::vector<LabeledPoint> ps;
    ps.reserve(arr.size());
    for (const auto& pj : arr) {
      LabeledPoint p;
      p.x = pj.at("x").get<std::vector<real>>();
      if (e.mode == Mode::kRegression) {
        p.y = pj.at("y").get<real>();
      } else {
        p.label = pj.at("y").get<int>();
      }
      ps.push_back(std::move(p));
    }
    return ps;
  };
  for (const auto& tj : j.at("tasks")) {
    TaskData t;
    t.task_index = tj.at("task_index").get<int>();
    t.context = points_from(tj.at("context"));
    t.target = points_from(tj.at("target"));
    e.tasks.push_back(std::move(t));
  }
  return e;
}

}  // namespace hnp::episodes
