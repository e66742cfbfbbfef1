#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hnp/episodes/episode.hpp"
#include "hnp/models/common.hpp"

namespace hnp::eval {

using diff::real;

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MetricRow {
  std::string name;
  real mean = 0;
  real ci95 = 0;  // 1.96 * stderr half-width, >= 0
  std::size_t n = 0;
};

nlohmann::json metric_rows_to_json(std::span<const MetricRow> rows);
std::string metric_rows_to_csv(std::span<const MetricRow> rows);

/// Mean over all target points of -log predictive density; the confidence
/// interval is over per-episode means.
MetricRow avg_nll(std::span<const models::PredictiveOutput> outputs,
                  std::span<const episodes::Episode> episodes);

/// predictions/truths/domains are flat and aligned across episodes;
/// episode_starts[e] is the first flat index of episode e. Returns one row
/// per domain plus an "average" row whose CI is over per-episode accuracies.
std::vector<MetricRow> accuracy_with_ci(std::span<const int> predictions,
                                        std::span<const int> truths,
                                        std::span<const std::size_t> episode_starts,
                                        std::span<const int> domains);

}  // namespace hnp::eval
