#include "hnp/eval/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

namespace hnp::eval {

namespace {

/// mean and 1.96 * stderr over samples (sample standard deviation, n - 1).
std::pair<real, real> mean_ci(std::span<const real> xs) {
  const std::size_t n = xs.size();
  real mean = 0;
  for (real x : xs) mean += x;
  mean /= real(n);
  if (n < 2) return {mean, real(0)};
  real sq = 0;
  for (real x : xs) sq += (x - mean) * (x - mean);
  const real sd = std::sqrt(sq / real(n - 1));
  return {mean, real(1.96) * sd / std::sqrt(real(n))};
}

}  // namespace

nlohmann::json metric_rows_to_json(std::span<const MetricRow> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["name"] = r.name;
    j["mean"] = r.mean;
    j["ci95"] = r.ci95;
    j["n"] = r.n;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::string metric_rows_to_csv(std::span<const MetricRow> rows) {
  std::ostringstream os;
  os << "name,mean,ci95,n\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.name << "," << r.mean << "," << r.ci95 << "," << r.n << "\n";
  }
  return os.str();
}

MetricRow avg_nll(std::span<const models::PredictiveOutput> outputs,
                  std::span<const episodes::Episode> episodes) {
  if (outputs.size() != episodes.size()) {
    throw EvalError("avg_nll: " + std::to_string(outputs.size()) + " outputs for " +
                    std::to_string(episodes.size()) + " episodes");
  }
  if (outputs.empty()) throw EvalError("avg_nll: no episodes");

  std::vector<real> episode_means;
  episode_means.reserve(outputs.size());
  real total = 0;
  std::size_t total_points = 0;
  for (std::size_t e = 0; e < outputs.size(); ++e) {
    const auto& out = outputs[e];
    const auto& ep = episodes[e];
    if (out.mode != episodes::Mode::kRegression || ep.mode != episodes::Mode::kRegression) {
      throw EvalError("avg_nll: regression outputs required");
    }
    real ep_sum = 0;
    std::size_t ep_points = 0;
    for (std::size_t m = 0; m < ep.tasks.size(); ++m) {
      const auto& task = ep.tasks[m];
      if (out.n_points(m) != task.target.size()) {
        throw EvalError("avg_nll: prediction count does not match target count");
      }
      if (out.tasks[m].means.empty()) {
        throw EvalError("avg_nll: output has no density evaluator for task " + std::to_string(m));
      }
      for (std::size_t j = 0; j < task.target.size(); ++j) {
        ep_sum += -out.point_log_density(m, j, task.target[j].y);
        ++ep_points;
      }
    }
    episode_means.push_back(ep_sum / real(ep_points));
    total += ep_sum;
    total_points += ep_points;
  }
  auto [unused_mean, ci] = mean_ci(episode_means);
  MetricRow row;
  row.name = "avg_nll";
  row.mean = total / real(total_points);
  row.ci95 = ci;
  row.n = episode_means.size();
  return row;
}

std::vector<MetricRow> accuracy_with_ci(std::span<const int> predictions,
                                        std::span<const int> truths,
                                        std::span<const std::size_t> episode_starts,
                                        std::span<const int> domains) {
  if (predictions.size() != truths.size() || predictions.size() != domains.size()) {
    throw EvalError("accuracy_with_ci: predictions/truths/domains lengths disagree (" +
                    std::to_string(predictions.size()) + "/" + std::to_string(truths.size()) +
                    "/" + std::to_string(domains.size()) + ")");
  }
  if (predictions.empty() || episode_starts.empty()) {
    throw EvalError("accuracy_with_ci: nothing to score");
  }

  int max_domain = 0;
  for (int d : domains) max_domain = std::max(max_domain, d);
  const std::size_t n_domains = static_cast<std::size_t>(max_domain) + 1;
  const std::size_t n_eps = episode_starts.size();

  // per-episode accuracy, overall and per domain
  std::vector<real> ep_acc(n_eps, real(0));
  std::vector<std::vector<real>> ep_acc_dom(n_domains);
  for (std::size_t e = 0; e < n_eps; ++e) {
    const std::size_t lo = episode_starts[e];
    const std::size_t hi = e + 1 < n_eps ? episode_starts[e + 1] : predictions.size();
    if (lo >= hi) throw EvalError("accuracy_with_ci: empty episode slice");
    std::vector<std::size_t> hit(n_domains, 0), cnt(n_domains, 0);
    std::size_t correct = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto dom = static_cast<std::size_t>(domains[i]);
      cnt[dom]++;
      if (predictions[i] == truths[i]) {
        hit[dom]++;
        correct++;
      }
    }
    ep_acc[e] = real(correct) / real(hi - lo);
    for (std::size_t d = 0; d < n_domains; ++d) {
      if (cnt[d]) ep_acc_dom[d].push_back(real(hit[d]) / real(cnt[d]));
    }
  }

  std::vector<MetricRow> rows;
  for (std::size_t d = 0; d < n_domains; ++d) {
    auto [mean, ci] = mean_ci(ep_acc_dom[d]);
    MetricRow row;
    row.name = "domain_" + std::to_string(d);
    row.mean = mean;
    row.ci95 = ci;
    row.n = ep_acc_dom[d].size();
    rows.push_back(std::move(row));
  }
  auto [mean, ci] = mean_ci(ep_acc);
  MetricRow avg;
  avg.name = "average";
  avg.mean = mean;
  avg.ci95 = ci;
  avg.n = n_eps;
  rows.push_back(std::move(avg));
  return rows;
}

}  // namespace hnp::eval
