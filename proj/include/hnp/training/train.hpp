#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hnp/eval/metrics.hpp"
#include "hnp/models/common.hpp"

namespace hnp::training {

using diff::real;

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int iterations = 2000;
  real base_lr = real(1e-4);
  real decay_factor = real(0.5);
  int decay_every = 3000;
  int n_z = 5;
  int n_w = 10;
  std::uint64_t seed = 0;
  int eval_every = 1000;  // checkpoint cadence; 0 = final checkpoint only
  real grad_clip = real(10);

  void validate() const;
};

/// base_lr * decay_factor^floor(iter / decay_every); non-increasing in iter.
real lr_at(int iter, const TrainConfig& cfg);

struct RunRecord {
  int iter = 0;
  real loss = 0, nll = 0, kl_z = 0, kl_w = 0, lr = 0;
  double seconds = 0;  // wall time of this iteration
};

class RunLog {
 public:
  void append(const RunRecord& r);
  const std::vector<RunRecord>& records() const { return records_; }
  void write_csv(const std::string& path) const;
  static std::string csv_header() { return "iter,loss,nll,kl_z,kl_w,lr,seconds"; }

 private:
  std::vector<RunRecord> records_;
};

using EpisodeGenerator = std::function<episodes::Episode(diff::Rng&)>;

/// One episode per iteration: sample, loss, backward, clipped Adam step at
/// the scheduled rate. Writes ckpt_path at every eval_every iterations and
/// at the end (when the path is set). A non-finite loss saves
/// ckpt_path.emergency and aborts with the last ten loss records.
void meta_train(const EpisodeGenerator& gen, models::EpisodicModel& model,
                const TrainConfig& cfg, RunLog& log, const std::string& ckpt_path = "");

/// Prior-path prediction over a frozen copy of the model; target labels are
/// only touched by the scoring functions. Regression: one avg-NLL row.
/// Classification: one accuracy row per domain plus the average.
std::vector<eval::MetricRow> meta_test(std::span<const episodes::Episode> eps,
                                       const models::EpisodicModel& model,
                                       const TrainConfig& cfg);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace hnp::training
