#include "hnp/episodes/synthetic.hpp"

#include <Eigen/Dense>
#include <Eigen/QR>

#include <numeric>

namespace hnp::episodes {

SyntheticDomains::SyntheticDomains(const SyntheticConfig& cfg) : cfg_(cfg) {
  if (cfg.proto_dim <= 0 || cfg.n_domains <= 0 || cfg.n_train_categories <= 0 ||
      cfg.n_test_categories <= 0 || cfg.noise_scale < 0 || cfg.proto_scale <= 0) {
    throw DataError("SyntheticConfig: sizes must be positive");
  }
  Rng rng(cfg.domain_seed);
  const int d = cfg.proto_dim;
  const int n_cat = cfg.n_train_categories + cfg.n_test_categories;

  prototypes_.resize(static_cast<std::size_t>(n_cat));
  for (auto& proto : prototypes_) {
    proto.resize(static_cast<std::size_t>(d));
    for (auto& v : proto) v = cfg.proto_scale * rng.normal();
  }

  using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic>;
  domain_maps_.resize(static_cast<std::size_t>(cfg.n_domains));
  domain_offsets_.resize(static_cast<std::size_t>(cfg.n_domains));
  for (int m = 0; m < cfg.n_domains; ++m) {
    // a random rotation per domain keeps within-domain geometry intact
    // while making raw features incomparable across domains
    Mat g(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(d, d);
    auto& flat = domain_maps_[static_cast<std::size_t>(m)];
    flat.resize(static_cast<std::size_t>(d * d));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) flat[static_cast<std::size_t>(i * d + j)] = q(i, j);

    auto& off = domain_offsets_[static_cast<std::size_t>(m)];
    off.resize(static_cast<std::size_t>(d));
    for (auto& v : off) v = real(0.5) * rng.normal();
  }
}

Episode SyntheticDomains::sample_episode(const EpisodeSpec& spec, Split split, Rng& rng) const {
  if (spec.m_tasks <= 0 || spec.o_way <= 0 || spec.k_shot <= 0 || spec.n_target <= 0) {
    throw DataError("EpisodeSpec: all counts must be positive");
  }
  if (spec.m_tasks > cfg_.n_domains) {
    throw DataError("episode asks for " + std::to_string(spec.m_tasks) + " tasks but only " +
                    std::to_string(cfg_.n_domains) + " domains exist");
  }
  if (spec.n_target % spec.o_way != 0) {
    throw DataError("n_target " + std::to_string(spec.n_target) + " not divisible by o_way " +
                    std::to_string(spec.o_way));
  }
  const int first = split == Split::kMetaTrain ? 0 : cfg_.n_train_categories;
  const int count = split == Split::kMetaTrain ? cfg_.n_train_categories : cfg_.n_test_categories;
  if (spec.o_way > count) {
    throw DataError("requested " + std::to_string(spec.o_way) + "-way episode but the split has " +
                    std::to_string(count) + " categories");
  }

  std::vector<int> cats(static_cast<std::size_t>(count));
  std::iota(cats.begin(), cats.end(), first);
  hnp::diff::shuffle(cats, rng);
  cats.resize(static_cast<std::size_t>(spec.o_way));

  const int d = cfg_.proto_dim;
  auto draw_point = [&](int domain, int local_label) {
    const auto& proto = prototypes_[static_cast<std::size_t>(cats[static_cast<std::size_t>(local_label)])];
    std::vector<real> noisy(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i)
      noisy[static_cast<std::size_t>(i)] =
          proto[static_cast<std::size_t>(i)] + cfg_.noise_scale * rng.normal();
    const auto& map = domain_maps_[static_cast<std::size_t>(domain)];
    const auto& off = domain_offsets_[static_cast<std::size_t>(domain)];
    LabeledPoint p;
    p.x.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      real acc = off[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; ++j)
        acc += map[static_cast<std::size_t>(i * d + j)] * noisy[static_cast<std::size_t>(j)];
      p.x[static_cast<std::size_t>(i)] = acc;
    }
    p.label = local_label;
    return p;
  };

  Episode e;
  e.mode = Mode::kClassification;
  e.label_map = cats;
  e.tasks.resize(static_cast<std::size_t>(spec.m_tasks));
  const int targets_per_cat = spec.n_target / spec.o_way;
  for (int m = 0; m < spec.m_tasks; ++m) {
    TaskData& t = e.tasks[static_cast<std::size_t>(m)];
    t.task_index = m;
    for (int o = 0; o < spec.o_way; ++o)
      for (int k = 0; k < spec.k_shot; ++k) t.context.push_back(draw_point(m, o));
    for (int o = 0; o < spec.o_way; ++o)
      for (int k = 0; k < targets_per_cat; ++k) t.target.push_back(draw_point(m, o));
    hnp::diff::shuffle(t.target, rng);
  }
  return e;
}

}  // namespace hnp::episodes
