#include "hnp/episodes/feature_bank.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace hnp::episodes {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw DataError("feature bank line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

int parse_int(const std::string& s, int line, const std::string& what) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    fail(line, "expected integer for " + what + ", got '" + s + "'");
  }
  return v;
}

real parse_real(const std::string& s, int line, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<real>(v);
  } catch (const std::exception&) {
    fail(line, "expected number for " + what + ", got '" + s + "'");
  }
}

std::vector<int> parse_category_list(const std::string& line_text, const std::string& key,
                                     int line) {
  const std::string prefix = key + "=";
  if (line_text.rfind(prefix, 0) != 0) fail(line, "expected '" + prefix + "...'");
  std::vector<int> out;
  for (const auto& tok : split_on(line_text.substr(prefix.size()), ',')) {
    if (!tok.empty()) out.push_back(parse_int(tok, line, key));
  }
  if (out.empty()) fail(line, key + " list is empty");
  return out;
}

}  // namespace

FeatureBank load_feature_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature bank '" + path + "'");

  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) throw DataError("feature bank '" + path + "' is empty");
  line_no = 1;
  FeatureBank bank;
  {
    std::istringstream hdr(line);
    std::string dim_tok, dom_tok;
    if (!(hdr >> dim_tok >> dom_tok) || dim_tok.rfind("dim=", 0) != 0 ||
        dom_tok.rfind("domains=", 0) != 0) {
      fail(line_no, "expected header 'dim=<d> domains=<M>'");
    }
    bank.feature_dim = parse_int(dim_tok.substr(4), line_no, "dim");
    bank.n_domains = parse_int(dom_tok.substr(8), line_no, "domains");
    if (bank.feature_dim <= 0 || bank.n_domains <= 0) fail(line_no, "dim and domains must be positive");
  }

  if (!std::getline(in, line)) fail(2, "missing train_categories line");
  bank.train_categories = parse_category_list(line, "train_categories", ++line_no);
  if (!std::getline(in, line)) fail(3, "missing test_categories line");
  bank.test_categories = parse_category_list(line, "test_categories", ++line_no);

  std::set<int> train_set(bank.train_categories.begin(), bank.train_categories.end());
  for (int c : bank.test_categories) {
    if (train_set.count(c)) {
      fail(3, "category " + std::to_string(c) + " appears in both splits");
    }
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto toks = split_on(line, ',');
    if (toks.size() != static_cast<std::size_t>(bank.feature_dim) + 2) {
      fail(line_no, "expected domain,category plus " + std::to_string(bank.feature_dim) +
                        " features, got " + std::to_string(toks.size()) + " fields");
    }
    FeatureBank::Entry e;
    e.domain = parse_int(toks[0], line_no, "domain_id");
    e.category = parse_int(toks[1], line_no, "category_id");
    if (e.domain < 0 || e.domain >= bank.n_domains) {
      fail(line_no, "domain_id " + std::to_string(e.domain) + " outside [0, " +
                        std::to_string(bank.n_domains) + ")");
    }
    if (!train_set.count(e.category) &&
        !std::count(bank.test_categories.begin(), bank.test_categories.end(), e.category)) {
      fail(line_no, "category_id " + std::to_string(e.category) + " not in either split");
    }
    e.features.reserve(static_cast<std::size_t>(bank.feature_dim));
    for (int i = 0; i < bank.feature_dim; ++i) {
      e.features.push_back(parse_real(toks[static_cast<std::size_t>(i) + 2], line_no, "feature"));
    }
    bank.entries.push_back(std::move(e));
  }
  if (bank.entries.empty()) throw DataError("feature bank '" + path + "' has no data rows");
  return bank;
}

Episode sample_feature_episode(const FeatureBank& bank, const EpisodeSpec& spec, Split split,
                               Rng& rng) {
  if (spec.m_tasks > bank.n_domains) {
    throw DataError("episode asks for " + std::to_string(spec.m_tasks) + " tasks but the bank has " +
                    std::to_string(bank.n_domains) + " domains");
  }
  if (spec.n_target % spec.o_way != 0) {
    throw DataError("n_target " + std::to_string(spec.n_target) + " not divisible by o_way " +
                    std::to_string(spec.o_way));
  }
  const auto& pool = bank.categories(split);
  if (spec.o_way > static_cast<int>(pool.size())) {
    throw DataError("requested " + std::to_string(spec.o_way) + "-way episode but the split has " +
                    std::to_string(pool.size()) + " categories");
  }

  std::vector<int> cats = pool;
  hnp::diff::shuffle(cats, rng);
  cats.resize(static_cast<std::size_t>(spec.o_way));

  const int per_cat_target = spec.n_target / spec.o_way;
  const int need = spec.k_shot + per_cat_target;

  Episode e;
  e.mode = Mode::kClassification;
  e.label_map = cats;
  e.tasks.resize(static_cast<std::size_t>(spec.m_tasks));
  for (int m = 0; m < spec.m_tasks; ++m) {
    TaskData& t = e.tasks[static_cast<std::size_t>(m)];
    t.task_index = m;
    for (int o = 0; o < spec.o_way; ++o) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        if (bank.entries[i].domain == m && bank.entries[i].category == cats[static_cast<std::size_t>(o)]) {
          idx.push_back(i);
        }
      }
      if (static_cast<int>(idx.size()) < need) {
        throw DataError("domain " + std::to_string(m) + ", category " +
                        std::to_string(cats[static_cast<std::size_t>(o)]) + " has " +
                        std::to_string(idx.size()) + " entries but the episode needs " +
                        std::to_string(need));
      }
      hnp::diff::shuffle(idx, rng);
      for (int k = 0; k < spec.k_shot; ++k) {
        LabeledPoint p;
        p.x = bank.entries[idx[static_cast<std::size_t>(k)]].features;
        p.label = o;
        t.context.push_back(std::move(p));
      }
      for (int k = 0; k < per_cat_target; ++k) {
        LabeledPoint p;
        p.x = bank.entries[idx[static_cast<std::size_t>(spec.k_shot + k)]].features;
        p.label = o;
        t.target.push_back(std::move(p));
      }
    }
    hnp::diff::shuffle(t.target, rng);
  }
  return e;
}

}  // namespace hnp::episodes
