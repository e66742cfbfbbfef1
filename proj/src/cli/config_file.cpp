#include "hnp/cli/config_file.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace hnp::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& key,
                       const std::string& what) {
  throw ConfigFileError(origin + ": line " + std::to_string(line) + ": key '" + key + "': " +
                        what);
}

struct Parser {
  RunFileConfig& cfg;
  const std::string& origin;
  int line = 0;
  std::string key;

  int to_int(const std::string& v) const {
    int out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
      fail(origin, line, key, "expected integer, got '" + v + "'");
    }
    return out;
  }
  std::uint64_t to_u64(const std::string& v) const {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
      fail(origin, line, key, "expected unsigned integer, got '" + v + "'");
    }
    return out;
  }
  diff::real to_real(const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return static_cast<diff::real>(d);
    } catch (const std::exception&) {
      fail(origin, line, key, "expected number, got '" + v + "'");
    }
  }
  bool to_bool(const std::string& v) const {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    fail(origin, line, key, "expected on/off, got '" + v + "'");
  }
  std::vector<std::pair<diff::real, diff::real>> to_intervals(const std::string& v) const {
    std::vector<std::pair<diff::real, diff::real>> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        fail(origin, line, key, "expected lo:hi interval, got '" + item + "'");
      }
      out.emplace_back(to_real(trim(item.substr(0, colon))),
                       to_real(trim(item.substr(colon + 1))));
    }
    if (out.empty()) fail(origin, line, key, "expected at least one interval");
    return out;
  }
};

}  // namespace

RunFileConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunFileConfig cfg;
  Parser p{cfg, origin};

  const std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"mode",
       [&](const std::string& v) {
         if (v == "regression") {
           cfg.mode = episodes::Mode::kRegression;
         } else if (v == "classification") {
           cfg.mode = episodes::Mode::kClassification;
         } else {
           fail(origin, p.line, p.key, "expected regression|classification, got '" + v + "'");
         }
       }},
      {"data",
       [&](const std::string& v) {
         if (v != "gp" && v != "synthetic" && v != "feature") {
           fail(origin, p.line, p.key, "expected gp|synthetic|feature, got '" + v + "'");
         }
         cfg.data = v;
       }},
      {"feature_bank", [&](const std::string& v) { cfg.feature_bank = v; }},
      {"m_tasks", [&](const std::string& v) { cfg.spec.m_tasks = p.to_int(v); }},
      {"o_way", [&](const std::string& v) { cfg.spec.o_way = p.to_int(v); }},
      {"k_shot", [&](const std::string& v) { cfg.spec.k_shot = p.to_int(v); }},
      {"n_target", [&](const std::string& v) { cfg.spec.n_target = p.to_int(v); }},
      {"gp_length_scale", [&](const std::string& v) { cfg.gp.length_scale = p.to_real(v); }},
      {"gp_signal_sigma", [&](const std::string& v) { cfg.gp.signal_sigma = p.to_real(v); }},
      {"gp_intervals", [&](const std::string& v) { cfg.gp.intervals = p.to_intervals(v); }},
      {"gp_context_points",
       [&](const std::string& v) { cfg.gp.n_context_per_task = p.to_int(v); }},
      {"gp_target_points", [&](const std::string& v) { cfg.gp.n_target_per_task = p.to_int(v); }},
      {"gp_jitter", [&](const std::string& v) { cfg.gp.jitter = p.to_real(v); }},
      {"syn_proto_dim", [&](const std::string& v) { cfg.syn.proto_dim = p.to_int(v); }},
      {"syn_domains", [&](const std::string& v) { cfg.syn.n_domains = p.to_int(v); }},
      {"syn_train_categories",
       [&](const std::string& v) { cfg.syn.n_train_categories = p.to_int(v); }},
      {"syn_test_categories",
       [&](const std::string& v) { cfg.syn.n_test_categories = p.to_int(v); }},
      {"syn_noise", [&](const std::string& v) { cfg.syn.noise_scale = p.to_real(v); }},
      {"syn_proto_scale", [&](const std::string& v) { cfg.syn.proto_scale = p.to_real(v); }},
      {"syn_domain_seed", [&](const std::string& v) { cfg.syn.domain_seed = p.to_u64(v); }},
      {"d_model", [&](const std::string& v) { cfg.d_model = p.to_int(v); }},
      {"d_z", [&](const std::string& v) { cfg.d_z = p.to_int(v); }},
      {"d_w", [&](const std::string& v) { cfg.d_w = p.to_int(v); }},
      {"heads", [&](const std::string& v) { cfg.heads = p.to_int(v); }},
      {"z_path", [&](const std::string& v) { cfg.z_path = p.to_bool(v); }},
      {"w_path", [&](const std::string& v) { cfg.w_path = p.to_bool(v); }},
      {"conditioning",
       [&](const std::string& v) {
         try {
           cfg.conditioning = models::conditioning_from_name(v);
         } catch (const models::ModelError&) {
           fail(origin, p.line, p.key, "expected merge|concat|add, got '" + v + "'");
         }
       }},
      {"iterations", [&](const std::string& v) { cfg.train.iterations = p.to_int(v); }},
      {"base_lr", [&](const std::string& v) { cfg.train.base_lr = p.to_real(v); }},
      {"decay_factor", [&](const std::string& v) { cfg.train.decay_factor = p.to_real(v); }},
      {"decay_every", [&](const std::string& v) { cfg.train.decay_every = p.to_int(v); }},
      {"n_z", [&](const std::string& v) { cfg.train.n_z = p.to_int(v); }},
      {"n_w", [&](const std::string& v) { cfg.train.n_w = p.to_int(v); }},
      {"eval_every", [&](const std::string& v) { cfg.train.eval_every = p.to_int(v); }},
      {"grad_clip", [&](const std::string& v) { cfg.train.grad_clip = p.to_real(v); }},
      {"eval_episodes", [&](const std::string& v) { cfg.eval_episodes = p.to_int(v); }},
  };

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++p.line;
    std::string s = raw;
    if (const auto hash = s.find('#'); hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigFileError(origin + ": line " + std::to_string(p.line) +
                            ": expected 'key = value', got '" + trim(raw) + "'");
    }
    p.key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const auto it = setters.find(p.key);
    if (it == setters.end()) {
      fail(origin, p.line, p.key, "unknown key");
    }
    if (value.empty()) fail(origin, p.line, p.key, "empty value");
    it->second(value);
  }
  return cfg;
}

RunFileConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigFileError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace hnp::cli
