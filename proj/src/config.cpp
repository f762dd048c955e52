// SPDX-License-Identifier: Apache-2.0
#include "dhnet/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace dhnet {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::int64_t parse_i64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  }
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

std::array<std::int64_t, 9> parse_blocks(const std::string& key, const std::string& v) {
  std::array<std::int64_t, 9> out{};
  std::istringstream is(v);
  std::string item;
  std::size_t i = 0;
  while (std::getline(is, item, ',')) {
    if (i >= 9) throw ConfigError("config: " + key + " expects 9 entries");
    out[i++] = parse_i64(key, item);
  }
  if (i != 9) throw ConfigError("config: " + key + " expects 9 entries");
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Setter = std::function<void(AppConfig&, StateFields*, const std::string&,
                                  const std::string&)>;

/// One table drives both file parsing and --set overrides.
const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"network.width", [](AppConfig& c, StateFields*, const std::string& k,
                           const std::string& v) { c.net.width = parse_i64(k, v); }},
      {"network.blocks", [](AppConfig& c, StateFields*, const std::string& k,
                            const std::string& v) { c.net.blocks = parse_blocks(k, v); }},
      {"network.q", [](AppConfig& c, StateFields*, const std::string& k,
                       const std::string& v) { c.net.q = parse_i64(k, v); }},
      {"network.s", [](AppConfig& c, StateFields*, const std::string& k,
                       const std::string& v) { c.net.s = parse_i64(k, v); }},
      {"network.t", [](AppConfig& c, StateFields*, const std::string& k,
                       const std::string& v) { c.net.t = parse_i64(k, v); }},
      {"network.scales", [](AppConfig& c, StateFields*, const std::string& k,
                            const std::string& v) { c.net.scales = parse_i64(k, v); }},
      {"network.expand", [](AppConfig& c, StateFields*, const std::string& k,
                            const std::string& v) { c.net.expand = parse_i64(k, v); }},
      {"network.ddre", [](AppConfig& c, StateFields*, const std::string& k,
                          const std::string& v) { c.net.ddre = parse_bool(k, v); }},
      {"network.router", [](AppConfig& c, StateFields*, const std::string&,
                            const std::string& v) { c.net.router = router_mode_from_string(v); }},
      {"network.prior", [](AppConfig& c, StateFields*, const std::string&,
                           const std::string& v) { c.net.prior = prior_variant_from_string(v); }},
      {"network.prior_channels", [](AppConfig& c, StateFields*, const std::string& k,
                                    const std::string& v) { c.net.prior_channels = parse_i64(k, v); }},
      {"network.prior_seed", [](AppConfig& c, StateFields*, const std::string& k,
                                const std::string& v) { c.net.prior_seed = parse_u64(k, v); }},
      {"network.prior_path", [](AppConfig& c, StateFields*, const std::string&,
                                const std::string& v) { c.net.prior_path = v; }},
      {"network.precision", [](AppConfig& c, StateFields*, const std::string&,
                               const std::string& v) { c.net.precision = v; }},

      {"loss.eps", [](AppConfig& c, StateFields*, const std::string& k,
                      const std::string& v) { c.loss.eps = parse_f64(k, v); }},
      {"loss.delta", [](AppConfig& c, StateFields*, const std::string& k,
                        const std::string& v) { c.loss.delta = parse_f64(k, v); }},
      {"loss.lambda", [](AppConfig& c, StateFields*, const std::string& k,
                         const std::string& v) { c.loss.lambda = parse_f64(k, v); }},
      {"loss.mode", [](AppConfig& c, StateFields*, const std::string&,
                       const std::string& v) { c.loss_mode = loss_mode_from_string(v); }},

      {"train.steps", [](AppConfig& c, StateFields*, const std::string& k,
                         const std::string& v) { c.train.steps = parse_i64(k, v); }},
      {"train.batch", [](AppConfig& c, StateFields*, const std::string& k,
                         const std::string& v) { c.train.batch = parse_i64(k, v); }},
      {"train.patch", [](AppConfig& c, StateFields*, const std::string& k,
                         const std::string& v) { c.train.patch = parse_i64(k, v); }},
      {"train.lr_peak", [](AppConfig& c, StateFields*, const std::string& k,
                           const std::string& v) { c.train.lr_peak = parse_f64(k, v); }},
      {"train.lr_floor", [](AppConfig& c, StateFields*, const std::string& k,
                            const std::string& v) { c.train.lr_floor = parse_f64(k, v); }},
      {"train.beta1", [](AppConfig& c, StateFields*, const std::string& k,
                         const std::string& v) { c.train.beta1 = parse_f64(k, v); }},
      {"train.beta2", [](AppConfig& c, StateFields*, const std::string& k,
                         const std::string& v) { c.train.beta2 = parse_f64(k, v); }},
      {"train.adam_eps", [](AppConfig& c, StateFields*, const std::string& k,
                            const std::string& v) { c.train.adam_eps = parse_f64(k, v); }},
      {"train.clip", [](AppConfig& c, StateFields*, const std::string& k,
                        const std::string& v) { c.train.clip = parse_f64(k, v); }},
      {"train.flips", [](AppConfig& c, StateFields*, const std::string& k,
                         const std::string& v) { c.train.flips = parse_bool(k, v); }},
      {"train.seed", [](AppConfig& c, StateFields*, const std::string& k,
                        const std::string& v) { c.train.seed = parse_u64(k, v); }},
      {"train.workers", [](AppConfig& c, StateFields*, const std::string& k,
                           const std::string& v) { c.train.workers = parse_i64(k, v); }},
      {"train.log_every", [](AppConfig& c, StateFields*, const std::string& k,
                             const std::string& v) { c.train.log_every = parse_i64(k, v); }},

      {"data.count", [](AppConfig& c, StateFields*, const std::string& k,
                        const std::string& v) { c.data.count = parse_i64(k, v); }},
      {"data.height", [](AppConfig& c, StateFields*, const std::string& k,
                         const std::string& v) { c.data.height = parse_i64(k, v); }},
      {"data.width", [](AppConfig& c, StateFields*, const std::string& k,
                        const std::string& v) { c.data.width = parse_i64(k, v); }},
      {"data.rows", [](AppConfig& c, StateFields*, const std::string& k,
                       const std::string& v) { c.data.rows = parse_i64(k, v); }},
      {"data.cols", [](AppConfig& c, StateFields*, const std::string& k,
                       const std::string& v) { c.data.cols = parse_i64(k, v); }},
      {"data.band", [](AppConfig& c, StateFields*, const std::string& k,
                       const std::string& v) { c.data.band = parse_i64(k, v); }},
      {"data.min_length", [](AppConfig& c, StateFields*, const std::string& k,
                             const std::string& v) { c.data.min_length = parse_i64(k, v); }},
      {"data.max_length", [](AppConfig& c, StateFields*, const std::string& k,
                             const std::string& v) { c.data.max_length = parse_i64(k, v); }},
      {"data.seed", [](AppConfig& c, StateFields*, const std::string& k,
                       const std::string& v) { c.data.seed = parse_u64(k, v); }},
      {"data.split", [](AppConfig& c, StateFields*, const std::string&,
                        const std::string& v) { c.data.split = v; }},

      {"state.step", [](AppConfig&, StateFields* st, const std::string& k,
                        const std::string& v) {
         if (st == nullptr) throw ConfigError("config: unexpected [state] section");
         st->step = parse_i64(k, v);
         st->present = true;
       }},
      {"state.rng", [](AppConfig&, StateFields* st, const std::string& k,
                       const std::string& v) {
         if (st == nullptr) throw ConfigError("config: unexpected [state] section");
         st->rng = parse_u64(k, v);
         st->present = true;
       }},
  };
  return table;
}

}  // namespace

std::string loss_mode_name(LossMode m) {
  return m == LossMode::kPrinted ? "printed" : "normalized";
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "printed") return LossMode::kPrinted;
  if (s == "normalized") return LossMode::kNormalized;
  throw ConfigError("unknown loss mode: " + s);
}

std::string canonical_config(const AppConfig& cfg) {
  std::ostringstream os;
  os << "[network]\n";
  os << "width = " << cfg.net.width << "\n";
  os << "blocks = ";
  for (std::size_t i = 0; i < 9; ++i) os << (i ? "," : "") << cfg.net.blocks[i];
  os << "\n";
  os << "q = " << cfg.net.q << "\n";
  os << "s = " << cfg.net.s << "\n";
  os << "t = " << cfg.net.t << "\n";
  os << "scales = " << cfg.net.scales << "\n";
  os << "expand = " << cfg.net.expand << "\n";
  os << "ddre = " << (cfg.net.ddre ? "true" : "false") << "\n";
  os << "router = " << router_mode_name(cfg.net.router) << "\n";
  os << "prior = " << prior_variant_name(cfg.net.prior) << "\n";
  os << "prior_channels = " << cfg.net.prior_channels << "\n";
  os << "prior_seed = " << cfg.net.prior_seed << "\n";
  os << "prior_path = " << cfg.net.prior_path << "\n";
  os << "precision = " << cfg.net.precision << "\n";
  os << "\n[loss]\n";
  os << "eps = " << fmt_double(cfg.loss.eps) << "\n";
  os << "delta = " << fmt_double(cfg.loss.delta) << "\n";
  os << "lambda = " << fmt_double(cfg.loss.lambda) << "\n";
  os << "mode = " << loss_mode_name(cfg.loss_mode) << "\n";
  os << "\n[train]\n";
  os << "steps = " << cfg.train.steps << "\n";
  os << "batch = " << cfg.train.batch << "\n";
  os << "patch = " << cfg.train.patch << "\n";
  os << "lr_peak = " << fmt_double(cfg.train.lr_peak) << "\n";
  os << "lr_floor = " << fmt_double(cfg.train.lr_floor) << "\n";
  os << "beta1 = " << fmt_double(cfg.train.beta1) << "\n";
  os << "beta2 = " << fmt_double(cfg.train.beta2) << "\n";
  os << "adam_eps = " << fmt_double(cfg.train.adam_eps) << "\n";
  os << "clip = " << fmt_double(cfg.train.clip) << "\n";
  os << "flips = " << (cfg.train.flips ? "true" : "false") << "\n";
  os << "seed = " << cfg.train.seed << "\n";
  os << "workers = " << cfg.train.workers << "\n";
  os << "log_every = " << cfg.train.log_every << "\n";
  os << "\n[data]\n";
  os << "count = " << cfg.data.count << "\n";
  os << "height = " << cfg.data.height << "\n";
  os << "width = " << cfg.data.width << "\n";
  os << "rows = " << cfg.data.rows << "\n";
  os << "cols = " << cfg.data.cols << "\n";
  os << "band = " << cfg.data.band << "\n";
  os << "min_length = " << cfg.data.min_length << "\n";
  os << "max_length = " << cfg.data.max_length << "\n";
  os << "seed = " << cfg.data.seed << "\n";
  os << "split = " << cfg.data.split << "\n";
  return os.str();
}

AppConfig parse_config(const std::string& text, StateFields* state) {
  AppConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header '" + t + "'");
      }
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value, got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": key '" + key + "' outside any section");
    }
    const std::string full = section + "." + key;
    const auto it = setters().find(full);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + full + "'");
    }
    it->second(cfg, state, full, value);
  }
  return cfg;
}

AppConfig load_config_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

void apply_override(AppConfig& cfg, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + spec + "' is not section.key=value");
  }
  const std::string key = trim(spec.substr(0, eq));
  const std::string value = trim(spec.substr(eq + 1));
  const auto it = setters().find(key);
  if (it == setters().end() || key.rfind("state.", 0) == 0) {
    throw ConfigError("override targets unknown key '" + key + "'");
  }
  it->second(cfg, nullptr, key, value);
}

std::string config_with_state(const AppConfig& cfg, std::int64_t step,
                              std::uint64_t rng) {
  std::ostringstream os;
  os << canonical_config(cfg);
  os << "\n[state]\n";
  os << "step = " << step << "\n";
  os << "rng = " << rng << "\n";
  return os.str();
}

}  // namespace dhnet
