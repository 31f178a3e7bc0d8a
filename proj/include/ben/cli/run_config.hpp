#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ben/envs.hpp"
#include "ben/trainer.hpp"

namespace ben::cli {

/// Bad config: unknown key or preset, unparsable value. Exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EnvKind { tiger, search_rescue };

struct RunConfig {
  std::string preset = "tiger";
  EnvKind env = EnvKind::tiger;
  envs::TigerParams tiger;
  envs::SarParams sar;
  train::TrainConfig train;
  envs::PriorDatasetConfig prior{false, false, false};
  std::string out_dir;  // empty: --out, then BEN_OUT_DIR, then ./runs

  // sweep grids
  std::vector<std::size_t> msbbe_steps{1, 5, 20};
  std::vector<std::size_t> aleatoric_layers{1, 2, 3, 4};
  std::vector<std::size_t> pretrain_steps{0, 250, 500, 1000};
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for double is missing on older libstdc++
    std::istringstream is(s);
    is.imbue(std::locale::classic());
    is >> v;
    if (!is || !is.eof()) throw ConfigError(key + ": not a number: '" + raw + "'");
  } else {
    if (!s.empty() && s[0] == '-') throw ConfigError(key + ": must be non-negative: '" + raw + "'");
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": not an integer: '" + raw + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + raw + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<T>(key, item));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("to_chars failed");
  return std::string(buf, p);
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string env_name(EnvKind e) { return e == EnvKind::tiger ? "tiger" : "search_rescue"; }

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define BEN_NUM(path, T)                                                                          \
  Field {                                                                                         \
    [](RunConfig& c, const std::string& v) { c.path = parse_number<T>(#path, v); },               \
        [](const RunConfig& c) {                                                                  \
          if constexpr (std::is_floating_point_v<T>) return fmt(c.path);                          \
          else return std::to_string(c.path);                                                     \
        }                                                                                         \
  }
#define BEN_BOOL(path)                                                                    \
  Field {                                                                                 \
    [](RunConfig& c, const std::string& v) { c.path = parse_bool(#path, v); },            \
        [](const RunConfig& c) { return std::string(c.path ? "true" : "false"); }         \
  }

/// section.key -> accessor. Ordered, so the resolved snapshot is stable.
inline const std::map<std::string, Field>& fields() {
  using std::size_t;
  static const std::map<std::string, Field> f = {
      {"experiment.preset", {[](RunConfig& c, const std::string& v) { c.preset = trim(v); },
                             [](const RunConfig& c) { return c.preset; }}},
      {"experiment.env",
       {[](RunConfig& c, const std::string& v) {
          const auto s = trim(v);
          if (s == "tiger") c.env = EnvKind::tiger;
          else if (s == "search_rescue") c.env = EnvKind::search_rescue;
          else throw ConfigError("experiment.env: unknown environment '" + s + "'");
        },
        [](const RunConfig& c) { return env_name(c.env); }}},
      {"experiment.out", {[](RunConfig& c, const std::string& v) { c.out_dir = trim(v); },
                          [](const RunConfig& c) { return c.out_dir; }}},
      {"experiment.seeds",
       {[](RunConfig& c, const std::string& v) { c.train.seeds = parse_list<std::uint64_t>("experiment.seeds", v); },
        [](const RunConfig& c) { return fmt_list(c.train.seeds); }}},

      {"tiger.r_tiger", BEN_NUM(tiger.r_tiger, double)},
      {"tiger.r_gold", BEN_NUM(tiger.r_gold, double)},
      {"tiger.r_listen", BEN_NUM(tiger.r_listen, double)},
      {"tiger.gamma", BEN_NUM(tiger.gamma, double)},
      {"tiger.p_correct", BEN_NUM(tiger.p_correct, double)},
      {"tiger.p_wrong", BEN_NUM(tiger.p_wrong, double)},

      {"search_rescue.n_grid", BEN_NUM(sar.n_grid, int)},
      {"search_rescue.n_victims", BEN_NUM(sar.n_victims, int)},
      {"search_rescue.n_hazards", BEN_NUM(sar.n_hazards, int)},
      {"search_rescue.r_victim", BEN_NUM(sar.r_victim, double)},
      {"search_rescue.r_hazard", BEN_NUM(sar.r_hazard, double)},
      {"search_rescue.r_listen", BEN_NUM(sar.r_listen, double)},
      {"search_rescue.sigma_noise", BEN_NUM(sar.sigma_noise, double)},
      {"search_rescue.gamma", BEN_NUM(sar.gamma, double)},
      {"search_rescue.episode_cap", BEN_NUM(sar.episode_cap, int)},

      {"trainer.n_pretrain", BEN_NUM(train.n_pretrain, size_t)},
      {"trainer.n_update", BEN_NUM(train.n_update, size_t)},
      {"trainer.n_posterior", BEN_NUM(train.n_posterior, size_t)},
      {"trainer.lr_omega", BEN_NUM(train.lr_omega, double)},
      {"trainer.lr_psi", BEN_NUM(train.lr_psi, double)},
      {"trainer.clip_norm", BEN_NUM(train.clip_norm, double)},
      {"trainer.truncation", BEN_NUM(train.truncation, size_t)},
      {"trainer.n_mc", BEN_NUM(train.n_mc, size_t)},
      {"trainer.msbbe_points", BEN_NUM(train.msbbe_points, size_t)},
      {"trainer.episode_cap", BEN_NUM(train.episode_cap, size_t)},
      {"trainer.episodes", BEN_NUM(train.episodes, size_t)},
      {"trainer.mode", {[](RunConfig& c, const std::string& v) {
                          try {
                            c.train.mode = train::parse_mode(trim(v));
                          } catch (const std::invalid_argument& e) {
                            throw ConfigError(std::string("trainer.mode: ") + e.what());
                          }
                        },
                        [](const RunConfig& c) { return train::to_string(c.train.mode); }}},
      {"trainer.posterior", {[](RunConfig& c, const std::string& v) {
                               try {
                                 c.train.posterior = train::parse_posterior(trim(v));
                               } catch (const std::invalid_argument& e) {
                                 throw ConfigError(std::string("trainer.posterior: ") + e.what());
                               }
                             },
                             [](const RunConfig& c) { return train::to_string(c.train.posterior); }}},
      {"trainer.elbo_schedule", {[](RunConfig& c, const std::string& v) {
                                   try {
                                     c.train.schedule = train::parse_schedule(trim(v));
                                   } catch (const std::invalid_argument& e) {
                                     throw ConfigError(std::string("trainer.elbo_schedule: ") + e.what());
                                   }
                                 },
                                 [](const RunConfig& c) { return train::to_string(c.train.schedule); }}},
      {"trainer.history",
       {[](RunConfig& c, const std::string& v) {
          const auto s = trim(v);
          if (s == "recurrent") c.train.history = net::HistoryMode::recurrent;
          else if (s == "contextual") c.train.history = net::HistoryMode::contextual;
          else throw ConfigError("trainer.history: expected recurrent or contextual, got '" + s + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.train.history == net::HistoryMode::recurrent ? "recurrent" : "contextual");
        }}},
      {"trainer.hidden", BEN_NUM(train.hidden, size_t)},
      {"trainer.gru_hidden", BEN_NUM(train.gru_hidden, size_t)},
      {"trainer.reward_scale", BEN_NUM(train.reward_scale, double)},
      {"trainer.value_scale", BEN_NUM(train.value_scale, double)},
      {"trainer.aleatoric_blocks", BEN_NUM(train.aleatoric_blocks, size_t)},
      {"trainer.aleatoric_param_dim", BEN_NUM(train.aleatoric_param_dim, size_t)},
      {"trainer.sigma_b", BEN_NUM(train.sigma_b, double)},
      {"trainer.prior_variance", BEN_NUM(train.prior_variance, double)},
      {"trainer.pretrain_horizon", BEN_NUM(train.pretrain_horizon, size_t)},
      {"trainer.pretrain_epsilon", BEN_NUM(train.pretrain_epsilon, double)},
      {"trainer.pretrain_pairs", BEN_NUM(train.pretrain_pairs, size_t)},
      {"trainer.pretrain_points", BEN_NUM(train.pretrain_points, size_t)},

      {"prior.interior_moves", BEN_BOOL(prior.interior_moves)},
      {"prior.boundary_doors", BEN_BOOL(prior.boundary_doors)},
      {"prior.listening_demonstrations", BEN_BOOL(prior.listening_demonstrations)},

      {"sweep.msbbe_steps",
       {[](RunConfig& c, const std::string& v) { c.msbbe_steps = parse_list<size_t>("sweep.msbbe_steps", v); },
        [](const RunConfig& c) { return fmt_list(c.msbbe_steps); }}},
      {"sweep.aleatoric_layers",
       {[](RunConfig& c, const std::string& v) {
          c.aleatoric_layers = parse_list<size_t>("sweep.aleatoric_layers", v);
        },
        [](const RunConfig& c) { return fmt_list(c.aleatoric_layers); }}},
      {"sweep.pretrain_steps",
       {[](RunConfig& c, const std::string& v) { c.pretrain_steps = parse_list<size_t>("sweep.pretrain_steps", v); },
        [](const RunConfig& c) { return fmt_list(c.pretrain_steps); }}},
  };
  return f;
}

#undef BEN_NUM
#undef BEN_BOOL

}  // namespace detail

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> n{"tiger", "tiger_fig8", "sar_tabula_rasa", "sar_weak_prior", "sar_zero_shot"};
  return n;
}

inline bool known_preset(const std::string& name) {
  const auto& n = preset_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

inline train::TrainConfig tiger_train_defaults() {
  train::TrainConfig c;
  c.posterior = train::PosteriorKind::exact_tiger;
  c.mode = train::Mode::episodic_tabula_rasa;
  c.lr_omega = 0.02;
  c.hidden = 32;
  c.gru_hidden = 2;
  c.n_update = 20;
  c.n_pretrain = 1000;
  c.n_mc = 16;
  c.value_scale = 100;
  c.reward_scale = 0.01;
  c.episode_cap = 11;
  c.seeds.clear();
  for (std::uint64_t s = 0; s < 20; ++s) c.seeds.push_back(s);
  return c;
}

inline train::TrainConfig sar_train_defaults() {
  train::TrainConfig c;
  c.posterior = train::PosteriorKind::variational_flow;
  c.lr_omega = 1e-4;
  c.lr_psi = 1e-4;
  c.hidden = 64;
  c.gru_hidden = 64;
  c.n_update = 1;
  c.n_posterior = 4;
  c.truncation = 64;
  c.n_mc = 1;
  c.value_scale = 10;
  c.reward_scale = 0.01;
  c.sigma_b = 10;
  c.aleatoric_blocks = 2;
  c.pretrain_horizon = 64;
  c.pretrain_points = 8;
  c.n_pretrain = 1000;
  c.seeds.clear();
  for (std::uint64_t s = 0; s < 8; ++s) c.seeds.push_back(s);
  return c;
}

/// Defaults of a named preset.
inline RunConfig preset(const std::string& name) {
  if (!known_preset(name)) throw ConfigError("unknown preset '" + name + "'");
  RunConfig c;
  c.preset = name;
  if (name == "tiger" || name == "tiger_fig8") {
    c.env = EnvKind::tiger;
    c.train = tiger_train_defaults();
    return c;
  }
  c.env = EnvKind::search_rescue;
  c.train = sar_train_defaults();
  if (name == "sar_tabula_rasa") {
    c.train.mode = train::Mode::episodic_tabula_rasa;
    c.train.episodes = 3;
    c.prior = {false, false, false};
  } else if (name == "sar_weak_prior") {
    c.train.mode = train::Mode::episodic_weak_prior;
    c.train.episodes = 3;
    c.prior = {true, true, false};
  } else {
    c.train.mode = train::Mode::zero_shot_strong_prior;
    c.train.episodes = 1;
    c.prior = {true, true, true};
  }
  return c;
}

inline void validate(const RunConfig& c);

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// section.key = value pairs in file order.
inline KeyValues read_ini(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config does not parse: ") + e.what());
  }
  KeyValues kv;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' outside a section");
    for (const auto& [key, val] : body) kv.emplace_back(section + "." + key, val.get_value<std::string>());
  }
  return kv;
}

inline KeyValues read_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return read_ini(in);
}

inline void apply_values(RunConfig& c, const KeyValues& kv) {
  const auto& f = detail::fields();
  for (const auto& [k, v] : kv) {
    auto it = f.find(k);
    if (it == f.end()) throw ConfigError("unknown config key '" + k + "'");
    it->second.set(c, v);
  }
}

/// Preset defaults, then the file's values on top. `preset_override` wins over
/// the file's experiment.preset.
inline RunConfig resolve(const KeyValues& kv, const std::string& preset_override = "") {
  std::string name = preset_override;
  if (name.empty())
    for (const auto& [k, v] : kv)
      if (k == "experiment.preset") name = detail::trim(v);
  if (name.empty()) throw ConfigError("no preset given (experiment.preset or --preset)");
  RunConfig c = preset(name);
  KeyValues rest;
  for (const auto& p : kv)
    if (p.first != "experiment.preset") rest.push_back(p);
  apply_values(c, rest);
  c.preset = name;
  validate(c);
  return c;
}

inline void validate(const RunConfig& c) {
  try {
    c.train.validate();
    if (c.env == EnvKind::search_rescue) c.sar.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.train.posterior == train::PosteriorKind::exact_tiger && c.env != EnvKind::tiger)
    throw ConfigError("exact_tiger posterior needs env = tiger");
  if (c.env == EnvKind::tiger && (c.prior.interior_moves || c.prior.boundary_doors))
    throw ConfigError("prior pairs are defined for search_rescue only");
  const double pc = c.tiger.p_correct, pw = c.tiger.p_wrong;
  if (!(pc >= 0 && pw >= 0 && pc + pw <= 1)) throw ConfigError("tiger listen probabilities outside the simplex");
  if (!(c.tiger.gamma >= 0 && c.tiger.gamma < 1)) throw ConfigError("tiger.gamma outside [0, 1)");
  if (!(c.sar.gamma >= 0 && c.sar.gamma < 1)) throw ConfigError("search_rescue.gamma outside [0, 1)");
  if (c.train.mode == train::Mode::zero_shot_strong_prior && c.train.episodes != 1)
    throw ConfigError("zero_shot_strong_prior runs exactly one episode");
}

/// Every field, grouped by section, in a form read_ini accepts back.
inline std::string resolved_ini(const RunConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& [k, f] : detail::fields()) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << k.substr(dot + 1) << " = " << f.get(c) << '\n';
  }
  return os.str();
}

inline std::unique_ptr<envs::CmdpEnv> make_env(const RunConfig& c) {
  if (c.env == EnvKind::tiger) return std::make_unique<envs::TigerEnv>(c.tiger);
  return std::make_unique<envs::SearchRescueEnv>(c.sar);
}

inline envs::PriorDataset make_dataset(const RunConfig& c) {
  if (c.env != EnvKind::search_rescue) {
    envs::PriorDataset ds;
    ds.listening_demonstrations = c.prior.listening_demonstrations;
    return ds;
  }
  return envs::build_prior_dataset(c.sar, c.prior);
}

}  // namespace ben::cli
