#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ben/cli/metrics_io.hpp"
#include "ben/cli/run_config.hpp"
#include "ben/oracles.hpp"
#include "ben/trainer.hpp"

namespace ben::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeError = 2 };

/// What the command line asked for, before anything is resolved.
struct Invocation {
  std::string config_path;  // empty: preset defaults only
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string axis;  // ablate only
};

/// One metrics file and the config that produces it.
struct Job {
  std::string stem;
  RunConfig config;
};

namespace detail {

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline RunConfig resolve_invocation(const Invocation& inv, std::string* received,
                                    const std::string& fallback_preset = "") {
  KeyValues kv;
  std::string text;
  if (!inv.config_path.empty()) {
    text = slurp(inv.config_path);
    std::istringstream in(text);
    kv = read_ini(in);
  }
  std::string name = inv.preset;
  if (name.empty() && !fallback_preset.empty()) {
    name = fallback_preset;
    for (const auto& [k, v] : kv)
      if (k == "experiment.preset") name = detail::trim(v);
  }
  RunConfig c = resolve(kv, name);
  if (inv.seed) c.train.seeds = {*inv.seed};
  if (received) {
    std::ostringstream os;
    os << "; config file: " << (inv.config_path.empty() ? "(none)" : inv.config_path) << '\n';
    if (!inv.preset.empty()) os << "; --preset " << inv.preset << '\n';
    if (inv.seed) os << "; --seed " << *inv.seed << '\n';
    if (!inv.out.empty()) os << "; --out " << inv.out << '\n';
    if (!inv.axis.empty()) os << "; --axis " << inv.axis << '\n';
    os << text;
    *received = os.str();
  }
  return c;
}

inline std::string output_dir(const Invocation& inv, const RunConfig& c) {
  if (!inv.out.empty()) return inv.out;
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("BEN_OUT_DIR"); env && *env) return env;
  return "runs";
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  f << s;
}

inline std::vector<Job> paired_contextual(const RunConfig& c) {
  RunConfig ben = c, ctx = c;
  ben.train.history = net::HistoryMode::recurrent;
  ctx.train.history = net::HistoryMode::contextual;
  return {{"metrics_ben", ben}, {"metrics_contextual", ctx}};
}

inline std::string fmt_row(const char* name, double v, const char* method) {
  std::ostringstream os;
  os << std::left << std::setw(12) << name << std::right << std::setw(14) << std::setprecision(10) << v << "  "
     << method << '\n';
  return os.str();
}

}  // namespace detail

/// Metrics files `run` produces for a resolved config.
inline std::vector<Job> run_jobs(const RunConfig& c) {
  if (c.preset == "tiger_fig8") {
    std::vector<Job> jobs;
    for (std::size_t k : c.msbbe_steps) {
      if (k == 0) throw ConfigError("sweep.msbbe_steps: zero steps");
      RunConfig v = c;
      v.train.n_update = k;
      jobs.push_back({"metrics_msbbe_steps_" + std::to_string(k), v});
    }
    return jobs;
  }
  if (c.preset == "sar_zero_shot") return detail::paired_contextual(c);
  return {{"metrics", c}};
}

inline std::vector<Job> ablate_jobs(const RunConfig& c, const std::string& axis) {
  std::vector<Job> jobs;
  if (axis == "aleatoric_layers") {
    if (c.train.posterior != train::PosteriorKind::variational_flow)
      throw ConfigError("aleatoric_layers ablation needs the variational_flow posterior");
    for (std::size_t k : c.aleatoric_layers) {
      RunConfig v = c;
      v.train.aleatoric_blocks = k;
      jobs.push_back({"metrics_aleatoric_layers_" + std::to_string(k), v});
    }
  } else if (axis == "pretrain_steps") {
    for (std::size_t k : c.pretrain_steps) {
      RunConfig v = c;
      v.train.n_pretrain = k;
      jobs.push_back({"metrics_pretrain_steps_" + std::to_string(k), v});
    }
  } else if (axis == "contextual") {
    jobs = detail::paired_contextual(c);
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "' (aleatoric_layers, pretrain_steps, contextual)");
  }
  return jobs;
}

/// Trains every job and writes its metrics. Provenance goes down first.
inline int execute(const Invocation& inv, const std::vector<Job>& jobs, const RunConfig& base,
                   const std::string& received, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  const fs::path dir = detail::output_dir(inv, base);
  try {
    fs::create_directories(dir);
    detail::write_text(dir / "config.received.ini", received);
    detail::write_text(dir / "config.resolved.ini", resolved_ini(base));
    for (const auto& j : jobs)
      if (jobs.size() > 1) detail::write_text(dir / (j.stem + ".resolved.ini"), resolved_ini(j.config));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }

  for (const auto& job : jobs) {
    const fs::path csv = dir / (job.stem + ".csv");
    train::RunMetrics m;
    try {
      auto env = make_env(job.config);
      const auto ds = make_dataset(job.config);
      for (std::uint64_t seed : job.config.train.seeds) {
        const std::size_t before = m.records.size();
        auto res = train::run_seed(job.config.train, *env, ds, seed, m);
        const auto& last = m.records.back();
        double ret = 0.0;
        for (std::size_t i = before; i < m.records.size(); ++i) ret += m.records[i].reward;
        out << job.stem << " seed " << seed << ": return " << ret << " over " << (m.records.size() - before)
            << " steps";
        if (job.config.env == EnvKind::search_rescue)
          out << ", victims " << last.victims_saved << ", hazards " << last.hazards_hit;
        if (res.pretrain.steps)
          out << ", s0 msbbe " << res.pretrain.msbbe_before << " -> " << res.pretrain.msbbe_after;
        out << '\n';
      }
      write_metrics_file(csv.string(), m);
    } catch (const train::TrainingDiverged& e) {
      err << "error: training diverged: " << e.what() << '\n';
      try {
        write_metrics_file(csv.string(), e.partial());
        err << "partial metrics kept in " << csv.string() << '\n';
      } catch (const std::exception& w) {
        err << "error: " << w.what() << '\n';
      }
      return kRuntimeError;
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << '\n';
      return kConfigError;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kRuntimeError;
    }
    out << "wrote " << csv.string() << '\n';
  }
  return kOk;
}

inline int run_command(const Invocation& inv, std::ostream& out, std::ostream& err) {
  std::string received;
  RunConfig c;
  std::vector<Job> jobs;
  try {
    c = detail::resolve_invocation(inv, &received);
    jobs = run_jobs(c);
    for (const auto& j : jobs) validate(j.config);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return execute(inv, jobs, c, received, out, err);
}

inline int ablate_command(const Invocation& inv, std::ostream& out, std::ostream& err) {
  std::string received;
  RunConfig c;
  std::vector<Job> jobs;
  try {
    c = detail::resolve_invocation(inv, &received);
    jobs = ablate_jobs(c, inv.axis);
    for (const auto& j : jobs) validate(j.config);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return execute(inv, jobs, c, received, out, err);
}

struct OracleTable {
  double q_correct, q_wrong, j_qbrl, j_listen, v_half;
  double printed_q_wrong, printed_j_qbrl;
  std::size_t sweeps;
};

inline OracleTable oracle_table(const envs::TigerParams& p, std::size_t resolution = 2001) {
  OracleTable t{};
  const auto q = oracles::contextual_q_values(p);
  t.q_correct = q.q_correct;
  t.q_wrong = q.q_wrong;
  t.j_qbrl = oracles::qbrl_value(p, 0.5);
  t.j_listen = oracles::listen_forever_value(p);
  oracles::BeliefGrid grid(p, resolution);
  t.sweeps = grid.solve();
  t.v_half = grid.value(0.5);
  const oracles::PrintedValues printed;
  t.printed_q_wrong = printed.q_wrong;
  t.printed_j_qbrl = printed.j_qbrl;
  return t;
}

/// Tiger reference values; the config supplies [tiger] only, so no preset is needed.
inline int oracle_command(const Invocation& inv, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  RunConfig c = preset("tiger");
  std::string received;
  try {
    c = detail::resolve_invocation(inv, &received, "tiger");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  OracleTable t;
  try {
    t = oracle_table(c.tiger);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  out << detail::fmt_row("q_correct", t.q_correct, "analytic");
  out << detail::fmt_row("q_wrong", t.q_wrong, "analytic");
  out << detail::fmt_row("J_QBRL", t.j_qbrl, "analytic");
  out << detail::fmt_row("J_listen", t.j_listen, "analytic");
  out << detail::fmt_row("V(0.5)", t.v_half, "value-iteration");
  out << detail::fmt_row("q_wrong", t.printed_q_wrong, "recorded (not asserted)");
  out << detail::fmt_row("J_QBRL", t.printed_j_qbrl, "recorded (not asserted)");
  out << "value iteration: " << t.sweeps << " sweeps at resolution 2001\n";

  const fs::path dir = detail::output_dir(inv, c);
  try {
    fs::create_directories(dir);
    detail::write_text(dir / "config.received.ini", received);
    detail::write_text(dir / "config.resolved.ini", resolved_ini(c));
    std::ostringstream csv;
    csv << "quantity,value,method\n";
    csv << "q_correct," << format_double(t.q_correct) << ",analytic\n";
    csv << "q_wrong," << format_double(t.q_wrong) << ",analytic\n";
    csv << "J_QBRL," << format_double(t.j_qbrl) << ",analytic\n";
    csv << "J_listen," << format_double(t.j_listen) << ",analytic\n";
    csv << "V(0.5)," << format_double(t.v_half) << ",value_iteration\n";
    csv << "q_wrong," << format_double(t.printed_q_wrong) << ",recorded\n";
    csv << "J_QBRL," << format_double(t.printed_j_qbrl) << ",recorded\n";
    detail::write_text(dir / "oracle.csv", csv.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace ben::cli
