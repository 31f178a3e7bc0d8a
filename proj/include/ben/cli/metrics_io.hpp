#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "ben/trainer/metrics.hpp"

namespace ben::cli {

inline constexpr const char* kMetricsHeader =
    "seed,episode,t,action,reward,cum_return,victims_saved,hazards_hit,msbbe,elbo";

/// Shortest round-trip form; "nan" for steps that logged no loss.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("to_chars failed");
  return std::string(buf, p);
}

inline void write_metrics(std::ostream& os, const train::RunMetrics& m) {
  os << kMetricsHeader << '\n';
  for (const auto& r : m.records) {
    os << r.seed << ',' << r.episode << ',' << r.t << ',' << r.action << ',' << format_double(r.reward) << ','
       << format_double(r.cum_return) << ',' << r.victims_saved << ',' << r.hazards_hit << ','
       << format_double(r.msbbe) << ',' << format_double(r.elbo) << '\n';
  }
}

inline void write_metrics_file(const std::string& path, const train::RunMetrics& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  write_metrics(f, m);
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace ben::cli
