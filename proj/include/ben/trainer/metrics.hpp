#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ben::train {

struct StepRecord {
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  std::size_t t = 0;
  int action = 0;
  double reward = 0.0;
  double cum_return = 0.0;  // within the episode
  int victims_saved = 0;
  int hazards_hit = 0;
  double msbbe = std::numeric_limits<double>::quiet_NaN();
  double elbo = std::numeric_limits<double>::quiet_NaN();
};

struct RunMetrics {
  std::vector<StepRecord> records;

  void append(const StepRecord& r) { records.push_back(r); }

  /// Undiscounted return of each (seed, episode), in order of appearance.
  std::vector<double> episode_returns() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const bool last = i + 1 == records.size() || records[i + 1].seed != records[i].seed ||
                        records[i + 1].episode != records[i].episode;
      if (last) out.push_back(records[i].cum_return);
    }
    return out;
  }

  double total_return() const {
    double s = 0.0;
    for (const auto& r : records) s += r.reward;
    return s;
  }

  const StepRecord& last() const {
    if (records.empty()) throw std::logic_error("no records");
    return records.back();
  }
};

/// Non-finite loss or gradient; carries what was logged before the failure.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, RunMetrics partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const RunMetrics& partial() const { return partial_; }

 private:
  RunMetrics partial_;
};

}  // namespace ben::train
