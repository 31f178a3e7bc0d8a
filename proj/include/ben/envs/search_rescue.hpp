#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "ben/envs/cmdp.hpp"

namespace ben::envs {

struct SarParams {
  int n_grid = 7;
  int n_victims = 4;
  int n_hazards = 8;
  double r_victim = 10.0;
  double r_hazard = -100.0;
  double r_listen = -1.0;
  double sigma_noise = 0.1;
  double gamma = 0.99;
  int episode_cap = 0;  // 0 means 5 * n_grid^2

  int half() const { return (n_grid - 1) / 2; }
  int cap() const { return episode_cap > 0 ? episode_cap : 5 * n_grid * n_grid; }
  int n_doors() const { return 4 * n_grid; }
  int n_entities() const { return n_victims + n_hazards; }
  void validate() const {
    if (n_grid < 3 || n_grid % 2 == 0) throw std::invalid_argument("search-rescue: grid size must be odd and >= 3");
    if (n_victims < 0 || n_hazards < 0 || n_entities() > n_doors())
      throw std::invalid_argument("search-rescue: more entities than doors");
    if (sigma_noise < 0) throw std::invalid_argument("search-rescue: negative noise");
  }
};

/// Door k sits outside boundary square `cell` in direction `dir`.
struct Door {
  int x, y;  // boundary square the door is opened from
  int dir;   // movement action that opens it
};

/// Grid with coordinates -half..half; actions up (y+1), down, left (x-1),
/// right, listen. State (x, y, victim channels..., hazard channels...).
class SearchRescueEnv : public CmdpEnv {
 public:
  enum Action { up = 0, down = 1, left = 2, right = 3, listen = 4 };

  explicit SearchRescueEnv(SarParams p = {}) : p_(p) {
    p_.validate();
    doors_ = make_doors(p_);
  }

  std::string name() const override { return "search_rescue"; }
  std::size_t n_actions() const override { return 5; }
  std::size_t state_dim() const override { return 2 + static_cast<std::size_t>(p_.n_entities()); }
  double gamma() const override { return p_.gamma; }
  const SarParams& params() const { return p_; }

  static std::vector<Door> make_doors(const SarParams& p) {
    std::vector<Door> d;
    const int h = p.half();
    for (int x = -h; x <= h; ++x) d.push_back({x, h, up});
    for (int x = -h; x <= h; ++x) d.push_back({x, -h, down});
    for (int y = -h; y <= h; ++y) d.push_back({-h, y, left});
    for (int y = -h; y <= h; ++y) d.push_back({h, y, right});
    return d;
  }

  Tensor reset(Rng& rng) override {
    std::vector<int> idx(doors_.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<int> assign(idx.begin(), idx.begin() + p_.n_entities());
    std::vector<std::array<double, 2>> jitter(assign.size());
    for (auto& j : jitter) j = {diff::uniform01(rng) - 0.5, diff::uniform01(rng) - 0.5};
    return reset_fixed(assign, jitter);
  }

  /// Entity e (victims first) behind door assign[e], offset jitter[e] from
  /// the centre of the outside square.
  Tensor reset_fixed(const std::vector<int>& assign, const std::vector<std::array<double, 2>>& jitter) {
    if (static_cast<int>(assign.size()) != p_.n_entities() || jitter.size() != assign.size())
      throw std::invalid_argument("search-rescue: context size mismatch");
    std::vector<int> seen(doors_.size(), 0);
    for (int a : assign) {
      if (a < 0 || a >= p_.n_doors() || seen[static_cast<std::size_t>(a)]++)
        throw std::invalid_argument("search-rescue: invalid door assignment");
    }
    assign0_ = assign;
    jitter0_ = jitter;
    door_of_ = assign;
    loc_.assign(assign.size(), {0.0, 0.0});
    for (std::size_t e = 0; e < assign.size(); ++e) {
      const Door& d = doors_[static_cast<std::size_t>(assign[e])];
      const auto [dx, dy] = delta(d.dir);
      loc_[e] = {d.x + dx + jitter[e][0], d.y + dy + jitter[e][1]};
    }
    rescued_.assign(static_cast<std::size_t>(p_.n_victims), false);
    x_ = y_ = 0;
    steps_ = 0;
    victims_saved_ = hazards_hit_ = 0;
    started_ = true;
    return observe(false, nullptr);
  }

  Tensor restart() override {
    if (!started_) throw std::logic_error("search-rescue: restart before reset");
    const auto a = assign0_;
    const auto j = jitter0_;
    return reset_fixed(a, j);
  }

  StepResult step(int action, Rng& rng) override {
    check_action(action);
    ++steps_;
    double r = 0.0;
    bool listened = false;
    if (action == listen) {
      r = p_.r_listen;
      listened = true;
    } else {
      const auto [dx, dy] = delta(action);
      const int nx = x_ + dx, ny = y_ + dy;
      if (std::abs(nx) <= p_.half() && std::abs(ny) <= p_.half()) {
        x_ = nx;
        y_ = ny;
      } else {
        r = open_door(door_index(x_, y_, action));
      }
    }
    const bool done = static_cast<int>(steps_) >= p_.cap();
    return {r, observe(listened, &rng), done};
  }

  std::unique_ptr<CmdpEnv> clone() const override { return std::make_unique<SearchRescueEnv>(*this); }

  int x() const { return x_; }
  int y() const { return y_; }
  int victims_saved() const { return victims_saved_; }
  int hazards_hit() const { return hazards_hit_; }
  const std::vector<int>& assignment() const { return door_of_; }
  const std::vector<Door>& doors() const { return doors_; }
  std::array<double, 2> entity_location(std::size_t e) const { return loc_.at(e); }

  int door_index(int x, int y, int dir) const {
    for (std::size_t k = 0; k < doors_.size(); ++k)
      if (doors_[k].x == x && doors_[k].y == y && doors_[k].dir == dir) return static_cast<int>(k);
    return -1;
  }

  static std::pair<int, int> delta(int dir) {
    switch (dir) {
      case up: return {0, 1};
      case down: return {0, -1};
      case left: return {-1, 0};
      case right: return {1, 0};
      default: return {0, 0};
    }
  }

  /// Listen channel mean (noise-free) for entity e at the agent position.
  double channel_mean(std::size_t e) const {
    const double dx = loc_[e][0] - x_, dy = loc_[e][1] - y_;
    return std::exp(-(dx * dx + dy * dy) / p_.n_grid);
  }

 private:
  double open_door(int door) {
    for (std::size_t e = 0; e < door_of_.size(); ++e) {
      if (door_of_[e] != door) continue;
      if (static_cast<int>(e) < p_.n_victims) {
        if (rescued_[e]) return 0.0;
        rescued_[e] = true;
        ++victims_saved_;
        const double far = p_.n_grid * 1000.0;
        loc_[e] = {far, far};
        door_of_[e] = -1;
        return p_.r_victim;
      }
      ++hazards_hit_;
      return p_.r_hazard;
    }
    return 0.0;
  }

  Tensor observe(bool listened, Rng* rng) const {
    Tensor s = Tensor::zeros({state_dim()});
    s[0] = x_;
    s[1] = y_;
    if (listened)
      for (std::size_t e = 0; e < loc_.size(); ++e) {
        const double dx = loc_[e][0] - x_, dy = loc_[e][1] - y_;
        const double eta = p_.sigma_noise * diff::standard_normal(*rng);
        s[2 + e] = std::exp(-(dx * dx + dy * dy) / p_.n_grid + eta);
      }
    return s;
  }

  SarParams p_;
  std::vector<Door> doors_;
  std::vector<int> door_of_;
  std::vector<int> assign0_;
  std::vector<std::array<double, 2>> jitter0_;
  std::vector<std::array<double, 2>> loc_;
  std::vector<bool> rescued_;
  int x_ = 0, y_ = 0;
  int victims_saved_ = 0, hazards_hit_ = 0;
};

/// (state, action) pairs whose dynamics are shared by every context.
struct PriorPair {
  enum class Kind { interior_move, boundary_door };
  Kind kind;
  Tensor state;
  int action;
  Tensor next_state;  // door pairs: the agent stays put
  double reward;      // door pairs: prior expected reward
};

struct PriorDataset {
  std::vector<PriorPair> pairs;
  double r_prior = 0.0;
  bool listening_demonstrations = false;  // zero-shot: simulate prior MDPs with listening
  bool empty() const { return pairs.empty() && !listening_demonstrations; }
};

struct PriorDatasetConfig {
  bool interior_moves = true;
  bool boundary_doors = true;
  bool listening_demonstrations = false;
};

inline double sar_r_prior(const SarParams& p) {
  return p.n_victims * p.r_victim / (4.0 * p.n_grid) + p.n_hazards * p.r_hazard / (4.0 * p.n_grid);
}

inline PriorDataset build_prior_dataset(const SarParams& p, const PriorDatasetConfig& cfg) {
  p.validate();
  PriorDataset ds;
  ds.r_prior = sar_r_prior(p);
  ds.listening_demonstrations = cfg.listening_demonstrations;
  const int h = p.half();
  const std::size_t dim = 2 + static_cast<std::size_t>(p.n_entities());
  auto state = [&](int x, int y) {
    Tensor s = Tensor::zeros({dim});
    s[0] = x;
    s[1] = y;
    return s;
  };
  if (cfg.interior_moves)
    for (int x = -h + 1; x <= h - 1; ++x)
      for (int y = -h + 1; y <= h - 1; ++y)
        for (int a = 0; a < 4; ++a) {
          const auto [dx, dy] = SearchRescueEnv::delta(a);
          ds.pairs.push_back({PriorPair::Kind::interior_move, state(x, y), a, state(x + dx, y + dy), 0.0});
        }
  if (cfg.boundary_doors)
    for (const Door& d : SearchRescueEnv::make_doors(p))
      ds.pairs.push_back({PriorPair::Kind::boundary_door, state(d.x, d.y), d.dir, state(d.x, d.y), ds.r_prior});
  return ds;
}

}  // namespace ben::envs
