#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "../support/conjugate.hpp"
#include "ben/benmodel.hpp"
#include "ben/envs.hpp"
#include "fd_check.hpp"

using namespace ben::diff;
using namespace ben::model;
using ben::net::HistoryMode;
using ben::net::QNetConfig;

namespace {

QNetConfig tiny_tiger_net(HistoryMode mode = HistoryMode::recurrent) {
  QNetConfig c;
  c.mode = mode;
  c.state_dim = 3;
  c.n_actions = 3;
  c.pre_hidden = 8;
  c.gru_hidden = 2;
  c.post_hidden = 8;
  return c;
}

History tiger_history(std::vector<std::tuple<int, double, int>> steps) {
  History h{ben::envs::TigerEnv::one_hot(0), {}};
  for (auto [a, r, s] : steps) h.append(a, r, ben::envs::TigerEnv::one_hot(s));
  return h;
}

std::vector<double> flat_grads(const ParamStore& s) {
  std::vector<double> g;
  for (const auto& [_, e] : s.entries()) g.insert(g.end(), e.grad.values().begin(), e.grad.values().end());
  return g;
}

}  // namespace

TEST(Bootstrap, GammaZeroGivesRewards) {
  QNet net(tiny_tiger_net());
  ParamStore w;
  Rng rng(1);
  net.init(w, rng);
  History h = tiger_history({{2, -1.0, 1}, {2, -1.0, 2}, {0, 10.0, 0}});
  auto bs = bootstrap(net, w, 0.0, h, 0, h.length());
  ASSERT_EQ(bs.size(), 3u);
  EXPECT_EQ(bs[0].b, -1.0);
  EXPECT_EQ(bs[1].b, -1.0);
  EXPECT_EQ(bs[2].b, 10.0);
  EXPECT_EQ(bs[2].action, 0);
}

TEST(Bootstrap, ZeroQNetGivesRewardsForAnyGamma) {
  QNetConfig c = tiny_tiger_net();
  c.value_scale = 0.0;
  QNet net(c);
  ParamStore w;
  Rng rng(2);
  net.init(w, rng);
  History h = tiger_history({{2, -1.0, 0}, {1, -500.0, 0}});
  for (double g : {0.3, 0.9, 0.99}) {
    auto bs = bootstrap(net, w, g, h, 0, h.length());
    EXPECT_EQ(bs[0].b, -1.0);
    EXPECT_EQ(bs[1].b, -500.0);
    EXPECT_EQ(bs[0].q, 0.0);
  }
}

TEST(Bootstrap, HandComputedTwoSteps) {
  QNet net(tiny_tiger_net());
  ParamStore w;
  Rng rng(3);
  net.init(w, rng);
  History h = tiger_history({{2, -1.0, 1}, {1, 10.0, 0}});
  const double g = 0.9;
  // step the network by hand through the three prefixes
  auto [h0, q0] = ben::net::qnet_step(net, w, net.initial_state(), {0.0, h.s0, -1});
  auto [h1, q1] = ben::net::qnet_step(net, w, h0, {-1.0, ben::envs::TigerEnv::one_hot(1), 2});
  auto [h2, q2] = ben::net::qnet_step(net, w, h1, {10.0, ben::envs::TigerEnv::one_hot(0), 1});
  auto mx = [](const Tensor& q) { return *std::max_element(q.values().begin(), q.values().end()); };
  auto bs = bootstrap(net, w, g, h, 0, 2);
  ASSERT_EQ(bs.size(), 2u);
  EXPECT_NEAR(bs[0].b, -1.0 + g * mx(q1), 1e-10);
  EXPECT_NEAR(bs[1].b, 10.0 + g * mx(q2), 1e-10);
  EXPECT_NEAR(bs[0].q, q0[2], 1e-10);
  EXPECT_NEAR(bs[1].q, q1[1], 1e-10);
  EXPECT_EQ(bs[1].h_hat, h1);
}

TEST(Bootstrap, WindowNeedsTwoStates) {
  QNet net(tiny_tiger_net());
  ParamStore w;
  Rng rng(4);
  net.init(w, rng);
  History h = tiger_history({{2, -1.0, 1}});
  EXPECT_THROW(bootstrap(net, w, 0.9, h, 1, 1), std::invalid_argument);
  EXPECT_THROW(bootstrap(net, w, 0.9, h, 0, 2), std::out_of_range);
}

TEST(Bootstrap, TruncatedWindowZeroesFirstInput) {
  History h = tiger_history({{2, -1.0, 1}, {2, -1.0, 2}});
  auto o = h.observation(1, 1);
  EXPECT_EQ(o.prev_action, -1);
  EXPECT_EQ(o.prev_reward, 0.0);
  EXPECT_EQ(h.observation(1, 0).prev_action, 2);
  EXPECT_EQ(window_begin(10, 4), 6u);
  EXPECT_EQ(window_begin(3, 4), 0u);
  EXPECT_EQ(window_begin(10, 0), 0u);
}

TEST(Epistemic, IdentityInitialisation) {
  EpistemicConfig cfg;
  cfg.dim = 4;
  cfg.data_init = false;
  EpistemicNet ep(cfg);
  ParamStore psi;
  Rng rng(5);
  ep.init(psi, rng);
  for (int k = 0; k < 5; ++k) {
    Tensor z = normal_tensor({4}, rng);
    auto out = epistemic_sample(ep, psi, z);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.x[i], z[i], 1e-12);
    EXPECT_NEAR(out.logdet, 0.0, 1e-12);
  }
}

TEST(Epistemic, Deterministic) {
  EpistemicConfig cfg;
  cfg.dim = 3;
  EpistemicNet ep(cfg);
  ParamStore psi;
  Rng rng(6);
  ep.init(psi, rng);
  for (auto& [_, e] : psi.entries())
    for (auto& v : e.value.values()) v += 0.1 * standard_normal(rng);
  Tensor z = normal_tensor({3}, rng);
  EXPECT_EQ(ep.sample_value(psi, z), ep.sample_value(psi, z));
}

TEST(Epistemic, InverseMatchesForward) {
  EpistemicConfig cfg;
  cfg.dim = 3;
  EpistemicNet ep(cfg);
  ParamStore psi;
  Rng rng(7);
  ep.init(psi, rng);
  for (auto& [_, e] : psi.entries())
    for (auto& v : e.value.values()) v += 0.2 * standard_normal(rng);
  ben::flows::StoreProvider p(psi, ep.prefix());
  for (int k = 0; k < 20; ++k) {
    Tensor z = normal_tensor({3}, rng);
    auto f = ben::flows::flow_forward(ep.stack(), z, p);
    auto b = ben::flows::flow_inverse(ep.stack(), f.x, p, rng);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(b.x[i], z[i], 1e-8);
    EXPECT_NEAR(b.logdet, -f.logdet, 1e-8);
  }
}

// Affine stack set to a target Gaussian through its Cholesky factor.
TEST(Epistemic, SampleMomentsMatchTarget) {
  EpistemicConfig cfg;
  cfg.kind = EpistemicConfig::Kind::affine;
  cfg.dim = 2;
  cfg.data_init = false;
  EpistemicNet ep(cfg);
  ParamStore psi;
  Rng rng(8);
  ep.init(psi, rng);
  const double mu[2] = {1.0, -0.5};
  const double S[2][2] = {{1.0, 0.6}, {0.6, 0.8}};
  const double c00 = std::sqrt(S[0][0]);
  const double c10 = S[1][0] / c00;
  const double c11 = std::sqrt(S[1][1] - c10 * c10);
  const std::string lu = ben::flows::StoreProvider::layer_prefix(ep.prefix(), 1);
  psi.value(lu + "L").at(1, 0) = c10 / c00;
  psi.value(lu + "d")[0] = ben::flows::raw_for_scale(c00);
  psi.value(lu + "d")[1] = ben::flows::raw_for_scale(c11);
  psi.value(lu + "bias") = Tensor::vector({mu[0], mu[1]});
  const std::size_t n = 100000;
  double m[2] = {0, 0}, c[2][2] = {{0, 0}, {0, 0}};
  std::vector<Tensor> xs;
  xs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    xs.push_back(ep.draw(psi, rng));
    m[0] += xs.back()[0];
    m[1] += xs.back()[1];
  }
  m[0] /= n;
  m[1] /= n;
  for (const auto& x : xs)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) c[i][j] += (x[i] - m[i]) * (x[j] - m[j]) / (n - 1);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(m[i] - mu[i]), 3.0 * std::sqrt(S[i][i] / n));
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt((S[i][i] * S[j][j] + S[i][j] * S[i][j]) / n);
      EXPECT_LT(std::abs(c[i][j] - S[i][j]), 3.0 * se) << i << j;
    }
  }
}

// Full stack trained by reverse KL towards a correlated Gaussian.
TEST(Epistemic, TrainsTowardsTarget) {
  EpistemicConfig cfg;
  cfg.dim = 2;
  EpistemicNet ep(cfg);
  ParamStore psi;
  Rng rng(9);
  ep.init(psi, rng);
  PriorSpec target{Tensor::vector({1.0, -0.5}), Tensor::vector({0.5, 2.0})};
  AdamConfig adam;
  for (int k = 0; k < 2500; ++k) {
    adam.lr = 0.02 * (1.0 - k / 2500.0) + 1e-4;
    Tape t;
    std::vector<Var> terms;
    for (int j = 0; j < 8; ++j) {
      auto s = ep.sample(t, psi, t.constant(normal_tensor({2}, rng)));
      terms.push_back(neg(s.logdet) - target.log_density(t, s.value));
    }
    t.backward(mean(concat(terms)));
    adam_step(psi, adam);
  }
  double m[2] = {0, 0}, v[2] = {0, 0};
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    Tensor x = ep.draw(psi, rng);
    for (int i = 0; i < 2; ++i) {
      m[i] += x[i] / n;
      v[i] += x[i] * x[i] / n;
    }
  }
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(m[i], target.mean[i], 0.05);
    EXPECT_NEAR((v[i] - m[i] * m[i]) / target.variance[i], 1.0, 0.05);
  }
}

TEST(Aleatoric, LayoutAndDemand) {
  AleatoricConfig cfg;
  cfg.hidden_dim = 2;
  cfg.blocks = 2;
  FlowAleatoric al(cfg);
  EXPECT_EQ(al.param_dim(), 12u);
  EXPECT_EQ(al.conditioner_count(), 4u);
  EXPECT_EQ(al.stack().out_dim(), 1u);
  cfg.param_dim = 5;
  EXPECT_THROW(FlowAleatoric{cfg}, ShapeError);
  cfg.blocks = 0;
  cfg.param_dim = 0;
  EXPECT_THROW(FlowAleatoric{cfg}, std::invalid_argument);
}

TEST(Aleatoric, IdentityFlowIsShiftedGaussian) {
  AleatoricConfig cfg;
  cfg.hidden_dim = 2;
  cfg.conditioner_gain = 0.0;
  cfg.sigma_b = 2.0;
  FlowAleatoric al(cfg);
  ParamStore psi;
  Rng rng(10);
  al.init(psi, rng);
  Tape t;
  Var phi = t.constant(normal_tensor({12}, rng));
  Var h = t.constant(Tensor::vector({0.3, -0.2}));
  for (double q : {-3.0, 0.0, 4.5})
    for (double b : {-1.0, 0.5, 7.0}) {
      const double lp = al.log_prob(t, psi, false, phi, h, t.constant(q), t.constant(b), rng).item();
      const double y = (b - q) / 2.0;
      EXPECT_NEAR(lp, -0.5 * y * y - 0.5 * std::log(2 * std::numbers::pi) - std::log(2.0), 1e-10);
    }
  EXPECT_THROW(al.sample(t, psi, false, t.constant(Tensor::zeros({3})), h, t.constant(0.0), rng), ShapeError);
}

TEST(Elbo, IdentityCase) {
  EpistemicConfig ec;
  ec.dim = 12;
  ec.data_init = false;
  EpistemicNet ep(ec);
  AleatoricConfig ac;
  ac.hidden_dim = 2;
  ac.conditioner_gain = 0.0;
  FlowAleatoric al(ac);
  ParamStore psi;
  Rng rng(11);
  ep.init(psi, rng);
  al.init(psi, rng);
  BootstrapSample s;
  s.b = 0.0;
  s.q = 0.0;
  s.h_hat = Tensor::zeros({2});
  ElboOptions opt;
  opt.drop_prior = true;
  PriorSpec prior = PriorSpec::isotropic(12, 0.1);
  // b = q under the identity flow: -log N(0) and zero logdet
  EXPECT_NEAR(elbo_value(ep, al, psi, {s}, prior, opt, rng), 0.5 * std::log(2 * std::numbers::pi), 1e-10);
  s.q = 3.7;
  s.b = 3.7;
  EXPECT_NEAR(elbo_value(ep, al, psi, {s}, prior, opt, rng), 0.5 * std::log(2 * std::numbers::pi), 1e-10);
  // with the prior term: plus -log p(phi) at phi = z
  opt.drop_prior = false;
  Rng r1(1), r2(1);
  const double with = elbo_value(ep, al, psi, {s}, prior, opt, r1);
  Tape t(false);
  Tensor z = normal_tensor({12}, r2);
  const double lp = prior.log_density(t, t.constant(z)).item();
  EXPECT_NEAR(with, 0.5 * std::log(2 * std::numbers::pi) - lp, 1e-9);
}

TEST(Elbo, DoublingSamplesKeepsExpectation) {
  auto p = ben::testing::make_conjugate(12);
  EpistemicConfig cfg;
  cfg.kind = EpistemicConfig::Kind::affine;
  cfg.dim = 2;
  cfg.data_init = false;
  EpistemicNet ep(cfg);
  ParamStore psi;
  Rng rng(13);
  ep.init(psi, rng);
  auto estimate = [&](std::size_t n_mc, std::size_t reps) {
    ElboOptions opt;
    opt.n_mc = n_mc;
    std::vector<double> xs;
    for (std::size_t k = 0; k < reps; ++k) xs.push_back(elbo_value(ep, p.al, psi, p.samples, p.prior, opt, rng));
    double m = 0, v = 0;
    for (double x : xs) m += x / xs.size();
    for (double x : xs) v += (x - m) * (x - m) / (xs.size() - 1);
    return std::pair{m, std::sqrt(v / xs.size())};
  };
  auto [m1, s1] = estimate(1, 100000);
  auto [m2, s2] = estimate(2, 50000);
  EXPECT_LT(std::abs(m1 - m2), 3.0 * std::hypot(s1, s2));
}

TEST(Elbo, ConjugatePosteriorRecovered) {
  auto p = ben::testing::make_conjugate(14);
  auto fit = ben::testing::fit_conjugate(p, 5000, 15);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(fit.mean[i] / p.post_mean[i], 1.0, 0.02) << i;
    EXPECT_NEAR(fit.cov.at(i, i) / p.post_cov.at(i, i), 1.0, 0.02) << i;
  }
}

TEST(Elbo, ZeroScaleRaises) {
  AffineAleatoric al(2, 1, 0.0);
  EpistemicConfig cfg;
  cfg.kind = EpistemicConfig::Kind::affine;
  cfg.dim = 2;
  EpistemicNet ep(cfg);
  ParamStore psi;
  Rng rng(16);
  ep.init(psi, rng);
  BootstrapSample s;
  s.h_hat = Tensor::vector({0.1});
  EXPECT_THROW(elbo_value(ep, al, psi, {s}, PriorSpec::isotropic(2, 1.0), {}, rng), DomainError);
  ElboOptions bad;
  bad.n_mc = 0;
  AffineAleatoric ok(2, 1, 1.0);
  EXPECT_THROW(elbo_value(ep, ok, psi, {s}, PriorSpec::isotropic(2, 1.0), bad, rng), std::invalid_argument);
}

TEST(Elbo, GradientMatchesFiniteDifferences) {
  EpistemicConfig ec;
  ec.dim = 12;
  EpistemicNet ep(ec);
  AleatoricConfig ac;
  ac.hidden_dim = 2;
  ac.conditioner_gain = 0.5;
  FlowAleatoric al(ac);
  ParamStore psi;
  Rng rng(17);
  ep.init(psi, rng);
  al.init(psi, rng);
  for (auto& [_, e] : psi.entries())
    for (auto& v : e.value.values()) v += 0.05 * standard_normal(rng);
  std::vector<BootstrapSample> samples;
  for (int i = 0; i < 3; ++i) {
    BootstrapSample s;
    s.q = standard_normal(rng);
    s.b = s.q + standard_normal(rng);
    s.h_hat = normal_tensor({2}, rng);
    samples.push_back(s);
  }
  PriorSpec prior = PriorSpec::isotropic(12, 0.1);
  ElboOptions opt;
  opt.n_mc = 4;
  const double err = ben::testing::fd_store_rel_error(
      psi,
      [&](Tape& t, ParamStore& s) {
        Rng crn(99);  // common random numbers across evaluations
        return elbo_loss(t, ep, al, s, samples, prior, opt, crn);
      },
      1e-5, 6);
  EXPECT_LT(err, 1e-4);
}

TEST(Elbo, PosteriorConcentrates) {
  // data from a fixed phi*, held-out predictive log-likelihood over t in {10, 50, 200}
  const std::vector<double> phi_star = {0.7, -1.1};
  auto held = ben::testing::make_conjugate(18, 200, 0.5, 1.0, phi_star).samples;
  std::vector<double> ll, se;
  for (std::size_t t : {10, 50, 200}) {
    auto p = ben::testing::make_conjugate(19, t, 0.5, 1.0, phi_star);
    EpistemicConfig cfg;
    cfg.kind = EpistemicConfig::Kind::affine;
    cfg.dim = 2;
    cfg.data_init = false;
    EpistemicNet ep(cfg);
    ParamStore psi;
    Rng rng(20);
    ep.init(psi, rng);
    ElboOptions opt;
    opt.n_mc = 8;
    AdamConfig adam;
    for (int k = 0; k < 3000; ++k) {
      adam.lr = 0.03 * (1.0 - k / 3000.0) + 2e-4;
      Tape tp;
      tp.backward(elbo_loss(tp, ep, p.al, psi, p.samples, p.prior, opt, rng));
      adam_step(psi, adam);
    }
    // log of the posterior-predictive density, 300 phi draws, per held-out point
    std::vector<Tensor> phis;
    for (int k = 0; k < 300; ++k) phis.push_back(ep.draw(psi, rng));
    std::vector<double> vals;
    for (const auto& s : held) {
      double acc = 0.0;
      for (const auto& phi : phis) {
        Tape tp(false);
        acc += std::exp(p.al.log_prob(tp, psi, true, tp.constant(phi), tp.constant(s.h_hat), tp.constant(s.q),
                                      tp.constant(s.b), rng).item());
      }
      vals.push_back(std::log(acc / phis.size()));
    }
    double m = 0, v = 0;
    for (double x : vals) m += x / vals.size();
    for (double x : vals) v += (x - m) * (x - m) / (vals.size() - 1);
    ll.push_back(m);
    se.push_back(std::sqrt(v / vals.size()));
  }
  for (std::size_t k = 1; k < ll.size(); ++k) EXPECT_GE(ll[k], ll[k - 1] - se[k]) << k;
}

// sigma = 0 makes B identically q.
TEST(Msbbe, ZeroAtFixedPoint) {
  QNet net(tiny_tiger_net());
  ParamStore w, psi;
  Rng rng(21);
  net.init(w, rng);
  AffineAleatoric al(3, 2, 0.0);
  PriorSpec prior = PriorSpec::isotropic(3, 1.0);
  PriorPhi phis(prior);
  FlowSampler sampler(al, psi, phis);
  History h = tiger_history({{2, -1.0, 1}, {2, -1.0, 0}});
  Tape t;
  EXPECT_EQ(msbbe_loss(t, net, w, h, sampler, 0.9, {}, rng).item(), 0.0);
  MsbbeOptions bad;
  bad.n_mc = 0;
  EXPECT_THROW(msbbe_loss(t, net, w, h, sampler, 0.9, bad, rng), std::invalid_argument);
}

TEST(Msbbe, DoubleSamplingIsUnbiased) {
  QNet net(tiny_tiger_net());
  ParamStore w, psi;
  Rng rng(22);
  net.init(w, rng);
  const double sigma = 0.7;
  AffineAleatoric al(3, 2, sigma);
  PriorSpec prior{Tensor::vector({0.5, -1.0, 0.8}), Tensor::vector({0.3, 0.3, 0.3})};
  PriorPhi phis(prior);
  FlowSampler sampler(al, psi, phis);
  History h = tiger_history({{2, -1.0, 1}});
  // exact: E[b - q_a] = sigma mu . f(h_hat) for every action
  w.zero_grad();
  {
    Tape t;
    Unroll u = unroll(t, net, w, h, 0, 1);
    std::vector<Var> terms;
    for (std::size_t i = 0; i <= 1; ++i) {
      Var e = scale(sum(t.constant(prior.mean) * al.features(t, u.h[i])), sigma);
      terms.push_back(square(e));
    }
    t.backward(mean(concat(terms)));
  }
  const std::vector<double> exact = flat_grads(w);
  const std::size_t n = 100000;
  std::vector<double> m(exact.size(), 0.0), m2(exact.size(), 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    w.zero_grad();
    Tape t;
    t.backward(msbbe_loss(t, net, w, h, sampler, 0.9, {}, rng));
    auto g = flat_grads(w);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] += g[i];
      m2[i] += g[i] * g[i];
    }
  }
  w.zero_grad();
  // the five largest exact components
  std::vector<std::size_t> idx(exact.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(exact[a]) > std::abs(exact[b]); });
  for (std::size_t j = 0; j < 5; ++j) {
    const std::size_t i = idx[j];
    const double mean_g = m[i] / n;
    const double se = std::sqrt((m2[i] / n - mean_g * mean_g) / (n - 1));
    EXPECT_LT(std::abs(mean_g - exact[i]), 3.0 * se) << "component " << i << " exact " << exact[i];
  }
}

namespace {
// Returns the two halves of each draw pair in reverse order.
class SwappedSampler : public BellmanSampler {
 public:
  explicit SwappedSampler(const BellmanSampler& inner) : inner_(inner) {}
  Var sample(Tape& t, const BellmanQuery& q, int a, Rng& rng) const override {
    if (pending_.valid()) {
      Var out = pending_;
      pending_ = Var();
      return out;
    }
    Var first = inner_.sample(t, q, a, rng);
    pending_ = first;
    return inner_.sample(t, q, a, rng);
  }

 private:
  const BellmanSampler& inner_;
  mutable Var pending_;
};
}  // namespace

TEST(Msbbe, SwapSymmetry) {
  QNet net(tiny_tiger_net());
  ParamStore w;
  Rng rng(23);
  net.init(w, rng);
  TigerExactPredictive model;
  PushforwardSampler base(model);
  SwappedSampler swapped(base);
  History h = tiger_history({{2, -1.0, 1}, {2, -1.0, 1}});
  const std::size_t n = 10000;
  double a = 0, b = 0, aa = 0, bb = 0;
  Rng r1(5), r2(5), r3(6);
  for (std::size_t k = 0; k < n; ++k) {
    Tape t(false);
    const double x = msbbe_loss(t, net, w, h, base, 0.9, {}, r1).item();
    const double y = msbbe_loss(t, net, w, h, swapped, 0.9, {}, r2).item();
    EXPECT_EQ(x, y);  // same draws, product order swapped
    const double z = msbbe_loss(t, net, w, h, swapped, 0.9, {}, r3).item();
    a += x;
    aa += x * x;
    b += z;
    bb += z * z;
  }
  const double ma = a / n, mb = b / n;
  const double se = std::sqrt((aa / n - ma * ma) / n + (bb / n - mb * mb) / n);
  EXPECT_LT(std::abs(ma - mb), 3.0 * se);
}

TEST(Msbbe, GradientMatchesFiniteDifferences) {
  QNet net(tiny_tiger_net());
  ParamStore w;
  Rng rng(24);
  net.init(w, rng);
  TigerExactPredictive model;
  PushforwardSampler sampler(model);
  History h = tiger_history({{2, -1.0, 1}, {2, -1.0, 2}});
  const double err = ben::testing::fd_store_rel_error(
      w,
      [&](Tape& t, ParamStore& s) {
        Rng crn(7);
        return msbbe_loss(t, net, s, h, sampler, 0.9, {}, crn);
      },
      1e-6, 8);
  EXPECT_LT(err, 1e-4);

  // flow sampler path: the gradient runs through q and h_hat into the conditioners
  AleatoricConfig ac;
  ac.hidden_dim = 2;
  ac.conditioner_gain = 0.5;
  FlowAleatoric al(ac);
  ParamStore psi;
  al.init(psi, rng);
  PriorSpec prior = PriorSpec::isotropic(12, 0.1);
  PriorPhi phis(prior);
  FlowSampler fs(al, psi, phis);
  const double err2 = ben::testing::fd_store_rel_error(
      w,
      [&](Tape& t, ParamStore& s) {
        Rng crn(8);
        return msbbe_loss(t, net, s, h, fs, 0.9, {}, crn);
      },
      1e-6, 8);
  EXPECT_LT(err2, 1e-4);
}

TEST(Msbbe, ExactVersionHasZeroAtFixedPoint) {
  // a zero Q-net under gamma = 0 against rewards that are identically zero
  QNetConfig c = tiny_tiger_net();
  c.value_scale = 0.0;
  QNet net(c);
  ParamStore w;
  Rng rng(25);
  net.init(w, rng);
  ben::envs::TigerParams tp;
  tp.r_tiger = tp.r_gold = tp.r_listen = 0.0;
  TigerExactPredictive model(tp);
  History h = tiger_history({{2, 0.0, 1}});
  EXPECT_EQ(exact_msbbe_value(net, w, h, model, 0.9, false), 0.0);
}

TEST(Predictive, DeterministicFlowReturnsConstant) {
  QNet net(tiny_tiger_net());
  ParamStore w, psi;
  Rng rng(26);
  net.init(w, rng);
  AffineAleatoric al(3, 2, 0.0);
  PriorSpec prior = PriorSpec::isotropic(3, 1.0);
  PriorPhi phis(prior);
  FlowSampler sampler(al, psi, phis);
  History h = tiger_history({{2, -1.0, 1}});
  auto [hh, q] = ben::net::qnet_step(net, w, ben::net::qnet_step(net, w, net.initial_state(), {0, h.s0, -1}).first,
                                     h.observation(1));
  for (int a = 0; a < 3; ++a) {
    auto e = predictive_bellman(net, w, h, 1, a, sampler, 0.9, 50, rng);
    EXPECT_EQ(e.mean, q[a]);
    EXPECT_EQ(e.std_error, 0.0);
  }
  EXPECT_THROW(predictive_bellman(net, w, h, 1, 0, sampler, 0.9, 0, rng), std::invalid_argument);
}

TEST(Predictive, AffineFlowMean) {
  QNet net(tiny_tiger_net());
  ParamStore w, psi;
  Rng rng(27);
  net.init(w, rng);
  const double sigma = 1.5;
  AffineAleatoric al(3, 2, sigma);
  PriorSpec prior{Tensor::vector({0.4, 2.0, -1.0}), Tensor::vector({0.5, 0.2, 1.0})};
  PriorPhi phis(prior);
  FlowSampler sampler(al, psi, phis);
  History h = tiger_history({{2, -1.0, 2}});
  Tape t(false);
  Unroll u = unroll(t, net, w, h, 0, 1);
  const double mu_f = sum(t.constant(prior.mean) * al.features(t, u.h[1])).item();
  auto e = predictive_bellman(net, w, h, 1, 1, sampler, 0.9, 100000, rng);
  EXPECT_LT(std::abs(e.mean - (u.q[1][1] + sigma * mu_f)), 3.0 * e.std_error);
}

TEST(Predictive, TheoremOneOnTiger) {
  QNet net(tiny_tiger_net());
  ParamStore w;
  Rng rng(28);
  net.init(w, rng);
  for (auto& [_, e] : w.entries())
    for (auto& v : e.value.values()) v *= 3.0;
  TigerExactPredictive model;
  PushforwardSampler sampler(model);
  History h = tiger_history({{2, -1.0, 1}, {2, -1.0, 1}, {2, -1.0, 0}});
  for (int a = 0; a < 3; ++a) {
    const double exact = exact_bellman_value(net, w, h, 3, a, model, 0.9);
    auto e = predictive_bellman(net, w, h, 3, a, sampler, 0.9, 20000, rng);
    EXPECT_LT(std::abs(e.mean - exact), 3.0 * e.std_error + 1e-12) << "action " << a;
  }
}

TEST(Predictive, TigerPosteriorEnumeration) {
  TigerExactPredictive model;
  History h = tiger_history({{2, -1.0, 1}, {2, -1.0, 1}});
  const double bl = model.tiger_left(h, 2);
  const double lr = 0.85 / 0.10;
  EXPECT_NEAR(bl, lr * lr / (1 + lr * lr), 1e-12);
  auto outs = model.enumerate(h, 2, 2);
  double total = 0, near = 0;
  for (const auto& o : outs) {
    total += o.prob;
    if (argmax(o.state) == 1) near += o.prob;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(near, bl * 0.85 + (1 - bl) * 0.10, 1e-12);
  // after opening door 1 and finding gold, the tiger is behind door 2
  History g = tiger_history({{0, 10.0, 0}});
  EXPECT_EQ(model.tiger_left(g, 1), 0.0);
  auto o = model.enumerate(g, 1, 1);
  ASSERT_EQ(o.size(), 1u);
  EXPECT_EQ(o[0].reward, -500.0);
}

TEST(Predictive, SarSharedDynamics) {
  ben::envs::SarParams p;
  SarSharedPredictive model(p);
  Tensor s = Tensor::zeros({14});
  History h{s, {}};
  auto mv = model.enumerate(h, 0, ben::envs::SearchRescueEnv::up);
  ASSERT_EQ(mv.size(), 1u);
  EXPECT_EQ(mv[0].state[1], 1.0);
  s[0] = 3;
  History edge{s, {}};
  auto door = model.enumerate(edge, 0, ben::envs::SearchRescueEnv::right);
  double er = 0, tot = 0;
  for (const auto& o : door) {
    er += o.prob * o.reward;
    tot += o.prob;
    EXPECT_EQ(o.state[0], 3.0);
  }
  EXPECT_NEAR(tot, 1.0, 1e-12);
  EXPECT_NEAR(er, ben::envs::sar_r_prior(p), 1e-12);
  EXPECT_THROW(model.enumerate(h, 0, ben::envs::SearchRescueEnv::listen), std::invalid_argument);
}

TEST(Predictive, SimulatorSnapshots) {
  ben::envs::TigerEnv env;
  env.reset_fixed(ben::envs::TigerEnv::kTigerRight);
  SimulatorPredictive sim;
  sim.push(env);
  Rng rng(29);
  History h{ben::envs::TigerEnv::one_hot(0), {}};
  EXPECT_EQ(sim.sample(h, 0, 0, rng).reward, 10.0);
  EXPECT_EQ(sim.sample(h, 0, 1, rng).reward, -500.0);
  EXPECT_EQ(env.steps(), 0u);  // snapshots leave the source untouched
  EXPECT_THROW(sim.sample(h, 1, 0, rng), std::out_of_range);
}

TEST(Pushforward, MatchesQuadrature) {
  QNetConfig c = tiny_tiger_net();
  c.value_scale = 0.3;
  QNet net(c);
  ParamStore w;
  Rng rng(30);
  net.init(w, rng);
  History h = tiger_history({{2, -1.0, 1}});
  auto logp = [](double r) {
    auto n = [](double x, double m, double s) {
      return std::exp(-0.5 * (x - m) * (x - m) / (s * s)) / (s * std::sqrt(2 * std::numbers::pi));
    };
    return std::log(0.6 * n(r, -1.0, 0.5) + 0.4 * n(r, 1.5, 0.3));
  };
  BijectiveBellmanDensity dens(net, w, h, 2, ben::envs::TigerEnv::one_hot(1), 0.9, logp, -6.0, 6.0);
  // quadrature: p_B(b) = int p_R(r) K_eps(b - beta(r)) dr
  const std::size_t n = 60000;
  const double lo = -4.0, hi = 4.0, dr = (hi - lo) / n, eps = 0.004;
  std::vector<double> rs(n + 1), bs(n + 1), pr(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    rs[i] = lo + dr * i;
    bs[i] = dens.beta(rs[i]);
    pr[i] = std::exp(logp(rs[i]));
  }
  for (std::size_t i = 1; i <= n; ++i) ASSERT_GT(bs[i], bs[i - 1]) << "beta must be increasing";
  double worst = 0.0;
  for (int k = 0; k < 60; ++k) {
    const double b = bs[n / 10] + (bs[9 * n / 10] - bs[n / 10]) * k / 59.0;
    double q = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const double u = (b - bs[i]) / eps;
      if (std::abs(u) > 8) continue;
      q += (i == 0 || i == n ? 0.5 : 1.0) * pr[i] * std::exp(-0.5 * u * u) / (eps * std::sqrt(2 * std::numbers::pi)) * dr;
    }
    worst = std::max(worst, std::abs(std::exp(dens.log_density(b)) - q));
  }
  EXPECT_LT(worst, 1e-2);
  EXPECT_NEAR(dens.beta(dens.inverse(0.3)), 0.3, 1e-10);
}
