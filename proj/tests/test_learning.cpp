#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "reference/binary_case.hpp"
#include "reference/binary_glm.hpp"
#include "wta/learning.hpp"

using namespace wta;
using doctest::Approx;

namespace {

// Input (C=1) -> hidden (C=2), K = 1.
struct SmallNet {
  Topology topo;
  Network net;
  SmallNet() : topo(make()), net(topo, FilterBank{{{1.0, 0.5}}, {-1.0, -0.5}}) {}
  static Topology make() {
    Topology t;
    t.add_circuit(1, CircuitRole::Input);
    t.add_circuit(2, CircuitRole::Hidden);
    t.connect(0, 1);
    return t;
  }
};

struct TaskNet {
  Topology topo;
  Network net;
  TaskNet() : topo(make()), net(topo, FilterBank{make_raised_cosine_bank(2, 4), make_somatic_filter(3.0, 4)}) {}
  static Topology make() {
    Topology t;
    for (int n = 0; n < 2; ++n) t.add_circuit(2, CircuitRole::Input);
    for (int n = 0; n < 2; ++n) t.add_circuit(2, CircuitRole::Hidden);
    for (int n = 0; n < 2; ++n) t.add_circuit(1, CircuitRole::Output);
    t.connect(0, 2);
    t.connect(1, 2);
    t.connect(0, 3);
    t.connect(1, 3);
    t.connect(2, 3);
    t.connect(3, 2);
    for (int o = 4; o < 6; ++o) {
      for (int pre = 0; pre < 4; ++pre) t.connect(pre, o);
    }
    return t;
  }
};

EncodedSequence random_sequence(std::uint64_t seed, int steps, int label) {
  EncodedSequence seq;
  seq.steps = steps;
  seq.sizes = {2, 2};
  seq.label = label;
  RngStream rng(seed, 3);
  for (int k = 0; k < steps * 2; ++k) {
    const double u = rng.uniform();
    seq.symbols.push_back(u < 0.5 ? SpikeSymbol::silence() : SpikeSymbol::unit(u < 0.75 ? 1 : 2));
  }
  return seq;
}

}  // namespace

TEST_CASE("log-probability gradient examples") {
  SmallNet s;
  std::vector<CircuitTraces> traces{{0.5, 0.0}, {0.0, 0.0, 0.2, -0.1}};
  const std::vector<double> probs{1.0 / 3.0, 1.0 / 3.0};

  const auto g1 = log_prob_gradient(s.net, 1, SpikeSymbol::unit(1), probs, traces);
  REQUIRE(g1.size() == 8);
  CHECK(g1[0] == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(g1[1] == Approx(-1.0 / 3.0).epsilon(1e-15));
  // feedback = post * som^T
  CHECK(g1[2] == Approx(2.0 / 3.0 * 0.2).epsilon(1e-15));
  CHECK(g1[3] == Approx(2.0 / 3.0 * -0.1).epsilon(1e-15));
  CHECK(g1[4] == Approx(-1.0 / 3.0 * 0.2).epsilon(1e-15));
  // synaptic = post * strace^T
  CHECK(g1[6] == Approx(2.0 / 3.0 * 0.5).epsilon(1e-15));
  CHECK(g1[7] == Approx(-1.0 / 3.0 * 0.5).epsilon(1e-15));

  const auto g0 = log_prob_gradient(s.net, 1, SpikeSymbol::silence(), probs, traces);
  CHECK(g0[0] == Approx(-1.0 / 3.0).epsilon(1e-15));
  CHECK(g0[1] == Approx(-1.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(log_prob_gradient(s.net, 1, SpikeSymbol::unit(3), probs, traces), std::invalid_argument);
  CHECK_THROWS_AS(log_prob_gradient(s.net, 1, SpikeSymbol::unit(1), std::vector<double>{0.5}, traces),
                  std::invalid_argument);
}

TEST_CASE("reference distribution") {
  CHECK(reference_log_prob(SpikeSymbol::unit(2), 0.3, 2) == Approx(std::log(0.15)).epsilon(1e-15));
  CHECK(reference_log_prob(SpikeSymbol::silence(), 0.3, 2) == Approx(std::log(0.7)).epsilon(1e-15));
  LogGuard guard;
  CHECK(reference_log_prob(SpikeSymbol::unit(1), 0.0, 2, &guard) == Approx(std::log(kLogFloor)));
  CHECK(guard.clamped == 1);
  CHECK(reference_log_prob(SpikeSymbol::silence(), 0.0, 2) == 0.0);
}

TEST_CASE("reward combines visible likelihood and hidden KL term") {
  Topology t;
  t.add_circuit(1, CircuitRole::Input);
  t.add_circuit(2, CircuitRole::Hidden);
  t.add_circuit(1, CircuitRole::Output);
  t.connect(0, 1);
  t.connect(1, 2);
  const Network net(t, FilterBank{{{1.0}}, {-1.0}});
  NetworkState st = net.make_state(1);
  st.potentials[1] = {0.0, 0.0};
  st.potentials[2] = {0.0};
  st.spikes[1] = SpikeSymbol::silence();
  st.spikes[2] = SpikeSymbol::unit(1);
  const double visible = std::log(0.5);
  const double hidden = std::log(1.0 / 3.0) - std::log(0.7);
  CHECK(reward(net, st, 0.0, 0.3) == Approx(visible).epsilon(1e-15));
  CHECK(reward(net, st, 1.0, 0.3) == Approx(visible - hidden).epsilon(1e-14));
  CHECK(reward(net, st, 2.5, 0.3) == Approx(visible - 2.5 * hidden).epsilon(1e-14));
  st.spikes[1] = SpikeSymbol::unit(2);
  CHECK(reward(net, st, 1.0, 0.3) == Approx(visible - (std::log(1.0 / 3.0) - std::log(0.15))).epsilon(1e-14));
}

TEST_CASE("baseline examples") {
  BaselineState bs(1);
  std::vector<double> b(1);
  baseline_step(std::vector<double>{0.0}, 5.0, 0.5, bs, b);
  CHECK(b[0] == 0.0);
  baseline_step(std::vector<double>{1.0}, 2.0, 0.5, bs, b);
  CHECK(b[0] == 2.0);
  baseline_step(std::vector<double>{2.0}, 5.0, 0.5, bs, b);
  CHECK(b[0] == Approx((0.5 * 2.0 + 4.0 * 5.0) / (0.5 + 4.0)).epsilon(1e-14));

  // A constant reward is reproduced exactly whatever the eligibility does.
  BaselineState c(3);
  std::vector<double> bc(3);
  RngStream rng(4, 0);
  for (int t = 0; t < 200; ++t) {
    const std::vector<double> e{rng.normal(0.0, 1.0), 1e-3 * rng.normal(0.0, 1.0), t % 7 == 3 ? 0.0 : 3.0};
    baseline_step(e, -1.7, 0.05, c, bc);
    for (double v : bc) CHECK(v == -1.7);
  }
  CHECK_THROWS_AS(baseline_step(std::vector<double>{1.0, 2.0}, 0.0, 0.5, bs, b), std::invalid_argument);
}

TEST_CASE("visible update unrolls to a discounted sum") {
  std::vector<double> theta{0.0, 1.0};
  TemporalAverage acc(0.5, 2);
  visible_update(theta, std::vector<double>{1.0, 2.0}, acc, 0.1);
  CHECK(theta[0] == Approx(0.1));
  CHECK(theta[1] == Approx(1.2));
  visible_update(theta, std::vector<double>{1.0, 0.0}, acc, 0.1);
  // acc = 0.5 * (1, 2) + (1, 0) = (1.5, 1)
  CHECK(theta[0] == Approx(0.25));
  CHECK(theta[1] == Approx(1.3));
  visible_update(theta, std::vector<double>{0.0, 0.0}, acc, 0.0);
  CHECK(theta[0] == Approx(0.25));
}

TEST_CASE("hidden update") {
  SUBCASE("without baseline") {
    std::vector<double> theta{0.0};
    TemporalAverage e(0.5), acc(0.5);
    std::vector<double> b(1);
    hidden_update(theta, std::vector<double>{1.0}, 2.0, e, nullptr, 0.05, acc, 0.1, b);
    CHECK(theta[0] == Approx(0.2));
    hidden_update(theta, std::vector<double>{1.0}, 2.0, e, nullptr, 0.05, acc, 0.1, b);
    // e = 1.5, acc = 0.5 * 2 + 2 * 1.5 = 4
    CHECK(e.scalar() == Approx(1.5));
    CHECK(acc.scalar() == Approx(4.0));
    CHECK(theta[0] == Approx(0.6));
  }
  SUBCASE("constant reward cancels exactly with the baseline") {
    std::vector<double> theta{0.3, -0.2};
    TemporalAverage e(0.2, 2), acc(0.2, 2);
    BaselineState bs(2);
    std::vector<double> b(2);
    RngStream rng(9, 0);
    for (int t = 0; t < 100; ++t) {
      hidden_update(theta, std::vector<double>{rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)}, -4.25, e, &bs,
                    0.05, acc, 0.5, b);
    }
    CHECK(theta[0] == 0.3);
    CHECK(theta[1] == -0.2);
  }
  SUBCASE("eta zero leaves parameters alone") {
    std::vector<double> theta{1.0};
    TemporalAverage e(0.2), acc(0.2);
    std::vector<double> b(1);
    hidden_update(theta, std::vector<double>{3.0}, 7.0, e, nullptr, 0.05, acc, 0.0, b);
    CHECK(theta[0] == 1.0);
    CHECK(acc.scalar() != 0.0);
  }
}

TEST_CASE("config validation and schedule") {
  LearnerConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.0;
  c.kappa = 1.0;
  CHECK_NOTHROW(c.validate());
  c.gamma = 0.0;
  CHECK_THROWS(c.validate());
  c = LearnerConfig{};
  c.kappa_b = 1.0;
  CHECK_THROWS(c.validate());
  c = LearnerConfig{};
  c.r = 1.0;
  CHECK_THROWS(c.validate());
  c = LearnerConfig{};
  c.eta = -1.0;
  CHECK_THROWS(c.validate());

  c = LearnerConfig{};
  c.eta = 0.04;
  CHECK(epoch_learning_rate(c, 0) == 0.04);
  CHECK(epoch_learning_rate(c, 1) == 0.02);
  CHECK(epoch_learning_rate(c, 3) == 0.005);
  c.halve_lr_per_epoch = false;
  CHECK(epoch_learning_rate(c, 3) == 0.04);
  CHECK(LearnerConfig::default_eta(8) == Approx(0.00625));
}

TEST_CASE("learner with eta zero does not move parameters") {
  TaskNet tn;
  const NetworkParams init = tn.net.init_params({0.5, 0.0, {}}, 2);
  NetworkParams params = init;
  NetworkState st = tn.net.make_state(2);
  Learner learner(tn.net, LearnerConfig{});
  const auto seq = random_sequence(1, 30, 1);
  for (int t = 0; t < seq.steps; ++t) {
    learner.train_step(st, params, make_clamp(tn.net, seq, t, StepMode::Training), 0.0);
  }
  CHECK(params == init);
}

TEST_CASE("make_clamp") {
  TaskNet tn;
  auto seq = random_sequence(1, 5, 1);
  const ClampMap train = make_clamp(tn.net, seq, 2, StepMode::Training);
  CHECK(train[0] == seq.at(2, 0));
  CHECK(train[1] == seq.at(2, 1));
  CHECK(!train[2].has_value());
  CHECK(train[4] == SpikeSymbol::silence());
  CHECK(train[5] == SpikeSymbol::unit(1));
  const ClampMap free = make_clamp(tn.net, seq, 2, StepMode::FreeRun);
  CHECK(!free[4].has_value());
  CHECK(!free[5].has_value());

  auto bad = seq;
  bad.sizes = {2, 1};
  CHECK_THROWS_AS(make_clamp(tn.net, bad, 0, StepMode::Training), std::invalid_argument);
  bad = seq;
  bad.sizes = {2};
  bad.symbols.resize(5);
  CHECK_THROWS_AS(make_clamp(tn.net, bad, 0, StepMode::Training), std::invalid_argument);
}

TEST_CASE("train_epoch rejects an empty dataset") {
  TaskNet tn;
  NetworkParams params = tn.net.zero_params();
  NetworkState st = tn.net.make_state(1);
  Learner learner(tn.net, LearnerConfig{});
  CHECK_THROWS_AS(train_epoch(tn.net, params, st, learner, {}, 0.01), std::invalid_argument);
}

TEST_CASE("single-unit learning matches the scalar reference") {
  SUBCASE("plain rule") {
    ref::Rule rule;
    rule.alpha = 0.0;
    rule.baseline = false;
    for (std::uint64_t seed : {1u, 2u, 3u}) CHECK(ref::trajectory_gap(seed, rule) <= 1e-12);
  }
  SUBCASE("KL term and baseline") {
    ref::Rule rule;
    rule.alpha = 1.0;
    rule.baseline = true;
    for (std::uint64_t seed : {1u, 2u, 3u}) CHECK(ref::trajectory_gap(seed, rule) <= 1e-12);
  }
}

TEST_CASE("repeated training on one example raises its reward") {
  TaskNet tn;
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    NetworkParams params = tn.net.init_params({0.1, 0.0, {}}, seed);
    NetworkState st = tn.net.make_state(seed);
    LearnerConfig cfg;
    cfg.alpha = 0.0;
    Learner learner(tn.net, cfg);
    const std::vector<EncodedSequence> data{random_sequence(seed, 30, static_cast<int>(seed % 2))};
    double first = 0.0;
    double last = 0.0;
    for (int epoch = 0; epoch < 50; ++epoch) {
      EpochOptions opt;
      opt.epoch = epoch;
      opt.track_accuracy = false;
      const EpochMetrics m = train_epoch(tn.net, params, st, learner, data, 0.01, opt);
      CHECK(std::isnan(m.train_acc));
      if (epoch < 5) first += m.example_mean_reward[0];
      if (epoch >= 45) last += m.example_mean_reward[0];
    }
    if (last > first) ++improved;
  }
  CHECK(improved >= 19);
}

TEST_CASE("prequential accuracy and progress rows") {
  TaskNet tn;
  NetworkParams params = tn.net.init_params({0.1, 0.0, {}}, 3);
  NetworkState st = tn.net.make_state(3);
  Learner learner(tn.net, LearnerConfig{});
  std::vector<EncodedSequence> data;
  for (int n = 0; n < 6; ++n) data.push_back(random_sequence(10 + n, 12, n % 2));
  std::vector<ProgressRow> rows;
  EpochOptions opt;
  opt.log_every = 2;
  opt.on_progress = [&](const ProgressRow& r) { rows.push_back(r); };
  const EpochMetrics m = train_epoch(tn.net, params, st, learner, data, 0.01, opt);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].example == 6);
  CHECK(m.train_acc >= 0.0);
  CHECK(m.train_acc <= 1.0);
  CHECK(m.hidden_rate >= 0.0);
  CHECK(m.example_mean_reward.size() == 6);

  const std::vector<std::size_t> order{5, 4, 3, 2, 1};
  opt.order = order;
  CHECK_THROWS_AS(train_epoch(tn.net, params, st, learner, data, 0.01, opt), std::invalid_argument);
}
