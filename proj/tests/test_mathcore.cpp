#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "wta/mathcore.hpp"
#include "wta/oracle.hpp"
#include "wta/rng.hpp"

using namespace wta;
using doctest::Approx;

TEST_CASE("spike symbols") {
  CHECK(SpikeSymbol::silence().is_silent());
  CHECK(SpikeSymbol::unit(2).index() == 2);
  CHECK(SpikeSymbol::unit(2).valid_for(2));
  CHECK_FALSE(SpikeSymbol::unit(3).valid_for(2));
  CHECK(SpikeSymbol::unit(2).to_vector(3) == std::vector<double>{0, 1, 0});
  CHECK(SpikeSymbol::silence().to_vector(2) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(SpikeSymbol::unit(4).to_vector(2), std::invalid_argument);
}

TEST_CASE("negative cross-entropy") {
  const std::vector<double> zero{0, 0};
  CHECK(neg_cross_entropy(zero, zero) == 0.0);
  CHECK(neg_cross_entropy(std::vector<double>{1, 0}, std::vector<double>{1.0 / 3, 1.0 / 3}) ==
        Approx(std::log(1.0 / 3)).epsilon(1e-12));
  CHECK(neg_cross_entropy(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) ==
        Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(neg_cross_entropy(zero, std::vector<double>{0.1}), std::invalid_argument);

  LogGuard guard;
  const double v = neg_cross_entropy(std::vector<double>{1, 0}, std::vector<double>{0, 0.5}, &guard);
  CHECK(v == Approx(std::log(kLogFloor)));
  CHECK(guard.clamped == 1);
}

TEST_CASE("KL divergence") {
  const std::vector<double> a{0.2, 0.3};
  CHECK(kl_divergence(a, a) == Approx(0.0).epsilon(1e-15));
  CHECK(kl_divergence(std::vector<double>{1, 0}, std::vector<double>{1.0 / 3, 1.0 / 3}) ==
        Approx(-std::log(1.0 / 3)).epsilon(1e-12));
  CHECK(kl_divergence(std::vector<double>{0, 0}, std::vector<double>{0.5, 0.25}) ==
        Approx(-std::log(0.25)).epsilon(1e-12));

  RngStream rng(3, 0);
  auto draw = [&](std::vector<double>& v) {
    double total = 0.0;
    for (double& x : v) total += (x = rng.uniform());
    const double mass = rng.uniform();
    for (double& x : v) x *= mass / total;
  };
  double worst = 0.0;
  for (int n = 0; n < 10000; ++n) {
    std::vector<double> p(3), q(3);
    draw(p);
    draw(q);
    worst = std::min(worst, kl_divergence(p, q));
  }
  CHECK(worst >= -1e-12);
}

TEST_CASE("temporal average") {
  TemporalAverage avg(0.5);
  avg.step(1.0);
  CHECK(avg.scalar() == 1.0);
  avg.step(1.0);
  CHECK(avg.scalar() == 1.5);
  avg.step(1.0);
  CHECK(avg.scalar() == 1.75);

  TemporalAverage zero(0.2, 3);
  for (int t = 0; t < 10; ++t) zero.step(std::vector<double>{0, 0, 0});
  CHECK(zero.value()[1] == 0.0);

  TemporalAverage limit(0.2);
  for (int t = 0; t < 100; ++t) limit.step(2.0);
  CHECK(std::abs(limit.scalar() - 2.5) < 1e-9);

  TemporalAverage unrolled(0.3, 1);
  const std::vector<double> f{0.4, -1.2, 2.5, 0.7};
  for (double v : f) unrolled.step(v);
  double expected = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) expected += std::pow(0.3, static_cast<double>(k)) * f[f.size() - 1 - k];
  CHECK(unrolled.scalar() == Approx(expected).epsilon(1e-14));

  unrolled.reset();
  CHECK(unrolled.scalar() == 0.0);
  CHECK_THROWS_AS(TemporalAverage(0.0), std::invalid_argument);
  CHECK_THROWS_AS(TemporalAverage(1.5), std::invalid_argument);
  CHECK_THROWS_AS(unrolled.step(std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("WTA softmax") {
  const ProbVector p = wta_softmax(std::vector<double>{0, 0});
  CHECK(p.units[0] == Approx(1.0 / 3).epsilon(1e-15));
  CHECK(p.units[1] == Approx(1.0 / 3).epsilon(1e-15));
  CHECK(p.silence == Approx(1.0 / 3).epsilon(1e-15));

  const ProbVector q = wta_softmax(std::vector<double>{std::log(2.0), 0});
  CHECK(q.units[0] == Approx(0.5).epsilon(1e-15));
  CHECK(q.units[1] == Approx(0.25).epsilon(1e-15));
  CHECK(q.silence == Approx(0.25).epsilon(1e-15));

  CHECK(wta_softmax(std::vector<double>{0.0}).units[0] == 0.5);

  RngStream rng(11, 0);
  for (int n = 0; n < 1000; ++n) {
    const double u = rng.normal(0.0, 20.0);
    const double sig = 1.0 / (1.0 + std::exp(-u));
    CHECK(std::abs(wta_softmax(std::vector<double>{u}).units[0] - sig) <= 1e-15);
  }

  const ProbVector big = wta_softmax(std::vector<double>{800.0, 790.0});
  CHECK(std::isfinite(big.units[0]));
  CHECK(big.silence >= 0.0);
  CHECK(big.units[0] + big.units[1] + big.silence == Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(wta_softmax(std::vector<double>{0.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("log probability agrees with the cross-entropy and stays finite") {
  const std::vector<double> u{0.3, -1.1, 2.0};
  const ProbVector p = wta_softmax(u);
  for (int c = 0; c <= 3; ++c) {
    const SpikeSymbol s = c == 0 ? SpikeSymbol::silence() : SpikeSymbol::unit(c);
    CHECK(log_prob(s, u) == Approx(neg_cross_entropy(s.to_vector(3), p.units)).epsilon(1e-12));
  }
  CHECK(std::isfinite(log_prob(SpikeSymbol::silence(), std::vector<double>{1e4})));
  CHECK(log_prob(SpikeSymbol::silence(), std::vector<double>{1e4}) == Approx(-1e4));
}

TEST_CASE("cross-entropy gradient identity") {
  RngStream rng(5, 0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> u(3);
    for (double& v : u) v = rng.normal(0.0, 1.5);
    for (int c = 0; c <= 3; ++c) {
      const SpikeSymbol s = c == 0 ? SpikeSymbol::silence() : SpikeSymbol::unit(c);
      const auto target = s.to_vector(3);
      const ScalarFn f = [&](const std::vector<double>& x) {
        return neg_cross_entropy(target, wta_softmax(x).units);
      };
      const auto fd = fd_gradient(f, u, 1e-4);
      const ProbVector p = wta_softmax(u);
      for (int k = 0; k < 3; ++k) {
        const double analytic = (c == k + 1 ? 1.0 : 0.0) - p.units[static_cast<std::size_t>(k)];
        CHECK(relative_error(analytic, fd[static_cast<std::size_t>(k)]) < 1e-6);
      }
    }
  }
}

TEST_CASE("spike sampling") {
  RngStream rng(1, 0);
  for (int n = 0; n < 1000; ++n) {
    CHECK(sample_spike(std::vector<double>{1.0, 0.0}, rng) == SpikeSymbol::unit(1));
    CHECK(sample_spike(std::vector<double>{0.0, 0.0}, rng).is_silent());
  }

  const std::vector<double> p{1.0 / 3, 1.0 / 3};
  const int draws = 100000;
  std::vector<int> counts(3, 0);
  for (int n = 0; n < draws; ++n) ++counts[static_cast<std::size_t>(sample_spike(p, rng).index())];
  const double sd = std::sqrt(draws * (1.0 / 3) * (2.0 / 3));
  for (int c : counts) CHECK(std::abs(c - draws / 3.0) < 3.0 * sd);

  RngStream a(9, 4), b(9, 4);
  for (int n = 0; n < 100; ++n) CHECK(sample_spike(p, a) == sample_spike(p, b));
}

TEST_CASE("random streams") {
  RngStream a(1, 0), b(1, 1), c(1, 0);
  CHECK(a.next() != b.next());
  c.next();
  CHECK(a == c);
  const std::string saved = a.state();
  const double x = a.uniform();
  a.set_state(saved);
  CHECK(a.uniform() == x);
  CHECK_THROWS_AS(a.set_state("not a state"), std::invalid_argument);
  for (int n = 0; n < 1000; ++n) {
    const double u = b.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(a.split(3) == RngStream(1, 0).split(3));
}
