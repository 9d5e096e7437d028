#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "wta/oracle.hpp"

using namespace wta;
using doctest::Approx;

namespace {

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// hidden (C=1) and output (C=1) fed by one input; hidden optionally drives the output.
TinyNetSpec two_neuron_spec(int steps, bool hidden_drives_output) {
  TinyNetSpec spec;
  const int x = spec.topology.add_circuit(1, CircuitRole::Input);
  const int h = spec.topology.add_circuit(1, CircuitRole::Hidden);
  const int y = spec.topology.add_circuit(1, CircuitRole::Output);
  spec.topology.connect(x, h);
  spec.topology.connect(x, y);
  if (hidden_drives_output) spec.topology.connect(h, y);
  spec.filters.synaptic = {Taps{1.0, 0.4}};
  spec.filters.somatic = Taps{-0.5, -0.2};
  const Network net(spec.topology, spec.filters);
  spec.params = net.init_params({0.8, 0.3, {}}, 5);
  for (int t = 0; t < steps; ++t) {
    spec.inputs.push_back({t % 2 ? SpikeSymbol::unit(1) : SpikeSymbol::silence()});
    spec.targets.push_back({t % 3 ? SpikeSymbol::silence() : SpikeSymbol::unit(1)});
  }
  return spec;
}

double max_abs(const NetworkParams& p, int circuit) {
  double m = 0.0;
  for (double v : p.circuits[static_cast<std::size_t>(circuit)]) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("finite differences") {
  const std::vector<double> p{3.0, -1.0};
  const auto g = fd_gradient([](const std::vector<double>& v) { return v[0] * v[0] + 2.0 * v[1]; }, p);
  CHECK(g[0] == Approx(6.0).epsilon(1e-9));
  CHECK(g[1] == Approx(2.0).epsilon(1e-9));

  const auto z = fd_gradient([](const std::vector<double>&) { return 4.0; }, p);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);

  // d/du_1 log sigma_1(u) at u = 0 for C = 2 is 1 - 1/3.
  const std::vector<double> u{0.0, 0.0};
  const auto lg = fd_gradient([](const std::vector<double>& v) { return log_prob(SpikeSymbol::unit(1), v); }, u);
  CHECK(lg[0] == Approx(2.0 / 3.0).epsilon(1e-8));
  CHECK(lg[1] == Approx(-1.0 / 3.0).epsilon(1e-8));

  CHECK_THROWS_AS(fd_gradient([](const std::vector<double>&) { return 0.0; }, p, 0.0), std::invalid_argument);
}

TEST_CASE("relative error") {
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1.0, 0.0) == 1.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
  CHECK(relative_error(-1.0, 1.0) == 2.0);
}

TEST_CASE("exact objective without hidden circuits is the discounted likelihood") {
  TinyNetSpec spec = two_neuron_spec(3, false);
  // Drop the hidden circuit by rebuilding without it.
  TinyNetSpec vis;
  vis.topology.add_circuit(1, CircuitRole::Input);
  vis.topology.add_circuit(1, CircuitRole::Output);
  vis.topology.connect(0, 1);
  vis.filters = spec.filters;
  vis.params = {{{}, spec.params.circuits[2]}};
  vis.inputs = spec.inputs;
  vis.targets = spec.targets;

  const Network net(vis.topology, vis.filters);
  NetworkState st = net.make_state(1);
  const double gamma = 0.7;
  double expected = 0.0;
  for (int t = 0; t < vis.steps(); ++t) {
    ClampMap m(2);
    m[0] = vis.inputs[static_cast<std::size_t>(t)][0];
    m[1] = vis.targets[static_cast<std::size_t>(t)][0];
    net.step(st, vis.params, m, StepMode::Training);
    expected = gamma * expected + log_prob(st.spikes[1], st.potentials[1]);
  }
  const ElboResult r = exact_elbo(vis, 1.0, 0.3, gamma);
  CHECK(r.sequences == 1);
  CHECK(r.total_probability == 1.0);
  CHECK(r.value == Approx(expected).epsilon(1e-13));
}

TEST_CASE("exact objective for one step sums two hidden outcomes") {
  TinyNetSpec spec = two_neuron_spec(1, true);
  const double bh = spec.params.circuits[1][0];
  const double by = spec.params.circuits[2][0];
  const double ph = sigmoid(bh);
  const double r = 0.3;
  const double alpha = 0.6;
  // At t = 1 every trace is zero, so only the biases matter.
  const double loglik = spec.targets[0][0].is_silent() ? std::log(1.0 - sigmoid(by)) : std::log(sigmoid(by));
  const double kl = ph * (std::log(ph) - std::log(r)) + (1.0 - ph) * (std::log(1.0 - ph) - std::log(1.0 - r));
  const ElboResult res = exact_elbo(spec, alpha, r, 0.9);
  CHECK(res.sequences == 2);
  CHECK(res.total_probability == Approx(1.0).epsilon(1e-15));
  CHECK(res.value == Approx(loglik - alpha * kl).epsilon(1e-13));
  // d/db_h of -alpha KL(Bern(sigma(b)) || Bern(r)) = -alpha sigma'(b) logit-difference.
  const double dkl = ph * (1.0 - ph) * (std::log(ph / (1.0 - ph)) - std::log(r / (1.0 - r)));
  CHECK(res.gradient.circuits[1][0] == Approx(-alpha * dkl).epsilon(1e-12));
}

TEST_CASE("disconnected hidden circuit gets no gradient without the KL term") {
  const TinyNetSpec spec = two_neuron_spec(4, false);
  const ElboResult res = exact_elbo(spec, 0.0, 0.3, 0.8);
  CHECK(res.sequences == 16);
  CHECK(res.total_probability == Approx(1.0).epsilon(1e-14));
  CHECK(max_abs(res.gradient, 1) <= 1e-12);
  CHECK(max_abs(res.gradient, 2) > 1e-3);
}

TEST_CASE("exact gradient matches finite differences of the exact value") {
  const TinyNetSpec spec = estimator_spec(3, 11);
  const ElboResult res = exact_elbo(spec, 0.5, 0.3, 0.8);
  CHECK(res.sequences == 27);
  for (int i = 1; i < 3; ++i) {
    const auto& theta = spec.params.circuits[static_cast<std::size_t>(i)];
    const auto fd = fd_gradient(
        [&](const std::vector<double>& v) {
          TinyNetSpec s = spec;
          s.params.circuits[static_cast<std::size_t>(i)] = v;
          return exact_elbo(s, 0.5, 0.3, 0.8).value;
        },
        theta);
    for (std::size_t m = 0; m < fd.size(); ++m) {
      CHECK(std::abs(fd[m] - res.gradient.circuits[static_cast<std::size_t>(i)][m]) <= 1e-7);
    }
  }
}

TEST_CASE("enumeration bound") {
  TinyNetSpec spec = estimator_spec(11, 1);  // 3^11 = 177147 sequences
  CHECK(spec.num_hidden_sequences() == 177147);
  CHECK_THROWS_AS(exact_elbo(spec, 1.0, 0.3, 1.0), std::invalid_argument);
  spec = estimator_spec(10, 1);
  CHECK(spec.num_hidden_sequences() == 59049);
  CHECK_NOTHROW(spec.validate());
  spec.targets.pop_back();
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("Monte Carlo estimator") {
  const TinyNetSpec spec = estimator_spec(3, 2);
  CHECK_THROWS_AS(mc_gradient_mean(spec, 1, 1, 0.0, 0.3, 1.0), std::invalid_argument);

  SUBCASE("deterministic without hidden circuits") {
    TinyNetSpec vis;
    vis.topology.add_circuit(2, CircuitRole::Input);
    vis.topology.add_circuit(2, CircuitRole::Output);
    vis.topology.connect(0, 1);
    vis.filters = spec.filters;
    vis.params = {{{}, spec.params.circuits[2]}};
    vis.params.circuits[1].resize(Network(vis.topology, vis.filters).layout(1).total);
    vis.inputs = spec.inputs;
    vis.targets = spec.targets;
    const McResult mc = mc_gradient_mean(vis, 10, 3, 0.0, 0.3, 0.9);
    const ElboResult ex = exact_elbo(vis, 0.0, 0.3, 0.9);
    for (std::size_t m = 0; m < mc.mean.circuits[1].size(); ++m) {
      CHECK(mc.stderr_.circuits[1][m] == 0.0);
      CHECK(mc.mean.circuits[1][m] == Approx(ex.gradient.circuits[1][m]).epsilon(1e-12));
    }
  }

  SUBCASE("standard error shrinks like one over root n") {
    const McResult a = mc_gradient_mean(spec, 10000, 4, 0.0, 0.3, 1.0);
    const McResult b = mc_gradient_mean(spec, 40000, 5, 0.0, 0.3, 1.0);
    CHECK(a.samples == 10000);
    double ratio_sum = 0.0;
    int n = 0;
    for (std::size_t m = 0; m < a.stderr_.circuits[1].size(); ++m) {
      if (a.stderr_.circuits[1][m] > 1e-6) {
        ratio_sum += a.stderr_.circuits[1][m] / b.stderr_.circuits[1][m];
        ++n;
      }
    }
    REQUIRE(n > 0);
    CHECK(ratio_sum / n == Approx(2.0).epsilon(0.2));
  }

  SUBCASE("thread-count independent") {
    const McResult a = mc_gradient_mean(spec, 500, 6, 0.5, 0.3, 0.9);
    const McResult b = mc_gradient_mean(spec, 500, 6, 0.5, 0.3, 0.9);
    CHECK(a.mean == b.mean);
    CHECK(a.stderr_ == b.stderr_);
  }
}

TEST_CASE("random tiny networks pass the gradient check and the mutation fails") {
  const GradCheckStats ok = check_log_prob_gradients(10, 3, 1e-4, 1e-5);
  CHECK(ok.passed);
  CHECK(ok.components > 0);
  CHECK(ok.max_error < 1e-6);
  const GradCheckStats bad = check_log_prob_gradients(10, 3, 1e-4, 1e-5, true);
  CHECK_FALSE(bad.passed);
  CHECK(!bad.worst.empty());
}
