// Acceptance suite: one line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "reference/binary_case.hpp"
#include "wta/experiment.hpp"
#include "wta/oracle.hpp"

using namespace wta;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Largest |z| of the hidden-circuit MC mean against the exact gradient.
double hidden_z(const TinyNetSpec& spec, std::uint64_t samples, std::uint64_t seed, int& components) {
  const ElboResult exact = exact_elbo(spec, 0.0, 0.3, 1.0);
  const McResult mc = mc_gradient_mean(spec, samples, seed, 0.0, 0.3, 1.0);
  double worst = 0.0;
  components = 0;
  for (int i : spec.topology.with_role(CircuitRole::Hidden)) {
    const auto idx = static_cast<std::size_t>(i);
    for (std::size_t k = 0; k < exact.gradient.circuits[idx].size(); ++k) {
      const double d = std::abs(mc.mean.circuits[idx][k] - exact.gradient.circuits[idx][k]);
      const double se = mc.stderr_.circuits[idx][k];
      worst = std::max(worst, se > 0.0 ? d / se : (d > 0.0 ? INFINITY : 0.0));
      ++components;
    }
  }
  return worst;
}

struct Split {
  std::vector<EncodedSequence> train;
  std::vector<EncodedSequence> test;
};

Split synth_split(const SynthOptions& o, Encoding enc) {
  const SynthDataset d = synth_polarity_task(o);
  const DatasetManifest m = synth_manifest(o, "train");
  auto conv = [&](const SynthSplit& s) {
    std::vector<EncodedSequence> v;
    for (std::size_t n = 0; n < s.events.size(); ++n) v.push_back(encode(preprocess(s.events[n], m), enc, s.labels[n]));
    return v;
  };
  return {conv(d.train), conv(d.test)};
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckStats s = check_log_prob_gradients(20, 1, 1e-4, 1e-5);
  const GradCheckStats mutated = check_log_prob_gradients(20, 1, 1e-4, 1e-5, true);
  const double secs = seconds_since(t0);
  return {s.passed && !mutated.passed && secs < 10.0,
          fmt("20 networks, %zu components, max rel err %.2e (tol 1e-5), sign mutation %s, %.2fs (limit 10s)",
              s.components, s.max_error, mutated.passed ? "NOT caught" : "caught", secs)};
}

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  int n2 = 0;
  int n4 = 0;
  const double z2 = hidden_z(estimator_spec(2, 7), 100000, 2024, n2);
  // At T=2 the hidden circuit cannot reach the output before the sequence
  // ends, so its exact gradient is zero; T=4 exercises a non-zero target.
  const TinyNetSpec spec4 = estimator_spec(4, 7);
  const double exact_norm = [&] {
    const ElboResult e = exact_elbo(spec4, 0.0, 0.3, 1.0);
    double m = 0.0;
    for (double v : e.gradient.circuits[1]) m = std::max(m, std::abs(v));
    return m;
  }();
  const double z4 = hidden_z(spec4, 100000, 2025, n4);
  const double secs = seconds_since(t0);
  return {z2 <= 3.0 && z4 <= 3.0 && exact_norm > 0.0 && secs < 120.0,
          fmt("1e5 samples; T=2: max |z| %.2f over %d hidden components; T=4: max |z| %.2f over %d (max |grad| %.3f); "
              "tol 3 sigma, %.1fs (limit 120s)",
              z2, n2, z4, n4, exact_norm, secs)};
}

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  ref::Rule plain;
  plain.alpha = 0.0;
  plain.baseline = false;
  ref::Rule full;
  full.alpha = 1.0;
  full.baseline = true;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    worst = std::max(worst, ref::trajectory_gap(seed, plain));
    worst = std::max(worst, ref::trajectory_gap(seed, full));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10.0,
          fmt("5 seeds x 2 rule variants, 100 steps, max param/reward gap %.2e (tol 1e-12), %.2fs (limit 10s)", worst,
              secs)};
}

Outcome criterion4() {
  SynthOptions o;
  o.pixels = 8;
  o.steps = 60;
  o.train_per_class = 2;
  o.test_per_class = 1;
  const Split data = synth_split(o, Encoding::Wta);
  TopologyConfig tc;
  tc.hidden = 4;
  FilterConfig fc;
  fc.num_filters = 3;
  fc.duration = 6;
  const Network net(build_topology(tc, data.train[0].sizes, 2), build_filters(fc));
  const NetworkParams init = net.init_params({0.5, 0.0, {}}, 3);
  const std::vector<int> hidden = net.topology().with_role(CircuitRole::Hidden);

  long long checked = 0;
  long long b_mismatch = 0;
  bool params_moved = false;
  for (double c : {-2.5, 0.75, -31.125}) {
    NetworkParams params = init;
    NetworkState st = net.make_state(5);
    Learner learner(net, LearnerConfig{});
    for (const auto& seq : data.train) {
      st.reset();
      learner.reset();
      for (int t = 0; t < seq.steps; ++t) {
        net.step(st, params, make_clamp(net, seq, t, StepMode::Training), StepMode::Training);
        learner.update(st, params, c, 0.05);
        for (int h : hidden) {
          const CircuitLearnerState& cs = learner.circuit_state(h);
          const auto e = cs.eligibility.value();
          for (std::size_t m = 0; m < e.size(); ++m) {
            if (e[m] == 0.0) continue;
            ++checked;
            if (cs.b[m] != c) ++b_mismatch;
          }
          if (params.circuits[static_cast<std::size_t>(h)] != init.circuits[static_cast<std::size_t>(h)]) {
            params_moved = true;
          }
        }
      }
    }
  }
  return {checked > 0 && b_mismatch == 0 && !params_moved,
          fmt("3 constant rewards, %lld (step, parameter) pairs with nonzero eligibility: b != l in %lld, "
              "hidden parameters %s (exact)",
              checked, b_mismatch, params_moved ? "CHANGED" : "unchanged")};
}

Outcome criterion5() {
  RngStream rng(55, 0);
  double worst = 0.0;
  for (int n = 0; n < 100000; ++n) {
    const int C = 1 + static_cast<int>(rng.next() % 8);
    const double scale = std::pow(10.0, 3.0 * rng.uniform() - 1.0);  // 0.1 .. 100
    std::vector<double> u(static_cast<std::size_t>(C));
    for (double& v : u) v = rng.normal(0.0, scale);
    const ProbVector p = wta_softmax(u);
    double sum = p.silence;
    for (double v : p.units) sum += v;
    worst = std::max(worst, std::abs(sum - 1.0));
  }

  SynthOptions o;
  o.pixels = 16;
  o.steps = 30;
  o.train_per_class = 20;
  o.test_per_class = 10;
  const Split data = synth_split(o, Encoding::Wta);
  ExperimentConfig c;
  c.topology.hidden = 16;  // above the parallel threshold
  c.filters.num_filters = 3;
  c.filters.duration = 6;
  c.epochs = 2;
  c.log_every = 10;
  std::ostringstream a, b, s;
  run_trial(c, 42, data.train, data.test, 2, &a);
  run_trial(c, 42, data.train, data.test, 2, &b);
  c.parallel = false;
  run_trial(c, 42, data.train, data.test, 2, &s);
  const bool same = a.str() == b.str();
  const bool serial_same = a.str() == s.str();
  return {worst <= 1e-12 && same && serial_same,
          fmt("softmax max |sum - 1| %.2e over 1e5 potentials (tol 1e-12); metrics rerun %s, serial vs parallel %s "
              "(%zu bytes)",
              worst, same ? "byte-identical" : "DIFFER", serial_same ? "byte-identical" : "DIFFER", a.str().size())};
}

Outcome criterion6() {
  SynthOptions o;
  o.pixels = 16;
  o.steps = 50;
  o.train_per_class = 150;
  o.test_per_class = 1;
  const Split data = synth_split(o, Encoding::Wta);
  std::string detail = "target r=0.3, hidden bias +3:";
  bool pass = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double rate[2];
    for (int k = 0; k < 2; ++k) {
      ExperimentConfig c;
      c.topology.hidden = 8;
      c.init.hidden_bias = 3.0;
      c.learner.alpha = k == 0 ? 1.0 : 0.0;
      c.learner.r = 0.3;
      c.epochs = 2;
      c.eval_each_epoch = false;
      c.log_every = 0;
      const TrialResult r = run_trial(c, seed, data.train, {}, 2);
      rate[k] = r.rows.back().hidden_rate;
    }
    const bool closer = std::abs(rate[0] - 0.3) < std::abs(rate[1] - 0.3);
    pass = pass && closer;
    detail += fmt(" seed %d: alpha=1 %.3f vs alpha=0 %.3f%s;", static_cast<int>(seed), rate[0], rate[1],
                  closer ? "" : " (NOT closer)");
  }
  return {pass, detail};
}

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthOptions o;
  o.pixels = 16;
  o.steps = 50;
  o.train_per_class = 1000;
  o.test_per_class = 200;
  double acc[2];
  int k = 0;
  for (Encoding enc : {Encoding::Wta, Encoding::Unsigned}) {
    const Split data = synth_split(o, enc);
    ExperimentConfig c;
    c.topology.hidden = 8;
    c.topology.circuit_size = enc == Encoding::Wta ? 2 : 1;
    c.epochs = 1;
    c.log_every = 0;
    const TrialResult r = run_trial(c, 1, data.train, data.test, 2);
    acc[k++] = r.final_eval->accuracy;
  }
  const double secs = seconds_since(t0);
  return {acc[0] >= 0.90 && acc[1] <= 0.60 && secs < 300.0,
          fmt("2000 training examples, 400 test: WTA C=2 test acc %.3f (need >= 0.90), unsigned C=1 %.3f "
              "(need <= 0.60), %.1fs (limit 300s)",
              acc[0], acc[1], secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient oracle", criterion1},
      {"estimator unbiasedness", criterion2},
      {"binary reduction", criterion3},
      {"baseline exactness", criterion4},
      {"normalization and determinism", criterion5},
      {"sparsity regularization", criterion6},
      {"polarity separation", criterion7},
  };
  int failed = 0;
  for (std::size_t n = 0; n < criteria.size(); ++n) {
    Outcome o;
    try {
      o = criteria[n].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu [%s] %s: %s\n", n + 1, o.pass ? "PASS" : "FAIL", criteria[n].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("criterion 8 [NOT RUN] published benchmark tables: needs the full neuromorphic recordings and "
              "multi-hour runs; excluded from the default suite\n");
  std::printf("%s\n", failed == 0 ? "acceptance: all run criteria passed" : "acceptance: FAILED");
  return failed == 0 ? 0 : 1;
}
