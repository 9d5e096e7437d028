// Serial vs OpenMP kernels: network step, learner step, MC gradient.

#include <benchmark/benchmark.h>

#include "wta/experiment.hpp"
#include "wta/oracle.hpp"

using namespace wta;

namespace {

struct Fixture {
  Network net;
  NetworkParams params;
  EncodedSequence seq;

  explicit Fixture(int hidden)
      : net(make_net(hidden)), params(net.init_params({0.1, 0.0, {}}, 1)), seq(make_seq()) {}

  static Network make_net(int hidden) {
    TopologyConfig t;
    t.hidden = hidden;
    return Network(build_topology(t, std::vector<int>(64, 2), 10), build_filters(FilterConfig{}));
  }
  static EncodedSequence make_seq() {
    SynthOptions o;
    o.pixels = 64;
    o.steps = 50;
    o.train_per_class = 1;
    o.test_per_class = 1;
    const SynthDataset d = synth_polarity_task(o);
    return encode_wta(preprocess(d.train.events[0], synth_manifest(o, "train")), 0);
  }
};

void BM_NetworkStep(benchmark::State& s) {
  const Fixture f(static_cast<int>(s.range(0)));
  const auto policy = s.range(1) ? ExecPolicy::Parallel : ExecPolicy::Serial;
  NetworkState st = f.net.make_state(1);
  int t = 0;
  for (auto _ : s) {
    f.net.step(st, f.params, make_clamp(f.net, f.seq, t, StepMode::FreeRun), StepMode::FreeRun, policy);
    t = (t + 1) % f.seq.steps;
  }
  s.SetLabel(s.range(1) ? "parallel" : "serial");
}

void BM_TrainStep(benchmark::State& s) {
  Fixture f(static_cast<int>(s.range(0)));
  const auto policy = s.range(1) ? ExecPolicy::Parallel : ExecPolicy::Serial;
  NetworkState st = f.net.make_state(1);
  Learner learner(f.net, LearnerConfig{});
  f.seq.label = 3;
  int t = 0;
  for (auto _ : s) {
    learner.train_step(st, f.params, make_clamp(f.net, f.seq, t, StepMode::Training), 1e-4, policy);
    t = (t + 1) % f.seq.steps;
  }
  s.SetLabel(s.range(1) ? "parallel" : "serial");
}

void BM_McGradient(benchmark::State& s) {
  const TinyNetSpec spec = estimator_spec(4, 7);
  for (auto _ : s) {
    benchmark::DoNotOptimize(mc_gradient_mean(spec, static_cast<std::uint64_t>(s.range(0)), 1, 0.0, 0.3, 1.0));
  }
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

}  // namespace

BENCHMARK(BM_NetworkStep)->ArgsProduct({{16, 64, 256}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TrainStep)->ArgsProduct({{16, 64, 256}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_McGradient)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
