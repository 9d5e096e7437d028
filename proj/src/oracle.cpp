#include "wta/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace wta {

std::vector<double> fd_gradient(const ScalarFn& loss, std::span<const double> params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: step must be positive");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + h;
    const double up = loss(p);
    p[k] = orig - h;
    const double down = loss(p);
    p[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

std::uint64_t TinyNetSpec::num_hidden_sequences() const {
  std::uint64_t n = 1;
  const auto limit = std::numeric_limits<std::uint64_t>::max();
  for (int i = 0; i < topology.num_circuits(); ++i) {
    if (topology.circuit(i).role != CircuitRole::Hidden) continue;
    const auto base = static_cast<std::uint64_t>(topology.circuit(i).size + 1);
    for (int t = 0; t < steps(); ++t) {
      if (n > limit / base) return limit;
      n *= base;
    }
  }
  return n;
}

void TinyNetSpec::validate() const {
  topology.validate();
  filters.validate();
  const auto in = topology.with_role(CircuitRole::Input);
  const auto out = topology.with_role(CircuitRole::Output);
  if (steps() < 1) throw std::invalid_argument("tiny net: need at least one step");
  if (targets.size() != inputs.size()) throw std::invalid_argument("tiny net: inputs/targets length mismatch");
  for (int t = 0; t < steps(); ++t) {
    const auto& x = inputs[static_cast<std::size_t>(t)];
    const auto& y = targets[static_cast<std::size_t>(t)];
    if (x.size() != in.size() || y.size() != out.size()) {
      throw std::invalid_argument("tiny net: symbol count mismatch at step " + std::to_string(t));
    }
    for (std::size_t n = 0; n < in.size(); ++n) {
      if (!x[n].valid_for(topology.circuit(in[n]).size)) throw std::invalid_argument("tiny net: input symbol out of range");
    }
    for (std::size_t n = 0; n < out.size(); ++n) {
      if (!y[n].valid_for(topology.circuit(out[n]).size)) throw std::invalid_argument("tiny net: target symbol out of range");
    }
  }
  if (num_hidden_sequences() > kMaxEnumeration) {
    throw std::invalid_argument("tiny net: hidden sequence count exceeds enumeration bound");
  }
}

namespace {

// Self-contained forward model used by exact_elbo. Parameter offsets are
// rebuilt from the topology rather than taken from Network.
struct DirectModel {
  struct Block {
    int pre;       // -1 for the feedback block
    int k;         // filter index (unused for feedback)
    std::size_t offset;
    int cols;
  };
  const TinyNetSpec* spec;
  int K;
  int tau;
  std::vector<std::vector<Block>> blocks;

  explicit DirectModel(const TinyNetSpec& s)
      : spec(&s), K(s.filters.num_synaptic()), tau(s.filters.duration()) {
    const Topology& top = s.topology;
    blocks.resize(static_cast<std::size_t>(top.num_circuits()));
    for (int i = 0; i < top.num_circuits(); ++i) {
      if (top.circuit(i).role == CircuitRole::Input) continue;
      const int C = top.circuit(i).size;
      std::size_t off = static_cast<std::size_t>(C);
      blocks[static_cast<std::size_t>(i)].push_back({-1, 0, off, C});
      off += static_cast<std::size_t>(C * C);
      for (int pre : top.presynaptic(i)) {
        const int Cj = top.circuit(pre).size;
        for (int k = 0; k < K; ++k) {
          blocks[static_cast<std::size_t>(i)].push_back({pre, k, off, Cj});
          off += static_cast<std::size_t>(C * Cj);
        }
      }
    }
  }

  const Taps& taps_for(const Block& b) const {
    return b.pre < 0 ? spec->filters.somatic : spec->filters.synaptic[static_cast<std::size_t>(b.k)];
  }

  // Filtered history feature of circuit j seen at step t (1-based):
  // sum_{d=1..tau} taps[d-1] * 1{s_{j, t-1-d} = c}.
  double feature(const std::vector<std::vector<int>>& hist, const Taps& taps, int j, int t,
                 int c) const {
    double v = 0.0;
    for (int d = 1; d <= tau; ++d) {
      const int when = t - 1 - d;
      if (when < 1) break;
      if (hist[static_cast<std::size_t>(j)][static_cast<std::size_t>(when)] == c) {
        v += taps[static_cast<std::size_t>(d - 1)];
      }
    }
    return v;
  }

  std::vector<double> potential(const std::vector<double>& theta,
                                const std::vector<std::vector<int>>& hist, int i, int t) const {
    const int C = spec->topology.circuit(i).size;
    std::vector<double> u(theta.begin(), theta.begin() + C);
    for (const Block& b : blocks[static_cast<std::size_t>(i)]) {
      const int src = b.pre < 0 ? i : b.pre;
      const Taps& taps = taps_for(b);
      for (int c = 0; c < b.cols; ++c) {
        const double f = feature(hist, taps, src, t, c + 1);
        if (f == 0.0) continue;
        for (int r = 0; r < C; ++r) u[static_cast<std::size_t>(r)] += theta[b.offset + static_cast<std::size_t>(r * b.cols + c)] * f;
      }
    }
    return u;
  }

  // log sigma(s | u) via log-sum-exp over {0, u_1..u_C}.
  static double log_softmax(const std::vector<double>& u, int s, std::vector<double>& sigma) {
    double m = 0.0;
    for (double v : u) m = std::max(m, v);
    double z = std::exp(-m);
    for (double v : u) z += std::exp(v - m);
    const double logz = m + std::log(z);
    sigma.resize(u.size());
    for (std::size_t c = 0; c < u.size(); ++c) sigma[c] = std::exp(u[c] - logz);
    return (s == 0 ? 0.0 : u[static_cast<std::size_t>(s - 1)]) - logz;
  }

  // Adds w * d log p(s | u) / d theta_i to grad.
  void add_score(const std::vector<std::vector<int>>& hist, int i, int t, int s,
                 const std::vector<double>& sigma, double w, std::vector<double>& grad) const {
    const int C = spec->topology.circuit(i).size;
    std::vector<double> post(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) post[static_cast<std::size_t>(c)] = (s == c + 1 ? 1.0 : 0.0) - sigma[static_cast<std::size_t>(c)];
    for (int c = 0; c < C; ++c) grad[static_cast<std::size_t>(c)] += w * post[static_cast<std::size_t>(c)];
    for (const Block& b : blocks[static_cast<std::size_t>(i)]) {
      const int src = b.pre < 0 ? i : b.pre;
      const Taps& taps = taps_for(b);
      for (int c = 0; c < b.cols; ++c) {
        const double f = feature(hist, taps, src, t, c + 1);
        if (f == 0.0) continue;
        for (int r = 0; r < C; ++r) {
          grad[b.offset + static_cast<std::size_t>(r * b.cols + c)] += w * post[static_cast<std::size_t>(r)] * f;
        }
      }
    }
  }
};

struct Partial {
  double value = 0.0;
  double prob = 0.0;
  std::vector<std::vector<double>> grad;
};

}  // namespace

ElboResult exact_elbo(const TinyNetSpec& spec, double alpha, double r, double gamma) {
  spec.validate();
  const Topology& top = spec.topology;
  const int n = top.num_circuits();
  const int T = spec.steps();
  for (int i = 0; i < n; ++i) {
    if (top.circuit(i).role == CircuitRole::Input) continue;
    std::size_t expected = static_cast<std::size_t>(top.circuit(i).size) * (1 + static_cast<std::size_t>(top.circuit(i).size));
    for (int pre : top.presynaptic(i)) {
      expected += static_cast<std::size_t>(spec.filters.num_synaptic() * top.circuit(i).size * top.circuit(pre).size);
    }
    if (spec.params.circuits.at(static_cast<std::size_t>(i)).size() != expected) {
      throw std::invalid_argument("exact_elbo: parameter shape mismatch");
    }
  }

  const DirectModel model(spec);
  const auto inputs = top.with_role(CircuitRole::Input);
  const auto outputs = top.with_role(CircuitRole::Output);
  const auto hidden = top.with_role(CircuitRole::Hidden);
  const std::uint64_t total = spec.num_hidden_sequences();

  // Digits in (circuit, time) order; the last digit varies fastest.
  std::vector<std::pair<int, int>> digits;
  for (int h : hidden) {
    for (int t = 1; t <= T; ++t) digits.emplace_back(h, t);
  }

  constexpr std::uint64_t kChunk = 256;
  const std::uint64_t chunks = (total + kChunk - 1) / kChunk;
  std::vector<Partial> partial(chunks);

  auto empty_grad = [&] {
    std::vector<std::vector<double>> g;
    for (const auto& p : spec.params.circuits) g.emplace_back(p.size(), 0.0);
    return g;
  };

#pragma omp parallel for schedule(dynamic)
  for (long long ch = 0; ch < static_cast<long long>(chunks); ++ch) {
    Partial& part = partial[static_cast<std::size_t>(ch)];
    part.grad = empty_grad();
    std::vector<std::vector<int>> hist(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(T + 1), 0));
    for (int t = 1; t <= T; ++t) {
      for (std::size_t m = 0; m < inputs.size(); ++m) {
        hist[static_cast<std::size_t>(inputs[m])][static_cast<std::size_t>(t)] = spec.inputs[static_cast<std::size_t>(t - 1)][m].index();
      }
      for (std::size_t m = 0; m < outputs.size(); ++m) {
        hist[static_cast<std::size_t>(outputs[m])][static_cast<std::size_t>(t)] = spec.targets[static_cast<std::size_t>(t - 1)][m].index();
      }
    }
    std::vector<std::vector<double>> score = empty_grad();
    std::vector<std::vector<double>> dvalue = empty_grad();
    std::vector<double> sigma;

    const std::uint64_t begin = static_cast<std::uint64_t>(ch) * kChunk;
    const std::uint64_t end = std::min(total, begin + kChunk);
    for (std::uint64_t seq = begin; seq < end; ++seq) {
      std::uint64_t code = seq;
      for (std::size_t d = digits.size(); d-- > 0;) {
        const auto base = static_cast<std::uint64_t>(top.circuit(digits[d].first).size + 1);
        hist[static_cast<std::size_t>(digits[d].first)][static_cast<std::size_t>(digits[d].second)] = static_cast<int>(code % base);
        code /= base;
      }
      for (auto& g : score) std::fill(g.begin(), g.end(), 0.0);
      for (auto& g : dvalue) std::fill(g.begin(), g.end(), 0.0);

      double logp = 0.0;
      double value = 0.0;
      for (int t = 1; t <= T; ++t) {
        const double w = std::pow(gamma, T - t);
        double ell = 0.0;
        for (int i : outputs) {
          const int s = hist[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
          const auto u = model.potential(spec.params.circuits[static_cast<std::size_t>(i)], hist, i, t);
          ell += DirectModel::log_softmax(u, s, sigma);
          model.add_score(hist, i, t, s, sigma, w, dvalue[static_cast<std::size_t>(i)]);
        }
        for (int i : hidden) {
          const int s = hist[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
          const int C = top.circuit(i).size;
          const auto u = model.potential(spec.params.circuits[static_cast<std::size_t>(i)], hist, i, t);
          const double lq = DirectModel::log_softmax(u, s, sigma);
          logp += lq;
          const double lr = s == 0 ? std::log(1.0 - r) : std::log(r / C);
          ell -= alpha * (lq - lr);
          model.add_score(hist, i, t, s, sigma, 1.0, score[static_cast<std::size_t>(i)]);
          if (alpha != 0.0) model.add_score(hist, i, t, s, sigma, -alpha * w, dvalue[static_cast<std::size_t>(i)]);
        }
        value += w * ell;
      }
      const double p = std::exp(logp);
      part.prob += p;
      part.value += p * value;
      for (std::size_t i = 0; i < part.grad.size(); ++i) {
        for (std::size_t k = 0; k < part.grad[i].size(); ++k) {
          part.grad[i][k] += p * (value * score[i][k] + dvalue[i][k]);
        }
      }
    }
  }

  ElboResult result;
  result.sequences = total;
  result.gradient.circuits = empty_grad();
  for (const Partial& part : partial) {
    result.value += part.value;
    result.total_probability += part.prob;
    for (std::size_t i = 0; i < part.grad.size(); ++i) {
      for (std::size_t k = 0; k < part.grad[i].size(); ++k) result.gradient.circuits[i][k] += part.grad[i][k];
    }
  }
  return result;
}

namespace {

// Running mean / M2 per component, merged in a fixed order.
struct Moments {
  double count = 0.0;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> m2;

  void init(const NetworkParams& shape) {
    for (const auto& c : shape.circuits) {
      mean.emplace_back(c.size(), 0.0);
      m2.emplace_back(c.size(), 0.0);
    }
  }

  void add(const std::vector<std::span<const double>>& x) {
    count += 1.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      for (std::size_t k = 0; k < mean[i].size(); ++k) {
        const double d = x[i][k] - mean[i][k];
        mean[i][k] += d / count;
        m2[i][k] += d * (x[i][k] - mean[i][k]);
      }
    }
  }

  void merge(const Moments& o) {
    if (o.count == 0.0) return;
    const double n = count + o.count;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      for (std::size_t k = 0; k < mean[i].size(); ++k) {
        const double d = o.mean[i][k] - mean[i][k];
        mean[i][k] += d * o.count / n;
        m2[i][k] += o.m2[i][k] + d * d * count * o.count / n;
      }
    }
    count = n;
  }
};

}  // namespace

McResult mc_gradient_mean(const TinyNetSpec& spec, std::uint64_t samples, std::uint64_t seed,
                          double alpha, double r, double gamma) {
  if (samples < 2) throw std::invalid_argument("mc_gradient_mean: need at least 2 samples");
  spec.validate();
  const Network net(spec.topology, spec.filters);
  net.check_params(spec.params);

  LearnerConfig cfg;
  cfg.eta = 0.0;
  cfg.kappa = 1.0;
  cfg.gamma = gamma;
  cfg.alpha = alpha;
  cfg.r = r;
  cfg.use_baseline = false;
  cfg.halve_lr_per_epoch = false;
  cfg.validate();

  const auto inputs = spec.topology.with_role(CircuitRole::Input);
  const auto outputs = spec.topology.with_role(CircuitRole::Output);
  std::vector<ClampMap> clamps(static_cast<std::size_t>(spec.steps()),
                               ClampMap(static_cast<std::size_t>(net.num_circuits())));
  for (int t = 0; t < spec.steps(); ++t) {
    auto& cl = clamps[static_cast<std::size_t>(t)];
    for (std::size_t m = 0; m < inputs.size(); ++m) cl[static_cast<std::size_t>(inputs[m])] = spec.inputs[static_cast<std::size_t>(t)][m];
    for (std::size_t m = 0; m < outputs.size(); ++m) cl[static_cast<std::size_t>(outputs[m])] = spec.targets[static_cast<std::size_t>(t)][m];
  }

  constexpr std::uint64_t kChunk = 1024;
  const std::uint64_t chunks = (samples + kChunk - 1) / kChunk;
  std::vector<Moments> partial(chunks);

#pragma omp parallel for schedule(dynamic)
  for (long long ch = 0; ch < static_cast<long long>(chunks); ++ch) {
    Moments& mom = partial[static_cast<std::size_t>(ch)];
    mom.init(spec.params);
    NetworkParams params = spec.params;
    Learner learner(net, cfg);
    NetworkState state = net.make_state(seed);
    std::vector<std::span<const double>> view(params.circuits.size());
    const std::uint64_t begin = static_cast<std::uint64_t>(ch) * kChunk;
    const std::uint64_t end = std::min(samples, begin + kChunk);
    for (std::uint64_t s = begin; s < end; ++s) {
      state.reset();
      learner.reset();
      const RngStream base(seed, s);
      for (int i = 0; i < net.num_circuits(); ++i) state.rng[static_cast<std::size_t>(i)] = base.split(static_cast<std::uint64_t>(i));
      for (const ClampMap& cl : clamps) learner.train_step(state, params, cl, 0.0, ExecPolicy::Serial);
      for (int i = 0; i < net.num_circuits(); ++i) {
        const auto& cs = learner.circuit_state(i);
        view[static_cast<std::size_t>(i)] = cs.acc.value();
      }
      mom.add(view);
    }
  }

  Moments total;
  total.init(spec.params);
  for (const Moments& m : partial) total.merge(m);

  McResult out;
  out.samples = samples;
  out.mean.circuits = total.mean;
  out.stderr_.circuits = total.m2;
  const double n = static_cast<double>(samples);
  for (auto& c : out.stderr_.circuits) {
    for (double& v : c) v = std::sqrt(v / (n - 1.0) / n);
  }
  return out;
}

TinyNetSpec estimator_spec(int steps, std::uint64_t seed) {
  TinyNetSpec spec;
  const int x = spec.topology.add_circuit(2, CircuitRole::Input);
  const int h = spec.topology.add_circuit(2, CircuitRole::Hidden);
  const int y = spec.topology.add_circuit(2, CircuitRole::Output);
  spec.topology.connect(x, h);
  spec.topology.connect(h, y);
  spec.topology.connect(x, y);
  spec.filters.synaptic = {Taps{1.0, 0.5}};
  spec.filters.somatic = Taps{-0.8, -0.3};

  const Network net(spec.topology, spec.filters);
  InitConfig init;
  init.weight_std = 1.0;
  spec.params = net.init_params(init, seed);

  RngStream rng(seed, 99);
  for (int t = 0; t < steps; ++t) {
    const int xs = static_cast<int>(rng.uniform() * 3.0);
    const int ys = static_cast<int>(rng.uniform() * 3.0);
    spec.inputs.push_back({xs == 0 ? SpikeSymbol::silence() : SpikeSymbol::unit(xs)});
    spec.targets.push_back({ys == 0 ? SpikeSymbol::silence() : SpikeSymbol::unit(ys)});
  }
  return spec;
}

RandomTinyNet random_tiny_net(std::uint64_t seed) {
  RngStream rng(seed, 0);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.uniform() * (hi - lo + 1)); };

  Topology top;
  const int n = pick(2, 3);
  const int in = top.add_circuit(pick(1, 3), CircuitRole::Input);
  std::vector<int> learned;
  for (int i = 1; i < n; ++i) {
    learned.push_back(top.add_circuit(pick(1, 3), i == n - 1 ? CircuitRole::Output : CircuitRole::Hidden));
  }
  for (int post : learned) {
    top.connect(in, post);
    for (int pre : learned) {
      if (pre != post && rng.uniform() < 0.7) top.connect(pre, post);
    }
  }

  const int K = pick(1, 2);
  const int tau = pick(K, 3);
  FilterBank bank;
  for (int k = 0; k < K; ++k) {
    Taps taps(static_cast<std::size_t>(tau));
    for (double& v : taps) v = rng.uniform();
    bank.synaptic.push_back(taps);
  }
  bank.somatic.resize(static_cast<std::size_t>(tau));
  for (double& v : bank.somatic) v = -rng.uniform();

  Network net(top, bank);
  InitConfig init;
  init.weight_std = 0.5;
  init.bias = 0.0;
  NetworkParams params = net.init_params(init, seed);
  for (auto& c : params.circuits) {
    for (std::size_t k = 0; k < std::min<std::size_t>(c.size(), 3); ++k) c[k] = rng.normal(0.0, 0.5);
  }
  NetworkState state = net.make_state(seed);
  const int warmup = pick(2, 5);
  for (int t = 0; t < warmup; ++t) {
    ClampMap clamp(static_cast<std::size_t>(net.num_circuits()));
    const int C = top.circuit(in).size;
    clamp[static_cast<std::size_t>(in)] = SpikeSymbol::unit(pick(1, C));
    net.step(state, params, clamp, StepMode::FreeRun, ExecPolicy::Serial);
  }
  return {std::move(net), std::move(params), std::move(state)};
}

GradCheckStats check_log_prob_gradients(int count, std::uint64_t seed, double h, double tolerance,
                                        bool flip_sign) {
  GradCheckStats stats;
  for (int n = 0; n < count; ++n) {
    const std::uint64_t net_seed = seed + static_cast<std::uint64_t>(n);
    RandomTinyNet tiny = random_tiny_net(net_seed);
    const Network& net = tiny.net;
    // The snapshot feeding the next step's potentials.
    const std::vector<CircuitTraces>& traces = tiny.state.traces;
    for (int i = 0; i < net.num_circuits(); ++i) {
      if (net.topology().circuit(i).role == CircuitRole::Input) continue;
      const int C = net.layout(i).size;
      const auto& theta = tiny.params.circuits[static_cast<std::size_t>(i)];
      const auto u = net.membrane_potential(i, tiny.params, traces);
      const ProbVector probs = wta_softmax(u);
      for (int s = 0; s <= C; ++s) {
        const SpikeSymbol sym = s == 0 ? SpikeSymbol::silence() : SpikeSymbol::unit(s);
        auto analytic = log_prob_gradient(net, i, sym, probs.units, traces);
        if (flip_sign) {
          for (double& g : analytic) g = -g;
        }
        const ScalarFn loss = [&](const std::vector<double>& p) {
          std::vector<double> v(static_cast<std::size_t>(C));
          net.membrane_potential(i, p, traces, v);
          return log_prob(sym, v);
        };
        const auto numeric = fd_gradient(loss, theta, h);
        for (std::size_t k = 0; k < analytic.size(); ++k) {
          ++stats.components;
          const double err = relative_error(analytic[k], numeric[k]);
          if (err > stats.max_error || (std::isnan(err) && stats.passed)) {
            stats.max_error = err;
            std::ostringstream os;
            os << "net " << n << " circuit " << i << " symbol " << s << " param " << k
               << " analytic " << analytic[k] << " fd " << numeric[k];
            stats.worst = os.str();
          }
          if (!(err < tolerance)) stats.passed = false;
        }
      }
    }
  }
  return stats;
}

}  // namespace wta
