#include "wta/learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace wta {

void LearnerConfig::validate() const {
  auto in_open = [](double v) { return v > 0.0 && v < 1.0; };
  auto in_half_open = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("eta must be >= 0");
  if (!in_half_open(gamma)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (!in_half_open(kappa)) throw std::invalid_argument("kappa must lie in (0, 1]");
  if (!in_open(kappa_b)) throw std::invalid_argument("kappa_b must lie in (0, 1)");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("r must lie in [0, 1)");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be >= 0");
}

void log_prob_gradient(const Network& net, int i, SpikeSymbol s, std::span<const double> probs,
                       const std::vector<CircuitTraces>& traces, std::span<double> grad) {
  const CircuitLayout& lay = net.layout(i);
  const auto C = static_cast<std::size_t>(lay.size);
  const auto K = static_cast<std::size_t>(net.num_filters());
  if (grad.size() != lay.total || probs.size() != C) {
    throw std::invalid_argument("log_prob_gradient: shape mismatch");
  }
  if (!s.valid_for(lay.size)) throw std::invalid_argument("log_prob_gradient: symbol out of range");

  double post[256];
  for (std::size_t c = 0; c < C; ++c) post[c] = -probs[c];
  if (!s.is_silent()) post[static_cast<std::size_t>(s.index() - 1)] += 1.0;

  for (std::size_t c = 0; c < C; ++c) grad[c] = post[c];

  const double* som = traces[static_cast<std::size_t>(i)].data() + K * C;
  double* fb = grad.data() + lay.feedback_offset;
  for (std::size_t r = 0; r < C; ++r) {
    for (std::size_t c = 0; c < C; ++c) fb[r * C + c] = post[r] * som[c];
  }

  for (std::size_t p = 0; p < lay.pre.size(); ++p) {
    const auto Cj = static_cast<std::size_t>(lay.pre_sizes[p]);
    const CircuitTraces& pre = traces[static_cast<std::size_t>(lay.pre[p])];
    for (std::size_t k = 0; k < K; ++k) {
      const double* tr = pre.data() + k * Cj;
      double* W = grad.data() + lay.synaptic_offsets[p * K + k];
      for (std::size_t r = 0; r < C; ++r) {
        for (std::size_t c = 0; c < Cj; ++c) W[r * Cj + c] = post[r] * tr[c];
      }
    }
  }
}

std::vector<double> log_prob_gradient(const Network& net, int i, SpikeSymbol s,
                                      std::span<const double> probs,
                                      const std::vector<CircuitTraces>& traces) {
  std::vector<double> grad(net.layout(i).total);
  log_prob_gradient(net, i, s, probs, traces, grad);
  return grad;
}

double reference_log_prob(SpikeSymbol h, double r, int num_units, LogGuard* guard) {
  if (h.is_silent()) return guarded_log(1.0 - r, guard);
  return guarded_log(r / num_units, guard);
}

double reward(const Network& net, const NetworkState& state, double alpha, double r,
              LogGuard* guard) {
  double visible = 0.0;
  double hidden = 0.0;
  for (int i = 0; i < net.num_circuits(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const Circuit& c = net.topology().circuit(i);
    if (c.role == CircuitRole::Output) {
      visible += log_prob(state.spikes[idx], state.potentials[idx]);
    } else if (c.role == CircuitRole::Hidden) {
      hidden += log_prob(state.spikes[idx], state.potentials[idx]) -
                reference_log_prob(state.spikes[idx], r, c.size, guard);
    }
  }
  return visible - alpha * hidden;
}

void BaselineState::reset() {
  std::fill(den.begin(), den.end(), 0.0);
  std::fill(mean.begin(), mean.end(), 0.0);
}

void baseline_step(std::span<const double> eligibility, double reward, double kappa_b,
                   BaselineState& state, std::span<double> b) {
  const std::size_t n = eligibility.size();
  if (state.den.size() != n || b.size() != n) {
    throw std::invalid_argument("baseline_step: size mismatch");
  }
  for (std::size_t m = 0; m < n; ++m) {
    const double e2 = eligibility[m] * eligibility[m];
    const double den = kappa_b * state.den[m] + e2;
    state.den[m] = den;
    if (den > 0.0 && e2 > 0.0) state.mean[m] += (e2 / den) * (reward - state.mean[m]);
    b[m] = den > 0.0 ? state.mean[m] : 0.0;
  }
}

void visible_update(std::span<double> params, std::span<const double> grad,
                    TemporalAverage& acc, double eta) {
  acc.step(grad);
  const auto a = acc.value();
  for (std::size_t m = 0; m < params.size(); ++m) params[m] += eta * a[m];
}

void hidden_update(std::span<double> params, std::span<const double> grad, double reward,
                   TemporalAverage& eligibility, BaselineState* baseline, double kappa_b,
                   TemporalAverage& acc, double eta, std::span<double> b_scratch) {
  eligibility.step(grad);
  const auto e = eligibility.value();
  if (baseline) {
    baseline_step(e, reward, kappa_b, *baseline, b_scratch);
  } else {
    std::fill(b_scratch.begin(), b_scratch.end(), 0.0);
  }
  auto a = acc.mutable_value();
  const double g = acc.decay();
  for (std::size_t m = 0; m < a.size(); ++m) a[m] = g * a[m] + (reward - b_scratch[m]) * e[m];
  for (std::size_t m = 0; m < params.size(); ++m) params[m] += eta * a[m];
}

Learner::Learner(const Network& net, LearnerConfig config) : net_(&net), config_(config) {
  config_.validate();
  circuits_.reserve(static_cast<std::size_t>(net.num_circuits()));
  for (int i = 0; i < net.num_circuits(); ++i) {
    const std::size_t n = net.layout(i).total;
    circuits_.push_back(CircuitLearnerState{TemporalAverage(config_.kappa, n),
                                            BaselineState(n),
                                            TemporalAverage(config_.gamma, n),
                                            std::vector<double>(n, 0.0),
                                            std::vector<double>(n, 0.0)});
  }
}

void Learner::set_config(const LearnerConfig& config) {
  config.validate();
  const bool decays_changed = config.kappa != config_.kappa || config.gamma != config_.gamma;
  config_ = config;
  if (decays_changed) {
    for (auto& c : circuits_) {
      c.eligibility = TemporalAverage(config_.kappa, c.grad.size());
      c.acc = TemporalAverage(config_.gamma, c.grad.size());
    }
  }
}

void Learner::reset() {
  for (auto& c : circuits_) {
    c.eligibility.reset();
    c.baseline.reset();
    c.acc.reset();
  }
}

void Learner::update_circuit(int i, const NetworkState& state, NetworkParams& params,
                             double reward, double eta) {
  const auto idx = static_cast<std::size_t>(i);
  const Circuit& circuit = net_->topology().circuit(i);
  if (circuit.role == CircuitRole::Input) return;
  CircuitLearnerState& cs = circuits_[idx];
  log_prob_gradient(*net_, i, state.spikes[idx], state.probs[idx], state.used_traces, cs.grad);
  if (config_.grad_clip > 0.0) {
    for (double& g : cs.grad) g = std::clamp(g, -config_.grad_clip, config_.grad_clip);
  }
  auto& theta = params.circuits[idx];
  if (circuit.role == CircuitRole::Output) {
    visible_update(theta, cs.grad, cs.acc, eta);
  } else {
    hidden_update(theta, cs.grad, reward, cs.eligibility,
                  config_.use_baseline ? &cs.baseline : nullptr, config_.kappa_b, cs.acc, eta,
                  cs.b);
  }
}

void Learner::update(const NetworkState& state, NetworkParams& params, double reward,
                     double eta, ExecPolicy policy) {
  const int n = net_->num_circuits();
  const bool parallel = policy == ExecPolicy::Parallel && n >= kParallelMinCircuits;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) update_circuit(i, state, params, reward, eta);
}

double Learner::train_step(NetworkState& state, NetworkParams& params, const ClampMap& clamp,
                           double eta, ExecPolicy policy) {
  net_->step(state, params, clamp, StepMode::Training, policy);
  const double ell = reward(*net_, state, config_.alpha, config_.r, &guard_);
  update(state, params, ell, eta, policy);
  return ell;
}

ClampMap make_clamp(const Network& net, const EncodedSequence& seq, int t, StepMode mode) {
  const Topology& topo = net.topology();
  ClampMap clamp(static_cast<std::size_t>(topo.num_circuits()));
  int input = 0;
  int output = 0;
  for (int i = 0; i < topo.num_circuits(); ++i) {
    const CircuitRole role = topo.circuit(i).role;
    if (role == CircuitRole::Input) {
      if (input >= seq.circuits()) {
        throw std::invalid_argument("sequence has fewer circuits than the network's inputs");
      }
      if (seq.sizes[static_cast<std::size_t>(input)] != topo.circuit(i).size) {
        throw std::invalid_argument("sequence circuit size does not match input circuit");
      }
      clamp[static_cast<std::size_t>(i)] = seq.at(t, input);
      ++input;
    } else if (role == CircuitRole::Output) {
      if (mode == StepMode::Training) {
        clamp[static_cast<std::size_t>(i)] =
            output == seq.label ? SpikeSymbol::unit(1) : SpikeSymbol::silence();
      }
      ++output;
    }
  }
  if (input != seq.circuits()) {
    throw std::invalid_argument("sequence has more circuits than the network's inputs");
  }
  return clamp;
}

double epoch_learning_rate(const LearnerConfig& config, int epoch) {
  return config.halve_lr_per_epoch ? std::ldexp(config.eta, -epoch) : config.eta;
}

EpochMetrics train_epoch(const Network& net, NetworkParams& params, NetworkState& state,
                         Learner& learner, std::span<const EncodedSequence> examples, double eta,
                         const EpochOptions& options) {
  if (examples.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  if (!options.order.empty() && options.order.size() != examples.size()) {
    throw std::invalid_argument("train_epoch: order does not cover the dataset");
  }
  const std::vector<int> hidden = net.topology().with_role(CircuitRole::Hidden);
  const std::vector<int> outputs = net.topology().with_role(CircuitRole::Output);

  EpochMetrics metrics;
  long long hidden_spikes = 0;
  long long hidden_slots = 0;
  long long correct = 0;

  // Window accumulators for progress rows.
  double win_reward = 0.0;
  long long win_hidden_spikes = 0;
  long long win_hidden_slots = 0;
  int win_examples = 0;

  NetworkState probe = net.make_state(options.probe_seed);
  std::vector<long long> counts(outputs.size());
  for (std::size_t n = 0; n < examples.size(); ++n) {
    const EncodedSequence& seq = examples[options.order.empty() ? n : options.order[n]];
    if (options.track_accuracy && !outputs.empty()) {
      probe.reset();
      const RngStream base(options.probe_seed,
                           (static_cast<std::uint64_t>(options.epoch) << 32) | n);
      for (int i = 0; i < net.num_circuits(); ++i) {
        probe.rng[static_cast<std::size_t>(i)] = base.split(static_cast<std::uint64_t>(i));
      }
      std::fill(counts.begin(), counts.end(), 0);
      for (int t = 0; t < seq.steps; ++t) {
        net.step(probe, params, make_clamp(net, seq, t, StepMode::FreeRun), StepMode::FreeRun,
                 options.policy);
        for (std::size_t o = 0; o < outputs.size(); ++o) {
          counts[o] += probe.spikes[static_cast<std::size_t>(outputs[o])].is_silent() ? 0 : 1;
        }
      }
      if (predict_class(counts) == seq.label) ++correct;
    }

    state.reset();
    learner.reset();
    double reward_sum = 0.0;
    long long ex_hidden_spikes = 0;
    for (int t = 0; t < seq.steps; ++t) {
      const ClampMap clamp = make_clamp(net, seq, t, StepMode::Training);
      reward_sum += learner.train_step(state, params, clamp, eta, options.policy);
      for (int h : hidden) ex_hidden_spikes += state.spikes[static_cast<std::size_t>(h)].is_silent() ? 0 : 1;
    }
    const double mean_reward = seq.steps > 0 ? reward_sum / seq.steps : 0.0;
    metrics.example_mean_reward.push_back(mean_reward);
    const long long ex_slots = static_cast<long long>(hidden.size()) * seq.steps;
    hidden_spikes += ex_hidden_spikes;
    hidden_slots += ex_slots;

    win_reward += mean_reward;
    win_hidden_spikes += ex_hidden_spikes;
    win_hidden_slots += ex_slots;
    ++win_examples;
    const int seen = static_cast<int>(n) + 1;
    if (options.on_progress && options.log_every > 0 && seen % options.log_every == 0) {
      options.on_progress(ProgressRow{
          options.epoch, seen, win_reward / win_examples,
          win_hidden_slots > 0 ? static_cast<double>(win_hidden_spikes) / win_hidden_slots : 0.0,
          options.track_accuracy && !outputs.empty() ? static_cast<double>(correct) / seen
                                                     : std::numeric_limits<double>::quiet_NaN()});
      win_reward = 0.0;
      win_hidden_spikes = 0;
      win_hidden_slots = 0;
      win_examples = 0;
    }
  }
  metrics.hidden_rate = hidden_slots > 0 ? static_cast<double>(hidden_spikes) / hidden_slots : 0.0;
  metrics.train_acc = options.track_accuracy && !outputs.empty()
                         ? static_cast<double>(correct) / static_cast<double>(examples.size())
                         : std::numeric_limits<double>::quiet_NaN();
  return metrics;
}

}  // namespace wta
