#pragma once

#include <functional>
#include <span>
#include <vector>

#include "wta/data.hpp"
#include "wta/mathcore.hpp"
#include "wta/network.hpp"

namespace wta {

struct LearnerConfig {
  double eta = 0.05;
  double gamma = 0.2;    // outer discount of the update average
  double kappa = 0.2;    // eligibility averaging
  double kappa_b = 0.05; // baseline averaging
  double alpha = 1.0;    // KL regularization weight
  double r = 0.3;        // desired hidden spiking rate
  bool halve_lr_per_epoch = true;
  bool use_baseline = true;
  double grad_clip = 0.0;  // elementwise clip on per-step gradients, 0 = off

  /// Learning rate used throughout the experiments: 0.05 / H.
  static double default_eta(int num_hidden) { return 0.05 / num_hidden; }
  /// Throws std::invalid_argument when a constant leaves its range. gamma
  /// and kappa may equal 1 (undiscounted sums, used by the estimator checks).
  void validate() const;
};

/// Gradient of log p(s | u) with respect to one circuit's parameters, in the
/// circuit's flat layout: post = s - sigma(u); bias <- post,
/// W_i <- post * somtrace^T, W_{j,i}^{(k)} <- post * strace_j^{(k)T}.
/// `traces` must be the snapshot that produced u.
void log_prob_gradient(const Network& net, int i, SpikeSymbol s, std::span<const double> probs,
                       const std::vector<CircuitTraces>& traces, std::span<double> grad);
std::vector<double> log_prob_gradient(const Network& net, int i, SpikeSymbol s,
                                      std::span<const double> probs,
                                      const std::vector<CircuitTraces>& traces);

/// log of the i.i.d. reference distribution: log(r / C) for a spike,
/// log(1 - r) for silence. r = 0 with a spike yields the guarded floor.
double reference_log_prob(SpikeSymbol h, double r, int num_units, LogGuard* guard = nullptr);

/// l_t = sum_{visible} log p(x|u) - alpha * sum_{hidden} (log p(h|u) - log r(h)),
/// reduced in circuit-id order.
double reward(const Network& net, const NetworkState& state, double alpha, double r,
              LogGuard* guard = nullptr);

/// Per-parameter optimized baseline b = <l e^2>_{kb} / <e^2>_{kb}.
///
/// The ratio is tracked as a running weighted mean, mean += (e^2/den)(l - mean),
/// which equals num/den algebraically and reproduces a constant reward
/// exactly. Entries that never saw a nonzero eligibility (den == 0) report
/// b = 0; tiny den needs no guard since the mean never divides 0 by 0.
struct BaselineState {
  std::vector<double> den;
  std::vector<double> mean;

  explicit BaselineState(std::size_t n = 0) : den(n, 0.0), mean(n, 0.0) {}
  void reset();
};

void baseline_step(std::span<const double> eligibility, double reward, double kappa_b,
                   BaselineState& state, std::span<double> b);

/// acc <- gamma acc + grad; params <- params + eta acc.
void visible_update(std::span<double> params, std::span<const double> grad,
                    TemporalAverage& acc, double eta);

/// e <- kappa e + grad; b from the baseline (or zero when `baseline` is null);
/// acc <- gamma acc + (l - b) * e; params <- params + eta acc.
void hidden_update(std::span<double> params, std::span<const double> grad, double reward,
                   TemporalAverage& eligibility, BaselineState* baseline, double kappa_b,
                   TemporalAverage& acc, double eta, std::span<double> b_scratch);

/// Per-circuit learner state. Visible circuits use only `acc`.
struct CircuitLearnerState {
  TemporalAverage eligibility;
  BaselineState baseline;
  TemporalAverage acc;
  std::vector<double> grad;
  std::vector<double> b;
};

/// Online learner implementing the variational WTA rule for every
/// non-input circuit of a network. All updates computed at step t are
/// applied after the full network step.
class Learner {
 public:
  Learner(const Network& net, LearnerConfig config);

  const LearnerConfig& config() const { return config_; }
  void set_config(const LearnerConfig& config);

  /// Zeroes eligibility traces, baselines and accumulators.
  void reset();

  /// Gradients, baselines and parameter updates for the step just taken by
  /// `state`, driven by the supplied reward.
  void update(const NetworkState& state, NetworkParams& params, double reward, double eta,
              ExecPolicy policy = ExecPolicy::Parallel);

  /// One online step: network step with clamps, reward, update. Returns l_t.
  double train_step(NetworkState& state, NetworkParams& params, const ClampMap& clamp,
                    double eta, ExecPolicy policy = ExecPolicy::Parallel);

  const CircuitLearnerState& circuit_state(int i) const {
    return circuits_.at(static_cast<std::size_t>(i));
  }
  LogGuard& guard() { return guard_; }

 private:
  void update_circuit(int i, const NetworkState& state, NetworkParams& params, double reward,
                      double eta);

  const Network* net_;
  LearnerConfig config_;
  std::vector<CircuitLearnerState> circuits_;
  LogGuard guard_;
};

/// Clamp map for step t of an example: input circuits (in id order) take the
/// sequence's symbols; in training, output circuit `label` emits unit 1 at
/// every step and the other outputs stay silent.
ClampMap make_clamp(const Network& net, const EncodedSequence& seq, int t, StepMode mode);

struct ProgressRow {
  int epoch = 0;
  int example = 0;       // examples seen in this epoch
  double mean_reward = 0.0;
  double hidden_rate = 0.0;
  double train_acc = 0.0;
};

struct EpochMetrics {
  std::vector<double> example_mean_reward;
  double hidden_rate = 0.0;
  /// Prequential accuracy: each example is first free-run with the current
  /// parameters and classified, then trained on. NaN when disabled.
  double train_acc = 0.0;
};

struct EpochOptions {
  int epoch = 0;
  int log_every = 100;
  ExecPolicy policy = ExecPolicy::Parallel;
  /// Visiting order as indices into the examples; empty = natural order.
  std::span<const std::size_t> order;
  bool track_accuracy = true;
  std::uint64_t probe_seed = 0;  // RNG for the prequential free runs
  std::function<void(const ProgressRow&)> on_progress;
};

/// Trains on every example once, in `options.order`, resetting network and learner
/// state at each example boundary.
EpochMetrics train_epoch(const Network& net, NetworkParams& params, NetworkState& state,
                         Learner& learner, std::span<const EncodedSequence> examples, double eta,
                         const EpochOptions& options = {});

/// Learning rate for a 0-based epoch index under the halving schedule.
double epoch_learning_rate(const LearnerConfig& config, int epoch);

}  // namespace wta
