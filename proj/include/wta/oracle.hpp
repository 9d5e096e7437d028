#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wta/learning.hpp"
#include "wta/network.hpp"

namespace wta {

using ScalarFn = std::function<double(const std::vector<double>&)>;

/// Central differences (f(p + h e_k) - f(p - h e_k)) / 2h for every k.
/// Throws std::invalid_argument for h <= 0.
std::vector<double> fd_gradient(const ScalarFn& loss, std::span<const double> params,
                                double h = 1e-4);

/// |a - f| / max(|a|, |f|), with 0 when both are exactly zero.
double relative_error(double analytic, double numeric);

/// Network small enough to enumerate every hidden sequence, plus the data it
/// is conditioned on. `inputs[t]` lists input symbols in circuit-id order,
/// `targets[t]` the output symbols in circuit-id order, t = 0..T-1.
struct TinyNetSpec {
  Topology topology;
  FilterBank filters;
  NetworkParams params;
  std::vector<std::vector<SpikeSymbol>> inputs;
  std::vector<std::vector<SpikeSymbol>> targets;

  int steps() const { return static_cast<int>(inputs.size()); }
  /// prod over hidden circuits of (C + 1)^T, saturating at UINT64_MAX.
  std::uint64_t num_hidden_sequences() const;
  /// Shapes, symbols, and the enumeration bound.
  void validate() const;
};

inline constexpr std::uint64_t kMaxEnumeration = 100000;

struct ElboResult {
  double value = 0.0;
  NetworkParams gradient;
  double total_probability = 0.0;  // sum of p(h) over enumerated sequences
  std::uint64_t sequences = 0;
};

/// Exact discounted objective sum_h p(h || x) sum_t gamma^{T-t} l_t(h) and its
/// parameter gradient, by enumerating every hidden sequence in lexicographic
/// (circuit, time, symbol) order. Uses its own forward pass (direct
/// convolution over the spike history), independent of Network.
ElboResult exact_elbo(const TinyNetSpec& spec, double alpha, double r, double gamma);

struct McResult {
  NetworkParams mean;
  NetworkParams stderr_;
  std::uint64_t samples = 0;
};

/// Mean and componentwise standard error over `samples` independent episodes
/// of the library learner's estimator with eta = 0, kappa = 1, no baseline:
/// the final gamma-accumulator of each circuit. Sample n draws from streams
/// derived from (seed, n); the reduction order is fixed, so results do not
/// depend on the thread count.
McResult mc_gradient_mean(const TinyNetSpec& spec, std::uint64_t samples, std::uint64_t seed,
                          double alpha, double r, double gamma);

/// The fixed estimator-check network: input -> hidden -> visible plus a
/// direct input -> visible edge, all C = 2, K = 1, tau = 2.
TinyNetSpec estimator_spec(int steps, std::uint64_t seed = 7);

/// Random network with at most 3 circuits, C <= 3, K <= 2, tau <= 3.
struct RandomTinyNet {
  Network net;
  NetworkParams params;
  NetworkState state;  // after a few random steps, so traces are non-trivial
};
RandomTinyNet random_tiny_net(std::uint64_t seed);

struct GradCheckStats {
  double max_error = 0.0;
  std::string worst;  // description of the worst component
  std::size_t components = 0;
  bool passed = true;
};

/// Compares log_prob_gradient with finite differences of log p(s | u(theta))
/// for every non-input circuit of `count` random tiny networks and every
/// symbol s. `flip_sign` negates the analytic gradient (mutation check).
GradCheckStats check_log_prob_gradients(int count, std::uint64_t seed, double h,
                                        double tolerance, bool flip_sign = false);

}  // namespace wta
