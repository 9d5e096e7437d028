#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wta/filters.hpp"
#include "wta/mathcore.hpp"
#include "wta/rng.hpp"

namespace wta {

enum class CircuitRole { Input, Hidden, Output };

std::string to_string(CircuitRole role);
CircuitRole parse_circuit_role(const std::string& name);

struct Circuit {
  int size = 1;  // C_i
  CircuitRole role = CircuitRole::Hidden;

  friend bool operator==(const Circuit&, const Circuit&) = default;
};

/// Directed graph of WTA circuits. Cycles are allowed; input circuits are
/// parameterless clamped sources and may not receive edges.
class Topology {
 public:
  int add_circuit(int size, CircuitRole role);
  void connect(int pre, int post);

  int num_circuits() const { return static_cast<int>(circuits_.size()); }
  const Circuit& circuit(int i) const { return circuits_.at(static_cast<std::size_t>(i)); }
  std::span<const int> presynaptic(int i) const { return presynaptic_.at(static_cast<std::size_t>(i)); }
  std::vector<int> with_role(CircuitRole role) const;
  std::vector<std::pair<int, int>> edges() const;

  void validate() const;

  friend bool operator==(const Topology&, const Topology&) = default;

 private:
  std::vector<Circuit> circuits_;
  std::vector<std::vector<int>> presynaptic_;
};

/// Flat parameter layout of one circuit:
///   [bias (C) | feedback W_i (C x C) | W_{j,i}^{(k)} (C x C_j) for each
///    pre-synaptic j in edge order, k = 0..K-1]
/// Matrices are row-major with rows indexed by the post-synaptic unit.
/// Gradients, eligibility traces and accumulators share this layout.
struct CircuitLayout {
  int size = 0;
  std::vector<int> pre;
  std::vector<int> pre_sizes;
  std::size_t feedback_offset = 0;
  std::vector<std::size_t> synaptic_offsets;  // index p * K + k
  std::size_t total = 0;
};

/// Per-circuit learnable parameters. Input circuits hold empty vectors.
struct NetworkParams {
  std::vector<std::vector<double>> circuits;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct InitConfig {
  double weight_std = 0.1;
  double bias = 0.0;
  /// Overrides `bias` for hidden circuits when set.
  std::optional<double> hidden_bias;
};

enum class StepMode {
  Training,  // inputs and visible outputs clamped
  FreeRun,   // only inputs clamped, outputs sampled from the model
};

enum class ExecPolicy { Serial, Parallel };

/// Clamp entry per circuit; required for inputs, and for outputs in training.
using ClampMap = std::vector<std::optional<SpikeSymbol>>;

/// Per-circuit filtered traces: K synaptic C-vectors followed by the somatic
/// C-vector, flattened as [(k * C + c)], somatic at k = K.
using CircuitTraces = std::vector<double>;

struct NetworkState {
  std::vector<TraceBuffer> buffers;
  /// Traces s_{t-1} that will feed the next step's potentials.
  std::vector<CircuitTraces> traces;
  /// Traces that produced the current `potentials` (read by learning).
  std::vector<CircuitTraces> used_traces;
  std::vector<std::vector<double>> potentials;
  std::vector<std::vector<double>> probs;
  std::vector<double> silence;
  std::vector<SpikeSymbol> spikes;
  std::vector<RngStream> rng;
  long long time = 0;  // completed steps

  /// Clears spike history and traces; RNG streams keep their position.
  void reset();
};

class Network {
 public:
  Network(Topology topology, FilterBank filters);

  const Topology& topology() const { return topology_; }
  const FilterBank& filters() const { return filters_; }
  const CircuitLayout& layout(int i) const { return layouts_.at(static_cast<std::size_t>(i)); }
  int num_circuits() const { return topology_.num_circuits(); }
  int num_filters() const { return filters_.num_synaptic(); }
  std::size_t num_parameters() const;

  NetworkParams zero_params() const;
  NetworkParams init_params(const InitConfig& init, std::uint64_t seed) const;
  void check_params(const NetworkParams& params) const;

  /// Fresh state with one RNG stream per circuit, stream id = circuit id.
  NetworkState make_state(std::uint64_t seed) const;

  /// u_i = sum_j sum_k W_{j,i}^{(k)} strace_{j}^{(k)} + W_i somtrace_i + bias_i
  /// evaluated on the given per-circuit traces.
  void membrane_potential(int i, std::span<const double> params,
                          const std::vector<CircuitTraces>& traces,
                          std::span<double> out) const;
  std::vector<double> membrane_potential(int i, const NetworkParams& params,
                                         const std::vector<CircuitTraces>& traces) const;

  /// One synchronous time step. Every potential is computed from the
  /// previous snapshot before any circuit samples; clamped circuits emit
  /// their clamp. Spikes are then pushed into the trace buffers.
  void step(NetworkState& state, const NetworkParams& params, const ClampMap& clamp,
            StepMode mode, ExecPolicy policy = ExecPolicy::Parallel) const;

  /// Serial reference for step(); kept for bit-identity tests.
  void step_serial(NetworkState& state, const NetworkParams& params,
                   const ClampMap& clamp, StepMode mode) const {
    step(state, params, clamp, mode, ExecPolicy::Serial);
  }

  /// Recomputes traces of every circuit from its buffer into `out`.
  void compute_traces(const NetworkState& state, std::vector<CircuitTraces>& out) const;

 private:
  void validate_clamp(const ClampMap& clamp, StepMode mode) const;
  void sample_circuit(int i, NetworkState& state, const NetworkParams& params,
                      const ClampMap& clamp, StepMode mode) const;
  void advance_circuit(int i, NetworkState& state) const;

  Topology topology_;
  FilterBank filters_;
  std::vector<CircuitLayout> layouts_;
};

/// Circuits below this count step serially even under ExecPolicy::Parallel.
inline constexpr int kParallelMinCircuits = 16;

/// Total spikes of each output circuit over a window, summed across units.
std::vector<long long> count_spikes(const std::vector<std::vector<SpikeSymbol>>& trains);

/// argmax of spike counts; ties go to the lowest index.
int predict_class(std::span<const long long> counts);
int predict_class(const std::vector<std::vector<SpikeSymbol>>& trains);

}  // namespace wta
