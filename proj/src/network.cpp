#include "wta/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wta {

std::string to_string(CircuitRole role) {
  switch (role) {
    case CircuitRole::Input: return "input";
    case CircuitRole::Hidden: return "hidden";
    case CircuitRole::Output: return "output";
  }
  return "hidden";
}

CircuitRole parse_circuit_role(const std::string& name) {
  if (name == "input") return CircuitRole::Input;
  if (name == "hidden") return CircuitRole::Hidden;
  if (name == "output") return CircuitRole::Output;
  throw std::invalid_argument("unknown circuit role '" + name + "'");
}

int Topology::add_circuit(int size, CircuitRole role) {
  if (size < 1 || size > 255) throw std::invalid_argument("circuit size must be in [1, 255]");
  circuits_.push_back({size, role});
  presynaptic_.emplace_back();
  return num_circuits() - 1;
}

void Topology::connect(int pre, int post) {
  if (pre < 0 || pre >= num_circuits() || post < 0 || post >= num_circuits()) {
    throw std::invalid_argument("connect: circuit id out of range");
  }
  if (pre == post) {
    throw std::invalid_argument("connect: self-edges are modelled by the somatic feedback");
  }
  if (circuit(post).role == CircuitRole::Input) {
    throw std::invalid_argument("connect: input circuits cannot receive edges");
  }
  auto& list = presynaptic_[static_cast<std::size_t>(post)];
  if (std::find(list.begin(), list.end(), pre) != list.end()) {
    throw std::invalid_argument("connect: duplicate edge");
  }
  list.push_back(pre);
}

std::vector<int> Topology::with_role(CircuitRole role) const {
  std::vector<int> ids;
  for (int i = 0; i < num_circuits(); ++i) {
    if (circuit(i).role == role) ids.push_back(i);
  }
  return ids;
}

std::vector<std::pair<int, int>> Topology::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int post = 0; post < num_circuits(); ++post) {
    for (int pre : presynaptic(post)) out.emplace_back(pre, post);
  }
  return out;
}

void Topology::validate() const {
  if (circuits_.empty()) throw std::invalid_argument("topology has no circuits");
  for (int i = 0; i < num_circuits(); ++i) {
    if (circuit(i).role == CircuitRole::Input && !presynaptic(i).empty()) {
      throw std::invalid_argument("input circuit " + std::to_string(i) + " has incoming edges");
    }
  }
}

void NetworkState::reset() {
  for (auto& b : buffers) b.reset();
  for (auto& v : traces) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : used_traces) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : potentials) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : probs) std::fill(v.begin(), v.end(), 0.0);
  std::fill(silence.begin(), silence.end(), 1.0);
  std::fill(spikes.begin(), spikes.end(), SpikeSymbol::silence());
  time = 0;
}

Network::Network(Topology topology, FilterBank filters)
    : topology_(std::move(topology)), filters_(std::move(filters)) {
  topology_.validate();
  filters_.validate();
  const auto K = static_cast<std::size_t>(filters_.num_synaptic());
  layouts_.resize(static_cast<std::size_t>(topology_.num_circuits()));
  for (int i = 0; i < topology_.num_circuits(); ++i) {
    CircuitLayout& lay = layouts_[static_cast<std::size_t>(i)];
    const Circuit& c = topology_.circuit(i);
    lay.size = c.size;
    if (c.role == CircuitRole::Input) continue;
    const auto C = static_cast<std::size_t>(c.size);
    lay.feedback_offset = C;
    std::size_t offset = C + C * C;
    for (int pre : topology_.presynaptic(i)) {
      const int pre_size = topology_.circuit(pre).size;
      lay.pre.push_back(pre);
      lay.pre_sizes.push_back(pre_size);
      for (std::size_t k = 0; k < K; ++k) {
        lay.synaptic_offsets.push_back(offset);
        offset += C * static_cast<std::size_t>(pre_size);
      }
    }
    lay.total = offset;
  }
}

std::size_t Network::num_parameters() const {
  std::size_t n = 0;
  for (const auto& lay : layouts_) n += lay.total;
  return n;
}

NetworkParams Network::zero_params() const {
  NetworkParams p;
  p.circuits.reserve(layouts_.size());
  for (const auto& lay : layouts_) p.circuits.emplace_back(lay.total, 0.0);
  return p;
}

NetworkParams Network::init_params(const InitConfig& init, std::uint64_t seed) const {
  NetworkParams p = zero_params();
  for (int i = 0; i < num_circuits(); ++i) {
    const CircuitLayout& lay = layout(i);
    if (lay.total == 0) continue;
    RngStream rng = RngStream(seed, 0x1000 + static_cast<std::uint64_t>(i));
    auto& v = p.circuits[static_cast<std::size_t>(i)];
    const bool hidden = topology_.circuit(i).role == CircuitRole::Hidden;
    const double bias = hidden && init.hidden_bias ? *init.hidden_bias : init.bias;
    for (std::size_t n = 0; n < static_cast<std::size_t>(lay.size); ++n) v[n] = bias;
    for (std::size_t n = lay.feedback_offset; n < lay.total; ++n) {
      v[n] = init.weight_std > 0.0 ? rng.normal(0.0, init.weight_std) : 0.0;
    }
  }
  return p;
}

void Network::check_params(const NetworkParams& params) const {
  if (params.circuits.size() != layouts_.size()) {
    throw std::invalid_argument("parameter set does not match topology");
  }
  for (std::size_t i = 0; i < layouts_.size(); ++i) {
    if (params.circuits[i].size() != layouts_[i].total) {
      throw std::invalid_argument("parameter shape mismatch for circuit " + std::to_string(i));
    }
  }
}

NetworkState Network::make_state(std::uint64_t seed) const {
  NetworkState s;
  const auto n = static_cast<std::size_t>(num_circuits());
  const auto K = static_cast<std::size_t>(num_filters());
  const int tau = filters_.duration();
  s.buffers.reserve(n);
  s.rng.reserve(n);
  for (int i = 0; i < num_circuits(); ++i) {
    const auto C = static_cast<std::size_t>(topology_.circuit(i).size);
    s.buffers.emplace_back(static_cast<int>(C), tau);
    s.traces.emplace_back((K + 1) * C, 0.0);
    s.used_traces.emplace_back((K + 1) * C, 0.0);
    s.potentials.emplace_back(C, 0.0);
    s.probs.emplace_back(C, 0.0);
    s.rng.emplace_back(seed, static_cast<std::uint64_t>(i));
  }
  s.silence.assign(n, 1.0);
  s.spikes.assign(n, SpikeSymbol::silence());
  return s;
}

void Network::membrane_potential(int i, std::span<const double> params,
                                 const std::vector<CircuitTraces>& traces,
                                 std::span<double> out) const {
  const CircuitLayout& lay = layout(i);
  const auto C = static_cast<std::size_t>(lay.size);
  const auto K = static_cast<std::size_t>(num_filters());
  if (params.size() != lay.total || out.size() != C) {
    throw std::invalid_argument("membrane_potential: shape mismatch");
  }
  for (std::size_t c = 0; c < C; ++c) out[c] = params[c];
  if (lay.total == 0) return;

  const CircuitTraces& own = traces[static_cast<std::size_t>(i)];
  const double* som = own.data() + K * C;
  const double* fb = params.data() + lay.feedback_offset;
  for (std::size_t r = 0; r < C; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < C; ++c) acc += fb[r * C + c] * som[c];
    out[r] += acc;
  }

  for (std::size_t p = 0; p < lay.pre.size(); ++p) {
    const auto Cj = static_cast<std::size_t>(lay.pre_sizes[p]);
    const CircuitTraces& pre = traces[static_cast<std::size_t>(lay.pre[p])];
    for (std::size_t k = 0; k < K; ++k) {
      const double* tr = pre.data() + k * Cj;
      const double* W = params.data() + lay.synaptic_offsets[p * K + k];
      for (std::size_t c = 0; c < Cj; ++c) {
        const double x = tr[c];
        if (x == 0.0) continue;
        for (std::size_t r = 0; r < C; ++r) out[r] += W[r * Cj + c] * x;
      }
    }
  }
}

std::vector<double> Network::membrane_potential(int i, const NetworkParams& params,
                                                const std::vector<CircuitTraces>& traces) const {
  std::vector<double> u(static_cast<std::size_t>(layout(i).size));
  membrane_potential(i, params.circuits.at(static_cast<std::size_t>(i)), traces, u);
  return u;
}

void Network::validate_clamp(const ClampMap& clamp, StepMode mode) const {
  if (clamp.size() != static_cast<std::size_t>(num_circuits())) {
    throw std::invalid_argument("clamp map size does not match circuit count");
  }
  for (int i = 0; i < num_circuits(); ++i) {
    const Circuit& c = topology_.circuit(i);
    const auto& entry = clamp[static_cast<std::size_t>(i)];
    const bool required = c.role == CircuitRole::Input ||
                          (c.role == CircuitRole::Output && mode == StepMode::Training);
    if (required && !entry) {
      throw std::invalid_argument("missing clamp for circuit " + std::to_string(i));
    }
    if (c.role == CircuitRole::Hidden && entry) {
      throw std::invalid_argument("hidden circuit " + std::to_string(i) + " cannot be clamped");
    }
    if (entry && !entry->valid_for(c.size)) {
      throw std::invalid_argument("clamp symbol out of range for circuit " + std::to_string(i));
    }
  }
}

void Network::sample_circuit(int i, NetworkState& state, const NetworkParams& params,
                             const ClampMap& clamp, StepMode mode) const {
  const auto idx = static_cast<std::size_t>(i);
  const Circuit& c = topology_.circuit(i);
  if (c.role == CircuitRole::Input) {
    state.spikes[idx] = *clamp[idx];
    return;
  }
  auto& u = state.potentials[idx];
  membrane_potential(i, params.circuits[idx], state.traces, u);
  state.silence[idx] = wta_softmax_into(u, state.probs[idx]);
  const bool clamped = c.role == CircuitRole::Output && mode == StepMode::Training;
  state.spikes[idx] = clamped ? *clamp[idx] : sample_spike(state.probs[idx], state.rng[idx]);
}

void Network::advance_circuit(int i, NetworkState& state) const {
  const auto idx = static_cast<std::size_t>(i);
  const TraceBuffer& buf = state.buffers[idx];
  const auto C = static_cast<std::size_t>(buf.num_units());
  const auto K = static_cast<std::size_t>(num_filters());
  std::swap(state.traces[idx], state.used_traces[idx]);
  // Buffer still holds s_{<= t-1}: its trace is s_t's successor input.
  double* out = state.traces[idx].data();
  for (std::size_t k = 0; k < K; ++k) {
    buf.trace(filters_.synaptic[k], std::span<double>(out + k * C, C));
  }
  buf.trace(filters_.somatic, std::span<double>(out + K * C, C));
  state.buffers[idx].push(state.spikes[idx]);
}

void Network::step(NetworkState& state, const NetworkParams& params, const ClampMap& clamp,
                   StepMode mode, ExecPolicy policy) const {
  validate_clamp(clamp, mode);
  const int n = num_circuits();
  const bool parallel = policy == ExecPolicy::Parallel && n >= kParallelMinCircuits;

  // Phase 1: potentials and sampling against the t-1 snapshot.
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) sample_circuit(i, state, params, clamp, mode);

  // Phase 2: shift traces and record the new spikes.
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) advance_circuit(i, state);

  ++state.time;
}

void Network::compute_traces(const NetworkState& state, std::vector<CircuitTraces>& out) const {
  const auto K = static_cast<std::size_t>(num_filters());
  out.resize(state.buffers.size());
  for (std::size_t i = 0; i < state.buffers.size(); ++i) {
    const TraceBuffer& buf = state.buffers[i];
    const auto C = static_cast<std::size_t>(buf.num_units());
    out[i].assign((K + 1) * C, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      buf.trace(filters_.synaptic[k], std::span<double>(out[i].data() + k * C, C));
    }
    buf.trace(filters_.somatic, std::span<double>(out[i].data() + K * C, C));
  }
}

std::vector<long long> count_spikes(const std::vector<std::vector<SpikeSymbol>>& trains) {
  std::vector<long long> counts;
  counts.reserve(trains.size());
  for (const auto& train : trains) {
    counts.push_back(std::count_if(train.begin(), train.end(),
                                   [](SpikeSymbol s) { return !s.is_silent(); }));
  }
  return counts;
}

int predict_class(std::span<const long long> counts) {
  if (counts.empty()) throw std::invalid_argument("predict_class: no output circuits");
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

int predict_class(const std::vector<std::vector<SpikeSymbol>>& trains) {
  if (trains.empty() || trains.front().empty()) {
    throw std::invalid_argument("predict_class: empty window");
  }
  const auto counts = count_spikes(trains);
  return predict_class(counts);
}

}  // namespace wta
