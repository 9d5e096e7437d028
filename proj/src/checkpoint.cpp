#include "wta/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace wta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tensor(std::vector<std::size_t> shape, const double* data) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return {{"shape", shape}, {"data", std::vector<double>(data, data + n)}};
}

// Copies a tensor's data into `out` after checking its shape.
void untensor(const json& j, const std::vector<std::size_t>& shape, double* out) {
  if (j.at("shape").get<std::vector<std::size_t>>() != shape) {
    throw DataError("checkpoint: tensor shape mismatch");
  }
  const auto data = j.at("data").get<std::vector<double>>();
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (data.size() != n) throw DataError("checkpoint: tensor size does not match its shape");
  std::copy(data.begin(), data.end(), out);
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  const Network net(ck.topology, ck.filters);
  net.check_params(ck.params);
  const auto K = static_cast<std::size_t>(net.num_filters());

  json circuits = json::array();
  for (int i = 0; i < net.num_circuits(); ++i) {
    const Circuit& c = ck.topology.circuit(i);
    const CircuitLayout& lay = net.layout(i);
    const auto C = static_cast<std::size_t>(c.size);
    json jc = {{"id", i}, {"size", c.size}, {"role", to_string(c.role)}};
    jc["pre"] = std::vector<int>(ck.topology.presynaptic(i).begin(), ck.topology.presynaptic(i).end());
    if (c.role != CircuitRole::Input) {
      const double* p = ck.params.circuits[static_cast<std::size_t>(i)].data();
      jc["bias"] = tensor({C}, p);
      jc["feedback"] = tensor({C, C}, p + lay.feedback_offset);
      json syn = json::array();
      for (std::size_t q = 0; q < lay.pre.size(); ++q) {
        for (std::size_t k = 0; k < K; ++k) {
          json w = tensor({C, static_cast<std::size_t>(lay.pre_sizes[q])}, p + lay.synaptic_offsets[q * K + k]);
          w["pre"] = lay.pre[q];
          w["filter"] = k;
          syn.push_back(std::move(w));
        }
      }
      jc["synaptic"] = std::move(syn);
    }
    circuits.push_back(std::move(jc));
  }

  json j;
  j["format"] = "wtasnn-checkpoint";
  j["version"] = 1;
  j["config"] = json::parse(dump_config(ck.config));
  j["config_hash"] = ck.config_hash;
  j["epoch"] = ck.epoch;
  j["seed"] = ck.seed;
  j["num_classes"] = ck.num_classes;
  j["filters"] = {{"synaptic", {{"shape", {ck.filters.synaptic.size(), static_cast<std::size_t>(ck.filters.duration())}},
                                {"data", ck.filters.synaptic}}},
                  {"somatic", {{"shape", {static_cast<std::size_t>(ck.filters.duration())}}, {"data", ck.filters.somatic}}}};
  j["circuits"] = std::move(circuits);
  j["rng"] = ck.rng_states;

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Checkpoint ck;
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != "wtasnn-checkpoint") throw DataError("not a checkpoint file");
    ck.config = parse_config(j.at("config").dump());
    ck.config_hash = j.at("config_hash").get<std::string>();
    ck.epoch = j.at("epoch").get<int>();
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.num_classes = j.at("num_classes").get<int>();

    const json& f = j.at("filters");
    ck.filters.synaptic = f.at("synaptic").at("data").get<std::vector<Taps>>();
    ck.filters.somatic = f.at("somatic").at("data").get<Taps>();
    ck.filters.validate();

    for (const json& jc : j.at("circuits")) {
      const int id = ck.topology.add_circuit(jc.at("size").get<int>(),
                                             parse_circuit_role(jc.at("role").get<std::string>()));
      if (id != jc.at("id").get<int>()) throw DataError("checkpoint: circuits out of order");
    }
    const json& circuits = j.at("circuits");
    for (std::size_t i = 0; i < circuits.size(); ++i) {
      for (int pre : circuits[i].at("pre").get<std::vector<int>>()) ck.topology.connect(pre, static_cast<int>(i));
    }

    const Network net(ck.topology, ck.filters);
    const auto K = static_cast<std::size_t>(net.num_filters());
    ck.params = net.zero_params();
    for (int i = 0; i < net.num_circuits(); ++i) {
      if (ck.topology.circuit(i).role == CircuitRole::Input) continue;
      const json& jc = circuits[static_cast<std::size_t>(i)];
      const CircuitLayout& lay = net.layout(i);
      const auto C = static_cast<std::size_t>(lay.size);
      double* p = ck.params.circuits[static_cast<std::size_t>(i)].data();
      untensor(jc.at("bias"), {C}, p);
      untensor(jc.at("feedback"), {C, C}, p + lay.feedback_offset);
      const json& syn = jc.at("synaptic");
      if (syn.size() != lay.pre.size() * K) throw DataError("checkpoint: synaptic block count mismatch");
      for (std::size_t q = 0; q < lay.pre.size(); ++q) {
        for (std::size_t k = 0; k < K; ++k) {
          const json& w = syn[q * K + k];
          if (w.at("pre").get<int>() != lay.pre[q] || w.at("filter").get<std::size_t>() != k) {
            throw DataError("checkpoint: synaptic blocks out of order");
          }
          untensor(w, {C, static_cast<std::size_t>(lay.pre_sizes[q])}, p + lay.synaptic_offsets[q * K + k]);
        }
      }
    }
    ck.rng_states = j.at("rng").get<std::vector<std::string>>();
    if (!ck.rng_states.empty() && ck.rng_states.size() != static_cast<std::size_t>(net.num_circuits())) {
      throw DataError("checkpoint: rng state count mismatch");
    }
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
  return ck;
}

Network checkpoint_network(const Checkpoint& ck) { return Network(ck.topology, ck.filters); }

NetworkState checkpoint_state(const Network& net, const Checkpoint& ck) {
  NetworkState state = net.make_state(ck.seed);
  for (std::size_t i = 0; i < ck.rng_states.size(); ++i) state.rng[i].set_state(ck.rng_states[i]);
  return state;
}

}  // namespace wta
