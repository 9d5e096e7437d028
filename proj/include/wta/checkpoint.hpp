#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wta/experiment.hpp"
#include "wta/network.hpp"
#include "wta/rng.hpp"

namespace wta {

/// Everything needed to rebuild a trained network. Stored as JSON with an
/// explicit shape next to every array; doubles are written in shortest
/// round-trip form, so save -> load is bit-exact.
struct Checkpoint {
  ExperimentConfig config;
  std::string config_hash;
  int epoch = 0;
  std::uint64_t seed = 0;
  int num_classes = 0;
  Topology topology;
  FilterBank filters;
  NetworkParams params;
  std::vector<std::string> rng_states;  // one per circuit
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws DataError on unreadable or inconsistent files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the network and restores RNG streams into a fresh state.
Network checkpoint_network(const Checkpoint& ckpt);
NetworkState checkpoint_state(const Network& net, const Checkpoint& ckpt);

}  // namespace wta
