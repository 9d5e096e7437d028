#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wta/data.hpp"
#include "wta/filters.hpp"
#include "wta/learning.hpp"
#include "wta/network.hpp"

namespace wta {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Wiring {
  Recurrent,    // hidden circuits fully connected among themselves
  Feedforward,  // hidden circuits see only the inputs
};

struct TopologyConfig {
  int hidden = 8;
  int circuit_size = 2;  // C of hidden and output circuits; 1 gives a binary SNN
  Wiring wiring = Wiring::Recurrent;
  bool input_to_output = true;
};

struct FilterConfig {
  FilterKind kind = FilterKind::RaisedCosine;
  int num_filters = 8;
  int duration = 10;
  double tau1 = 10.0;  // exp_diff only
  double tau2 = 5.0;
  double tau3 = 3.0;   // somatic
  std::vector<Taps> taps;  // custom only
};

struct DataConfig {
  std::string train_manifest;
  std::string test_manifest;
  Encoding encoding = Encoding::Wta;
  std::optional<std::int64_t> period_us;  // overrides the manifests
  std::optional<double> crop_ms;
  int max_train = 0;  // 0 = all
  int max_test = 0;
  bool shuffle = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int epochs = 1;
  int trials = 1;
  int log_every = 100;
  bool eval_each_epoch = true;
  bool parallel = true;
  TopologyConfig topology;
  FilterConfig filters;
  LearnerConfig learner;
  bool eta_from_hidden = true;  // eta resolves to 0.05 / H unless set
  InitConfig init;
  DataConfig data;

  /// Throws ConfigError.
  void validate() const;
  double resolved_eta() const;
  ExecPolicy policy() const { return parallel ? ExecPolicy::Parallel : ExecPolicy::Serial; }
};

/// Parses the JSON config text; unknown keys and bad values throw ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON text (sorted keys, every field present).
std::string dump_config(const ExperimentConfig& config, int indent = 2);
/// FNV-1a 64 of the compact canonical dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);
/// Prints every effective value, marking defaults, one `key = value` per line.
void print_config(std::ostream& out, const ExperimentConfig& config);

FilterBank build_filters(const FilterConfig& config);

/// Inputs (ids 0..N-1, sizes from `input_sizes`), H hidden circuits, then one
/// output circuit per class.
Topology build_topology(const TopologyConfig& config, const std::vector<int>& input_sizes,
                        int num_classes);

/// Resolves a manifest path: absolute as given, else under $WTASNN_DATA_ROOT
/// when set, else relative to the working directory.
std::filesystem::path resolve_data_path(const std::string& path);

struct LoadedSplit {
  DatasetManifest manifest;
  std::vector<EncodedSequence> examples;
};

/// Loads a manifest with the config's overrides and encoding; DataError on
/// failure.
LoadedSplit load_split(const DataConfig& config, const std::string& manifest_path, int max_examples);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<long long> class_total;
  std::vector<long long> class_correct;
  std::vector<int> predictions;
};

/// Free-runs every example (inputs clamped, outputs sampled) and predicts by
/// total output spike count. Deterministic for a given seed.
EvalReport evaluate(const Network& net, const NetworkParams& params,
                    std::span<const EncodedSequence> examples, int num_classes,
                    std::uint64_t seed, ExecPolicy policy = ExecPolicy::Parallel);

struct MetricsRow {
  int epoch = 0;
  int example = 0;
  double mean_reward = 0.0;
  double hidden_rate = 0.0;
  std::optional<double> train_acc;
  std::optional<double> test_acc;
};

inline constexpr const char* kMetricsHeader = "epoch,example,mean_reward,hidden_rate,train_acc,test_acc";

/// Formats one CSV line (no newline); empty optional fields stay blank.
std::string format_metrics_row(const MetricsRow& row);
/// Parses a metrics file, checking the header and every row's field count.
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

struct TrialResult {
  Network net;
  NetworkParams params;
  std::vector<RngStream> rng;  // training-state streams after the last step
  std::vector<MetricsRow> rows;
  int epochs_done = 0;
  std::optional<EvalReport> final_eval;
};

/// One trial with the given seed: builds the network for the data, trains
/// `config.epochs` epochs and evaluates on `test` after each epoch when
/// enabled. Rows are also streamed to `metrics_out` when non-null.
TrialResult run_trial(const ExperimentConfig& config, std::uint64_t seed,
                      std::span<const EncodedSequence> train, std::span<const EncodedSequence> test,
                      int num_classes, std::ostream* metrics_out = nullptr);

}  // namespace wta
