#include "wta/experiment.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace wta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string to_string(Wiring w) { return w == Wiring::Recurrent ? "recurrent" : "feedforward"; }

Wiring parse_wiring(const std::string& s) {
  if (s == "recurrent") return Wiring::Recurrent;
  if (s == "feedforward") return Wiring::Feedforward;
  throw ConfigError("unknown wiring '" + s + "' (expected recurrent or feedforward)");
}

void reject_unknown(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["trials"] = c.trials;
  j["log_every"] = c.log_every;
  j["eval_each_epoch"] = c.eval_each_epoch;
  j["parallel"] = c.parallel;
  j["topology"] = {{"hidden", c.topology.hidden},
                   {"circuit_size", c.topology.circuit_size},
                   {"wiring", to_string(c.topology.wiring)},
                   {"input_to_output", c.topology.input_to_output}};
  j["filters"] = {{"kind", to_string(c.filters.kind)},
                  {"num_filters", c.filters.num_filters},
                  {"duration", c.filters.duration},
                  {"tau1", c.filters.tau1},
                  {"tau2", c.filters.tau2},
                  {"tau3", c.filters.tau3},
                  {"taps", c.filters.taps}};
  j["learner"] = {{"eta", c.eta_from_hidden ? json(nullptr) : json(c.learner.eta)},
                  {"gamma", c.learner.gamma},
                  {"kappa", c.learner.kappa},
                  {"kappa_b", c.learner.kappa_b},
                  {"alpha", c.learner.alpha},
                  {"r", c.learner.r},
                  {"halve_lr_per_epoch", c.learner.halve_lr_per_epoch},
                  {"use_baseline", c.learner.use_baseline},
                  {"grad_clip", c.learner.grad_clip}};
  j["init"] = {{"weight_std", c.init.weight_std},
               {"bias", c.init.bias},
               {"hidden_bias", c.init.hidden_bias ? json(*c.init.hidden_bias) : json(nullptr)}};
  j["data"] = {{"train_manifest", c.data.train_manifest},
               {"test_manifest", c.data.test_manifest},
               {"encoding", to_string(c.data.encoding)},
               {"period_us", c.data.period_us ? json(*c.data.period_us) : json(nullptr)},
               {"crop_ms", c.data.crop_ms ? json(*c.data.crop_ms) : json(nullptr)},
               {"max_train", c.data.max_train},
               {"max_test", c.data.max_test},
               {"shuffle", c.data.shuffle}};
  return j;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out.emplace_back(prefix, j);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (log_every < 0) throw ConfigError("log_every must be >= 0");
  if (topology.hidden < 0) throw ConfigError("topology.hidden must be >= 0");
  if (topology.circuit_size < 1 || topology.circuit_size > 255) {
    throw ConfigError("topology.circuit_size must lie in [1, 255]");
  }
  if (filters.duration < 1) throw ConfigError("filters.duration must be >= 1");
  if (filters.num_filters < 1) throw ConfigError("filters.num_filters must be >= 1");
  switch (filters.kind) {
    case FilterKind::RaisedCosine:
      if (filters.num_filters > filters.duration) {
        throw ConfigError("filters.num_filters may not exceed filters.duration");
      }
      break;
    case FilterKind::ExpDiff:
      if (filters.num_filters != 1) throw ConfigError("exp_diff filters use num_filters = 1");
      if (!(filters.tau1 > 0.0 && filters.tau2 > 0.0 && filters.tau1 >= filters.tau2)) {
        throw ConfigError("exp_diff needs tau1 >= tau2 > 0");
      }
      break;
    case FilterKind::Custom:
      if (static_cast<int>(filters.taps.size()) != filters.num_filters) {
        throw ConfigError("custom filters need num_filters tap arrays");
      }
      for (const auto& t : filters.taps) {
        if (static_cast<int>(t.size()) != filters.duration) {
          throw ConfigError("custom tap arrays must have duration entries");
        }
      }
      break;
    case FilterKind::SomaticExp:
      throw ConfigError("somatic_exp is not a synaptic filter kind");
  }
  if (!(filters.tau3 > 0.0)) throw ConfigError("filters.tau3 must be positive");
  try {
    learner.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("learner: ") + e.what());
  }
  if (!(init.weight_std >= 0.0)) throw ConfigError("init.weight_std must be >= 0");
  if (data.period_us && *data.period_us <= 0) throw ConfigError("data.period_us must be positive");
  if (data.crop_ms && !(*data.crop_ms > 0.0)) throw ConfigError("data.crop_ms must be positive");
  if (data.max_train < 0 || data.max_test < 0) throw ConfigError("data.max_* must be >= 0");
}

double ExperimentConfig::resolved_eta() const {
  return eta_from_hidden ? LearnerConfig::default_eta(std::max(1, topology.hidden)) : learner.eta;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  reject_unknown(j, "", {"seed", "epochs", "trials", "log_every", "eval_each_epoch", "parallel",
                         "topology", "filters", "learner", "init", "data"});
  read(j, "seed", c.seed, "");
  read(j, "epochs", c.epochs, "");
  read(j, "trials", c.trials, "");
  read(j, "log_every", c.log_every, "");
  read(j, "eval_each_epoch", c.eval_each_epoch, "");
  read(j, "parallel", c.parallel, "");

  if (j.contains("topology")) {
    const json& t = j["topology"];
    reject_unknown(t, "topology", {"hidden", "circuit_size", "wiring", "input_to_output"});
    read(t, "hidden", c.topology.hidden, "topology");
    read(t, "circuit_size", c.topology.circuit_size, "topology");
    std::string wiring = to_string(c.topology.wiring);
    read(t, "wiring", wiring, "topology");
    c.topology.wiring = parse_wiring(wiring);
    read(t, "input_to_output", c.topology.input_to_output, "topology");
  }
  if (j.contains("filters")) {
    const json& f = j["filters"];
    reject_unknown(f, "filters", {"kind", "num_filters", "duration", "tau1", "tau2", "tau3", "taps"});
    std::string kind = to_string(c.filters.kind);
    read(f, "kind", kind, "filters");
    try {
      c.filters.kind = parse_filter_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("filters.kind: ") + e.what());
    }
    read(f, "num_filters", c.filters.num_filters, "filters");
    read(f, "duration", c.filters.duration, "filters");
    read(f, "tau1", c.filters.tau1, "filters");
    read(f, "tau2", c.filters.tau2, "filters");
    read(f, "tau3", c.filters.tau3, "filters");
    read(f, "taps", c.filters.taps, "filters");
  }
  if (j.contains("learner")) {
    const json& l = j["learner"];
    reject_unknown(l, "learner", {"eta", "gamma", "kappa", "kappa_b", "alpha", "r",
                                  "halve_lr_per_epoch", "use_baseline", "grad_clip"});
    if (l.contains("eta") && !l["eta"].is_null()) {
      read(l, "eta", c.learner.eta, "learner");
      c.eta_from_hidden = false;
    }
    read(l, "gamma", c.learner.gamma, "learner");
    read(l, "kappa", c.learner.kappa, "learner");
    read(l, "kappa_b", c.learner.kappa_b, "learner");
    read(l, "alpha", c.learner.alpha, "learner");
    read(l, "r", c.learner.r, "learner");
    read(l, "halve_lr_per_epoch", c.learner.halve_lr_per_epoch, "learner");
    read(l, "use_baseline", c.learner.use_baseline, "learner");
    read(l, "grad_clip", c.learner.grad_clip, "learner");
  }
  if (j.contains("init")) {
    const json& in = j["init"];
    reject_unknown(in, "init", {"weight_std", "bias", "hidden_bias"});
    read(in, "weight_std", c.init.weight_std, "init");
    read(in, "bias", c.init.bias, "init");
    if (in.contains("hidden_bias") && !in["hidden_bias"].is_null()) {
      double hb = 0.0;
      read(in, "hidden_bias", hb, "init");
      c.init.hidden_bias = hb;
    }
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, "data", {"train_manifest", "test_manifest", "encoding", "period_us", "crop_ms",
                               "max_train", "max_test", "shuffle"});
    read(d, "train_manifest", c.data.train_manifest, "data");
    read(d, "test_manifest", c.data.test_manifest, "data");
    std::string enc = to_string(c.data.encoding);
    read(d, "encoding", enc, "data");
    try {
      c.data.encoding = parse_encoding(enc);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("data.encoding: ") + e.what());
    }
    if (d.contains("period_us") && !d["period_us"].is_null()) {
      std::int64_t p = 0;
      read(d, "period_us", p, "data");
      c.data.period_us = p;
    }
    if (d.contains("crop_ms") && !d["crop_ms"].is_null()) {
      double v = 0.0;
      read(d, "crop_ms", v, "data");
      c.data.crop_ms = v;
    }
    read(d, "max_train", c.data.max_train, "data");
    read(d, "max_test", c.data.max_test, "data");
    read(d, "shuffle", c.data.shuffle, "data");
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const ExperimentConfig& config, int indent) {
  return to_json(config).dump(indent);
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = dump_config(config, -1);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

void print_config(std::ostream& out, const ExperimentConfig& config) {
  std::vector<std::pair<std::string, json>> cur;
  std::vector<std::pair<std::string, json>> def;
  flatten(to_json(config), "", cur);
  flatten(to_json(ExperimentConfig{}), "", def);
  for (std::size_t n = 0; n < cur.size(); ++n) {
    out << cur[n].first << " = " << cur[n].second.dump();
    if (cur[n].first == "learner.eta" && config.eta_from_hidden) {
      out << " -> " << config.resolved_eta() << " (0.05 / H)";
    }
    if (n < def.size() && def[n].first == cur[n].first && def[n].second == cur[n].second) {
      out << "  (default)";
    }
    out << '\n';
  }
}

FilterBank build_filters(const FilterConfig& c) {
  FilterBank bank;
  switch (c.kind) {
    case FilterKind::RaisedCosine:
      bank.synaptic = make_raised_cosine_bank(c.num_filters, c.duration);
      break;
    case FilterKind::ExpDiff:
      bank.synaptic = {make_exp_diff_filter(c.tau1, c.tau2, c.duration)};
      break;
    case FilterKind::Custom:
      bank.synaptic = c.taps;
      break;
    case FilterKind::SomaticExp:
      throw ConfigError("somatic_exp is not a synaptic filter kind");
  }
  bank.somatic = make_somatic_filter(c.tau3, c.duration);
  bank.validate();
  return bank;
}

Topology build_topology(const TopologyConfig& c, const std::vector<int>& input_sizes,
                        int num_classes) {
  Topology top;
  std::vector<int> inputs;
  std::vector<int> hidden;
  for (int size : input_sizes) inputs.push_back(top.add_circuit(size, CircuitRole::Input));
  for (int h = 0; h < c.hidden; ++h) hidden.push_back(top.add_circuit(c.circuit_size, CircuitRole::Hidden));
  std::vector<int> outputs;
  for (int k = 0; k < num_classes; ++k) outputs.push_back(top.add_circuit(c.circuit_size, CircuitRole::Output));

  for (int h : hidden) {
    for (int x : inputs) top.connect(x, h);
    if (c.wiring == Wiring::Recurrent) {
      for (int g : hidden) {
        if (g != h) top.connect(g, h);
      }
    }
  }
  for (int o : outputs) {
    if (c.input_to_output) {
      for (int x : inputs) top.connect(x, o);
    }
    for (int h : hidden) top.connect(h, o);
  }
  return top;
}

fs::path resolve_data_path(const std::string& path) {
  fs::path p = path;
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("WTASNN_DATA_ROOT"); root && *root) return fs::path(root) / p;
  return p;
}

LoadedSplit load_split(const DataConfig& config, const std::string& manifest_path, int max_examples) {
  LoadedSplit split;
  split.manifest = load_manifest(resolve_data_path(manifest_path));
  if (config.period_us) split.manifest.period_us = *config.period_us;
  if (config.crop_ms) split.manifest.crop_ms = *config.crop_ms;
  split.manifest.validate();
  if (max_examples > 0 && static_cast<std::size_t>(max_examples) < split.manifest.examples.size()) {
    split.manifest.examples.resize(static_cast<std::size_t>(max_examples));
  }
  split.examples = load_dataset(split.manifest, config.encoding);
  return split;
}

EvalReport evaluate(const Network& net, const NetworkParams& params,
                    std::span<const EncodedSequence> examples, int num_classes,
                    std::uint64_t seed, ExecPolicy policy) {
  if (examples.empty()) throw DataError("evaluation set is empty");
  const std::vector<int> outputs = net.topology().with_role(CircuitRole::Output);
  if (static_cast<int>(outputs.size()) != num_classes) {
    throw DataError("network has " + std::to_string(outputs.size()) + " outputs but data has " +
                    std::to_string(num_classes) + " classes");
  }
  net.check_params(params);
  const auto n = static_cast<long>(examples.size());
  EvalReport report;
  report.predictions.assign(examples.size(), 0);
  std::vector<std::string> errors(examples.size());

#pragma omp parallel if (policy == ExecPolicy::Parallel)
  {
    NetworkState state = net.make_state(seed);
#pragma omp for schedule(dynamic)
    for (long k = 0; k < n; ++k) {
      try {
        const EncodedSequence& seq = examples[static_cast<std::size_t>(k)];
        state.reset();
        const RngStream base(seed, static_cast<std::uint64_t>(k));
        for (int i = 0; i < net.num_circuits(); ++i) {
          state.rng[static_cast<std::size_t>(i)] = base.split(static_cast<std::uint64_t>(i));
        }
        std::vector<long long> counts(outputs.size(), 0);
        for (int t = 0; t < seq.steps; ++t) {
          net.step(state, params, make_clamp(net, seq, t, StepMode::FreeRun), StepMode::FreeRun,
                   ExecPolicy::Serial);
          for (std::size_t o = 0; o < outputs.size(); ++o) {
            counts[o] += state.spikes[static_cast<std::size_t>(outputs[o])].is_silent() ? 0 : 1;
          }
        }
        report.predictions[static_cast<std::size_t>(k)] = predict_class(counts);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(k)] = e.what();
      }
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }

  report.class_total.assign(static_cast<std::size_t>(num_classes), 0);
  report.class_correct.assign(static_cast<std::size_t>(num_classes), 0);
  long long correct = 0;
  for (std::size_t k = 0; k < examples.size(); ++k) {
    const int label = examples[k].label;
    if (label < 0 || label >= num_classes) throw DataError("label outside class count");
    ++report.class_total[static_cast<std::size_t>(label)];
    if (report.predictions[k] == label) {
      ++report.class_correct[static_cast<std::size_t>(label)];
      ++correct;
    }
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  return report;
}

std::string format_metrics_row(const MetricsRow& row) {
  char buf[256];
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char b[32];
    std::snprintf(b, sizeof(b), "%.6f", *v);
    return std::string(b);
  };
  std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,", row.epoch, row.example, row.mean_reward,
                row.hidden_rate);
  return std::string(buf) + opt(row.train_acc) + "," + opt(row.test_acc);
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw DataError(path.string() + ": unexpected metrics header");
  }
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw DataError(path.string() + ": line " + std::to_string(line_no) + " has wrong field count");
    try {
      MetricsRow r;
      r.epoch = std::stoi(f[0]);
      r.example = std::stoi(f[1]);
      r.mean_reward = std::stod(f[2]);
      r.hidden_rate = std::stod(f[3]);
      if (!f[4].empty()) r.train_acc = std::stod(f[4]);
      if (!f[5].empty()) r.test_acc = std::stod(f[5]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + " is malformed");
    }
  }
  return rows;
}

TrialResult run_trial(const ExperimentConfig& config, std::uint64_t seed,
                      std::span<const EncodedSequence> train, std::span<const EncodedSequence> test,
                      int num_classes, std::ostream* metrics_out) {
  config.validate();
  if (train.empty()) throw DataError("training set is empty");
  const std::vector<int> input_sizes = train.front().sizes;
  for (const auto& s : train) {
    if (s.sizes != input_sizes) throw DataError("training examples disagree on input shape");
  }
  for (const auto& s : test) {
    if (s.sizes != input_sizes) throw DataError("test examples do not match the training input shape");
  }

  TrialResult result{Network(build_topology(config.topology, input_sizes, num_classes),
                             build_filters(config.filters)),
                     {}, {}, {}, 0, std::nullopt};
  const Network& net = result.net;
  result.params = net.init_params(config.init, seed);
  NetworkState state = net.make_state(seed);
  LearnerConfig lc = config.learner;
  lc.eta = config.resolved_eta();
  Learner learner(net, lc);

  auto maybe = [](double v) { return std::isnan(v) ? std::nullopt : std::optional<double>(v); };
  auto emit = [&](const MetricsRow& row) {
    result.rows.push_back(row);
    if (metrics_out) *metrics_out << format_metrics_row(row) << '\n' << std::flush;
  };
  if (metrics_out) *metrics_out << kMetricsHeader << '\n' << std::flush;

  const std::uint64_t eval_seed = splitmix64(seed ^ 0xE7A1ULL);
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.data.shuffle) {
      RngStream rng(seed, 0x5EED0000ULL + static_cast<std::uint64_t>(epoch));
      for (std::size_t k = order.size(); k > 1; --k) {
        const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(k));
        std::swap(order[k - 1], order[std::min(j, k - 1)]);
      }
    }
    EpochOptions opts;
    opts.epoch = epoch;
    opts.log_every = config.log_every;
    opts.policy = config.policy();
    opts.order = order;
    opts.probe_seed = splitmix64(seed ^ 0x9A0BEULL);
    opts.on_progress = [&](const ProgressRow& p) {
      emit(MetricsRow{p.epoch + 1, p.example, p.mean_reward, p.hidden_rate, maybe(p.train_acc),
                      std::nullopt});
    };
    const EpochMetrics m =
        train_epoch(net, result.params, state, learner, train, epoch_learning_rate(lc, epoch), opts);
    MetricsRow row;
    row.epoch = epoch + 1;
    row.example = static_cast<int>(train.size());
    row.mean_reward = std::accumulate(m.example_mean_reward.begin(), m.example_mean_reward.end(), 0.0) /
                      static_cast<double>(m.example_mean_reward.size());
    row.hidden_rate = m.hidden_rate;
    row.train_acc = maybe(m.train_acc);
    if (config.eval_each_epoch && !test.empty()) {
      result.final_eval = evaluate(net, result.params, test, num_classes, eval_seed, config.policy());
      row.test_acc = result.final_eval->accuracy;
    }
    emit(row);
    result.epochs_done = epoch + 1;
  }
  if (!config.eval_each_epoch && !test.empty() && config.epochs > 0) {
    result.final_eval = evaluate(net, result.params, test, num_classes, eval_seed, config.policy());
  }
  result.rng = state.rng;
  return result;
}

}  // namespace wta
