#include "wta/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "wta/checkpoint.hpp"
#include "wta/experiment.hpp"
#include "wta/oracle.hpp"

namespace wta {

namespace fs = std::filesystem;

namespace {

// Maps the library's exception types onto exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

std::string trial_name(const std::string& stem, const std::string& ext, int trial, int trials) {
  return trials == 1 ? stem + ext : stem + "_trial" + std::to_string(trial + 1) + ext;
}

void print_report(std::ostream& out, const EvalReport& r) {
  out << std::fixed << std::setprecision(4);
  out << "accuracy " << r.accuracy << '\n';
  for (std::size_t c = 0; c < r.class_total.size(); ++c) {
    const double acc = r.class_total[c] > 0
                           ? static_cast<double>(r.class_correct[c]) / static_cast<double>(r.class_total[c])
                           : 0.0;
    out << "class " << c << ": " << r.class_correct[c] << "/" << r.class_total[c] << " (" << acc << ")\n";
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig config = load_config(args.config);
    if (args.seed) config.seed = *args.seed;
    if (args.manifest) config.data.train_manifest = *args.manifest;
    if (config.data.train_manifest.empty()) throw ConfigError("data.train_manifest is not set");
    out << "# effective configuration\n";
    print_config(out, config);

    const LoadedSplit train = load_split(config.data, config.data.train_manifest, config.data.max_train);
    LoadedSplit test;
    if (!config.data.test_manifest.empty()) {
      test = load_split(config.data, config.data.test_manifest, config.data.max_test);
      if (test.manifest.num_classes != train.manifest.num_classes) {
        throw DataError("train and test manifests disagree on the class count");
      }
    }
    const int num_classes = train.manifest.num_classes;
    out << "train examples " << train.examples.size() << ", test examples " << test.examples.size()
        << ", steps " << train.manifest.steps() << ", input circuits "
        << train.examples.front().circuits() << '\n';

    fs::create_directories(args.out_dir);
    {
      std::ofstream cfg(fs::path(args.out_dir) / "config.json");
      cfg << dump_config(config) << '\n';
    }

    std::vector<double> accs;
    for (int trial = 0; trial < config.trials; ++trial) {
      const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(trial);
      const fs::path metrics_path = fs::path(args.out_dir) / trial_name("metrics", ".csv", trial, config.trials);
      std::ofstream metrics(metrics_path);
      if (!metrics) throw DataError("cannot write " + metrics_path.string());
      TrialResult result = run_trial(config, seed, train.examples, test.examples, num_classes, &metrics);

      Checkpoint ck;
      ck.config = config;
      ck.config_hash = config_hash(config);
      ck.epoch = result.epochs_done;
      ck.seed = seed;
      ck.num_classes = num_classes;
      ck.topology = result.net.topology();
      ck.filters = result.net.filters();
      ck.params = result.params;
      for (const auto& r : result.rng) ck.rng_states.push_back(r.state());
      const fs::path ck_path = fs::path(args.out_dir) / trial_name("checkpoint", ".json", trial, config.trials);
      save_checkpoint(ck_path, ck);

      out << "trial " << trial + 1 << " seed " << seed << ": " << result.epochs_done << " epochs";
      if (result.final_eval) {
        out << ", test accuracy " << std::fixed << std::setprecision(4) << result.final_eval->accuracy;
        out.unsetf(std::ios::floatfield);
        accs.push_back(result.final_eval->accuracy);
      }
      out << "\nwrote " << ck_path.string() << " and " << metrics_path.string() << '\n';
    }
    if (accs.size() > 1) {
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (double a : accs) var += (a - mean) * (a - mean);
      const double sd = std::sqrt(var / static_cast<double>(accs.size() - 1));
      out << "test accuracy over " << accs.size() << " trials: " << std::fixed << std::setprecision(4)
          << mean << " +- " << sd << '\n';
      out.unsetf(std::ios::floatfield);
    }
    return kExitOk;
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const std::string manifest = args.manifest.value_or(ck.config.data.test_manifest);
    if (manifest.empty()) throw ConfigError("no manifest given and the checkpoint config has no test manifest");
    const LoadedSplit data = load_split(ck.config.data, manifest, 0);
    if (data.manifest.num_classes != ck.num_classes) {
      throw DataError("manifest has " + std::to_string(data.manifest.num_classes) +
                      " classes, checkpoint expects " + std::to_string(ck.num_classes));
    }
    const Network net = checkpoint_network(ck);
    const auto inputs = net.topology().with_role(CircuitRole::Input);
    const auto& sizes = data.examples.front().sizes;
    bool shape_ok = sizes.size() == inputs.size();
    for (std::size_t n = 0; shape_ok && n < inputs.size(); ++n) {
      shape_ok = sizes[n] == net.topology().circuit(inputs[n]).size;
    }
    if (!shape_ok) throw DataError("data input shape does not match the checkpoint's input circuits");

    const std::uint64_t seed = args.seed.value_or(ck.seed);
    const EvalReport report = evaluate(net, ck.params, data.examples, ck.num_classes,
                                       splitmix64(seed ^ 0xE7A1ULL), ck.config.policy());
    out << "examples " << data.examples.size() << '\n';
    print_report(out, report);
    return kExitOk;
  });
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    bool ok = true;
    out << std::scientific << std::setprecision(3);

    const GradCheckStats fd = check_log_prob_gradients(args.networks, args.seed, 1e-4, 1e-5, args.mutate_sign);
    out << "[" << (fd.passed ? "PASS" : "FAIL") << "] log-prob gradient vs finite differences: "
        << fd.components << " components, max relative error " << fd.max_error << " (tol 1e-05)\n"
        << "       worst: " << fd.worst << '\n';
    ok = ok && fd.passed;

    const TinyNetSpec spec = estimator_spec(args.steps, args.seed);
    const double alpha = 0.5;
    const double r = 0.3;
    const double gamma = 0.8;
    const ElboResult exact = exact_elbo(spec, alpha, r, gamma);
    double worst_abs = 0.0;
    std::string worst;
    for (std::size_t i = 0; i < spec.params.circuits.size(); ++i) {
      if (spec.params.circuits[i].empty()) continue;
      const ScalarFn value = [&](const std::vector<double>& p) {
        TinyNetSpec s = spec;
        s.params.circuits[i] = p;
        return exact_elbo(s, alpha, r, gamma).value;
      };
      const auto fd_grad = fd_gradient(value, spec.params.circuits[i], 1e-4);
      for (std::size_t k = 0; k < fd_grad.size(); ++k) {
        const double d = std::abs(fd_grad[k] - exact.gradient.circuits[i][k]);
        if (d > worst_abs) {
          worst_abs = d;
          worst = "circuit " + std::to_string(i) + " param " + std::to_string(k);
        }
      }
    }
    const bool enum_ok = worst_abs < 1e-7 && std::abs(exact.total_probability - 1.0) < 1e-10;
    out << "[" << (enum_ok ? "PASS" : "FAIL") << "] enumerated objective gradient vs finite differences: "
        << exact.sequences << " sequences, probability mass " << std::setprecision(12) << std::fixed
        << exact.total_probability << std::scientific << std::setprecision(3) << ", max abs error "
        << worst_abs << " (tol 1e-07)\n       worst: " << worst << '\n';
    ok = ok && enum_ok;

    const ElboResult exact0 = exact_elbo(spec, 0.0, r, 1.0);
    const McResult mc = mc_gradient_mean(spec, args.samples, args.seed, 0.0, r, 1.0);
    double worst_z = 0.0;
    std::string worst_mc;
    for (int i : spec.topology.with_role(CircuitRole::Hidden)) {
      const auto idx = static_cast<std::size_t>(i);
      for (std::size_t k = 0; k < mc.mean.circuits[idx].size(); ++k) {
        const double d = std::abs(mc.mean.circuits[idx][k] - exact0.gradient.circuits[idx][k]);
        const double se = mc.stderr_.circuits[idx][k];
        const double z = se > 0.0 ? d / se : (d > 1e-12 ? INFINITY : 0.0);
        if (z >= worst_z) {
          worst_z = z;
          std::ostringstream os;
          os << "circuit " << i << " param " << k << " mc " << mc.mean.circuits[idx][k] << " +- " << se
             << " exact " << exact0.gradient.circuits[idx][k];
          worst_mc = os.str();
        }
      }
    }
    const bool mc_ok = worst_z <= 3.0;
    out << "[" << (mc_ok ? "PASS" : "FAIL") << "] hidden estimator mean vs enumeration: " << args.samples
        << " samples, max deviation " << std::fixed << std::setprecision(2) << worst_z
        << " standard errors (tol 3)\n       worst: " << worst_mc << '\n';
    ok = ok && mc_ok;

    out.unsetf(std::ios::floatfield);
    out << (ok ? "gradcheck passed" : "gradcheck FAILED") << '\n';
    return ok ? kExitOk : kExitFailure;
  });
}

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SynthOptions o;
    o.seed = args.seed;
    o.pixels = args.pixels;
    o.steps = args.steps;
    o.num_classes = args.classes;
    o.train_per_class = args.train_per_class;
    o.test_per_class = args.test_per_class;
    o.event_rate = args.event_rate;
    o.jitter_prob = args.jitter;
    if (o.train_per_class < 1 || o.test_per_class < 1) throw ConfigError("per-class counts must be >= 1");
    SynthDataset data;
    try {
      data = synth_polarity_task(o);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    const auto [train_path, test_path] = write_synth_dataset(data, args.out_dir);

    // Re-read what was written and check the construction guarantees.
    bool ok = true;
    for (const fs::path& path : {train_path, test_path}) {
      const DatasetManifest m = load_manifest(path);
      const auto wta_seq = load_dataset(m, Encoding::Wta);
      const auto uns_seq = load_dataset(m, Encoding::Unsigned);
      std::map<int, int> counts;
      for (const auto& s : wta_seq) ++counts[s.label];
      for (const auto& [label, n] : counts) {
        if (n != counts.begin()->second) ok = false;
      }
      const auto group = static_cast<std::size_t>(o.num_classes);
      for (std::size_t g = 0; g + group <= wta_seq.size(); g += group) {
        for (std::size_t a = g; a < g + group; ++a) {
          for (std::size_t b = a + 1; b < g + group; ++b) {
            if (!(uns_seq[a].symbols == uns_seq[b].symbols)) ok = false;
            if (wta_seq[a].symbols == wta_seq[b].symbols) ok = false;
          }
        }
      }
      out << "wrote " << path.string() << " (" << m.examples.size() << " examples, " << counts.size()
          << " classes)\n";
    }
    out << (ok ? "self-check passed: balanced classes, identical unsigned encodings within groups\n"
               : "self-check FAILED\n");
    return ok ? kExitOk : kExitFailure;
  });
}

int cmd_inspect(const InspectArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const Network net = checkpoint_network(ck);
    const std::string hash = config_hash(ck.config);
    out << "checkpoint " << args.checkpoint << '\n';
    out << "config hash " << ck.config_hash << (hash == ck.config_hash ? " (matches config)" : " (MISMATCH)") << '\n';
    out << "epoch " << ck.epoch << ", seed " << ck.seed << ", classes " << ck.num_classes << '\n';
    out << "filters: K = " << net.num_filters() << ", duration " << net.filters().duration() << '\n';
    for (CircuitRole role : {CircuitRole::Input, CircuitRole::Hidden, CircuitRole::Output}) {
      const auto ids = net.topology().with_role(role);
      std::size_t params = 0;
      double sq = 0.0;
      std::map<int, int> sizes;
      for (int i : ids) {
        ++sizes[net.topology().circuit(i).size];
        for (double v : ck.params.circuits[static_cast<std::size_t>(i)]) sq += v * v;
        params += ck.params.circuits[static_cast<std::size_t>(i)].size();
      }
      out << to_string(role) << ": " << ids.size() << " circuits";
      for (const auto& [c, n] : sizes) out << ", " << n << " with C=" << c;
      out << ", " << params << " parameters, norm " << std::sqrt(sq) << '\n';
    }
    out << "edges " << net.topology().edges().size() << ", total parameters " << net.num_parameters() << '\n';
    return kExitOk;
  });
}

}  // namespace wta
