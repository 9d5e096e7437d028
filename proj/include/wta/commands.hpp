#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace wta {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::optional<std::string> manifest;  // replaces data.train_manifest
};

struct EvalArgs {
  std::string checkpoint;
  std::optional<std::string> manifest;  // defaults to the config's test manifest
  std::optional<std::uint64_t> seed;
};

struct GradcheckArgs {
  std::uint64_t seed = 1;
  int networks = 20;
  std::uint64_t samples = 20000;
  int steps = 4;
  bool mutate_sign = false;  // negate the analytic gradient; the check must fail
};

struct SynthArgs {
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int pixels = 16;
  int steps = 50;
  int classes = 2;
  int train_per_class = 500;
  int test_per_class = 100;
  double event_rate = 0.15;
  double jitter = 0.2;
};

struct InspectArgs {
  std::string checkpoint;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);
int cmd_inspect(const InspectArgs& args, std::ostream& out, std::ostream& err);

}  // namespace wta
