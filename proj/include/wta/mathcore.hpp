#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace wta {

class RngStream;

/// Output of one WTA circuit at one time step: silence, or the index of the
/// single unit that fired. Units are numbered 1..C; 0 encodes silence.
class SpikeSymbol {
 public:
  constexpr SpikeSymbol() = default;

  static constexpr SpikeSymbol silence() { return SpikeSymbol(); }
  static constexpr SpikeSymbol unit(int c) { return SpikeSymbol(c); }

  constexpr bool is_silent() const { return value_ == 0; }
  /// 1-based unit index, 0 when silent.
  constexpr int index() const { return value_; }
  constexpr bool valid_for(int num_units) const {
    return value_ >= 0 && value_ <= num_units;
  }

  /// Dense C-vector: all-zero for silence, the basis vector e_c otherwise.
  std::vector<double> to_vector(int num_units) const;

  friend constexpr bool operator==(SpikeSymbol, SpikeSymbol) = default;

 private:
  explicit constexpr SpikeSymbol(int c) : value_(c) {}
  int value_ = 0;
};

/// Spiking distribution of one circuit: per-unit probabilities plus the
/// implicit silence mass. `silence` is stored explicitly so that it does not
/// suffer cancellation when the units are nearly saturated.
struct ProbVector {
  std::vector<double> units;
  double silence = 1.0;

  std::size_t size() const { return units.size(); }
};

/// Counts log-argument clamps performed by the guarded log helpers.
struct LogGuard {
  std::size_t clamped = 0;
};

inline constexpr double kLogFloor = 1e-300;

/// log(x) with arguments below kLogFloor clamped (and counted in `guard`).
double guarded_log(double x, LogGuard* guard = nullptr);

/// Negative cross-entropy of two sub-distributions:
///   sum_x a_x log b_x + (1 - sum a) log(1 - sum b).
/// Terms with zero weight in `a` are skipped, so 0 * log 0 contributes 0.
double neg_cross_entropy(std::span<const double> a, std::span<const double> b,
                         LogGuard* guard = nullptr);

double kl_divergence(std::span<const double> a, std::span<const double> b,
                     LogGuard* guard = nullptr);

/// Softmax with an implicit zero logit for silence:
///   sigma_c(u) = exp(u_c) / (1 + sum exp(u_c')).
/// Logits are shifted by max(0, max_c u_c) before exponentiation.
ProbVector wta_softmax(std::span<const double> u);

/// Allocation-free variant; `units` must have u.size() entries. Returns the
/// silence probability.
double wta_softmax_into(std::span<const double> u, std::span<double> units);

/// log p(s | u) computed in the log domain, equal to
/// neg_cross_entropy(s, wta_softmax(u)) but finite for every finite u.
double log_prob(SpikeSymbol s, std::span<const double> u);

/// Draws one symbol: unit c with probability p_c, silence otherwise.
/// Consumes exactly one uniform draw from `rng`.
SpikeSymbol sample_spike(std::span<const double> units, RngStream& rng);
SpikeSymbol sample_spike(const ProbVector& p, RngStream& rng);

/// Discounted running sum <f_t> = decay * <f_{t-1}> + f_t with <f_0> = 0.
class TemporalAverage {
 public:
  explicit TemporalAverage(double decay, std::size_t size = 1);

  void step(std::span<const double> f);
  void step(double f);
  void reset();

  double decay() const { return decay_; }
  std::span<const double> value() const { return acc_; }
  std::span<double> mutable_value() { return acc_; }
  double scalar() const { return acc_.front(); }
  std::size_t size() const { return acc_.size(); }

 private:
  double decay_;
  std::vector<double> acc_;
};

}  // namespace wta
