#pragma once

#include <span>
#include <string>
#include <vector>

#include "wta/mathcore.hpp"

namespace wta {

/// Filter taps for lags delta = 1..tau, stored at index delta - 1. Lag 0 is
/// never used: a spike does not contribute to the trace of its own step.
using Taps = std::vector<double>;

enum class FilterKind { ExpDiff, SomaticExp, RaisedCosine, Custom };

FilterKind parse_filter_kind(const std::string& name);
std::string to_string(FilterKind kind);

/// exp(-delta/tau1) - exp(-delta/tau2). Equal time constants yield all-zero
/// taps (a warning is printed to stderr).
Taps make_exp_diff_filter(double tau1, double tau2, int duration);

/// -exp(-delta/tau3): negative self-feedback modelling refractoriness.
Taps make_somatic_filter(double tau3, int duration);

/// K raised-cosine bumps with peaks at round(k * tau / (K + 1)), k = 1..K,
/// half-width tau / (K + 1):
///   0.5 * (1 + cos(pi * (delta - peak) / width))  for |delta - peak| < width.
std::vector<Taps> make_raised_cosine_bank(int num_filters, int duration);

/// K synaptic kernels and one somatic kernel sharing one duration.
struct FilterBank {
  std::vector<Taps> synaptic;
  Taps somatic;

  int num_synaptic() const { return static_cast<int>(synaptic.size()); }
  int duration() const { return static_cast<int>(somatic.size()); }
  /// Throws if K < 1, any duration differs, or taps are non-finite.
  void validate() const;
};

/// Ring buffer holding the last `duration` spikes of one circuit.
///
/// After n pushes the buffer's current time is n + 1: the most recently
/// pushed spike sits at lag 1, so trace() = sum_{delta=1..tau} taps[delta]
/// * s_{t - delta} with t the current time. Spikes older than tau pushes are
/// overwritten and unreachable.
class TraceBuffer {
 public:
  TraceBuffer() = default;
  TraceBuffer(int num_units, int duration);

  void push(SpikeSymbol s);
  void reset();

  /// Accumulates taps-weighted history into `out` (size C); `out` is
  /// overwritten.
  void trace(std::span<const double> taps, std::span<double> out) const;
  std::vector<double> trace(std::span<const double> taps) const;

  /// Spike at lag delta (1 = most recent); silence beyond what was pushed.
  SpikeSymbol at_lag(int delta) const;

  int num_units() const { return num_units_; }
  int duration() const { return static_cast<int>(ring_.size()); }
  long long pushed() const { return pushed_; }
  /// Current time index (number of pushes + 1).
  long long time() const { return pushed_ + 1; }

 private:
  int num_units_ = 1;
  std::vector<SpikeSymbol> ring_;
  std::size_t head_ = 0;  // slot the next push writes to
  long long pushed_ = 0;
};

}  // namespace wta
