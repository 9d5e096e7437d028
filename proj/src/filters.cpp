#include "wta/filters.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

namespace wta {

FilterKind parse_filter_kind(const std::string& name) {
  if (name == "exp_diff") return FilterKind::ExpDiff;
  if (name == "exp" || name == "somatic_exp") return FilterKind::SomaticExp;
  if (name == "raised_cosine") return FilterKind::RaisedCosine;
  if (name == "custom") return FilterKind::Custom;
  throw std::invalid_argument("unknown filter kind '" + name + "'");
}

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::ExpDiff: return "exp_diff";
    case FilterKind::SomaticExp: return "exp";
    case FilterKind::RaisedCosine: return "raised_cosine";
    case FilterKind::Custom: return "custom";
  }
  return "custom";
}

namespace {

void check_duration(int duration) {
  if (duration < 1) throw std::invalid_argument("filter duration must be >= 1");
}

}  // namespace

Taps make_exp_diff_filter(double tau1, double tau2, int duration) {
  check_duration(duration);
  if (!(tau1 > 0.0) || !(tau2 > 0.0)) {
    throw std::invalid_argument("exp_diff filter: time constants must be positive");
  }
  if (tau1 < tau2) {
    throw std::invalid_argument("exp_diff filter: requires tau1 >= tau2");
  }
  if (tau1 == tau2) {
    std::cerr << "warning: exp_diff filter with tau1 == tau2 is identically zero\n";
  }
  Taps taps(static_cast<std::size_t>(duration));
  for (int delta = 1; delta <= duration; ++delta) {
    taps[delta - 1] = std::exp(-delta / tau1) - std::exp(-delta / tau2);
  }
  return taps;
}

Taps make_somatic_filter(double tau3, int duration) {
  check_duration(duration);
  if (!(tau3 > 0.0)) {
    throw std::invalid_argument("somatic filter: tau3 must be positive");
  }
  Taps taps(static_cast<std::size_t>(duration));
  for (int delta = 1; delta <= duration; ++delta) {
    taps[delta - 1] = -std::exp(-delta / tau3);
  }
  return taps;
}

std::vector<Taps> make_raised_cosine_bank(int num_filters, int duration) {
  check_duration(duration);
  if (num_filters < 1) throw std::invalid_argument("raised cosine bank: K must be >= 1");
  if (num_filters > duration) {
    throw std::invalid_argument("raised cosine bank: K must not exceed the duration");
  }
  const double width = static_cast<double>(duration) / (num_filters + 1);
  std::vector<Taps> bank;
  bank.reserve(static_cast<std::size_t>(num_filters));
  for (int k = 1; k <= num_filters; ++k) {
    const double peak = std::round(static_cast<double>(k) * duration / (num_filters + 1));
    Taps taps(static_cast<std::size_t>(duration), 0.0);
    for (int delta = 1; delta <= duration; ++delta) {
      const double offset = delta - peak;
      if (std::abs(offset) < width) {
        taps[delta - 1] = 0.5 * (1.0 + std::cos(std::numbers::pi * offset / width));
      }
    }
    bank.push_back(std::move(taps));
  }
  return bank;
}

void FilterBank::validate() const {
  if (synaptic.empty()) throw std::invalid_argument("filter bank needs K >= 1 synaptic filters");
  const std::size_t tau = somatic.size();
  if (tau < 1) throw std::invalid_argument("somatic filter is empty");
  auto finite = [](const Taps& t) {
    return std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); });
  };
  for (const Taps& t : synaptic) {
    if (t.size() != tau) {
      throw std::invalid_argument("all filters must share one duration");
    }
    if (!finite(t)) throw std::invalid_argument("non-finite synaptic tap");
  }
  if (!finite(somatic)) throw std::invalid_argument("non-finite somatic tap");
}

TraceBuffer::TraceBuffer(int num_units, int duration)
    : num_units_(num_units), ring_(static_cast<std::size_t>(duration)) {
  if (num_units < 1) throw std::invalid_argument("TraceBuffer: C must be >= 1");
  check_duration(duration);
}

void TraceBuffer::push(SpikeSymbol s) {
  if (!s.valid_for(num_units_)) {
    throw std::invalid_argument("TraceBuffer: spike symbol " + std::to_string(s.index()) +
                                " out of range for C=" + std::to_string(num_units_));
  }
  ring_[head_] = s;
  head_ = (head_ + 1) % ring_.size();
  ++pushed_;
}

void TraceBuffer::reset() {
  std::fill(ring_.begin(), ring_.end(), SpikeSymbol::silence());
  head_ = 0;
  pushed_ = 0;
}

SpikeSymbol TraceBuffer::at_lag(int delta) const {
  const auto tau = static_cast<int>(ring_.size());
  if (delta < 1 || delta > tau || delta > pushed_) return SpikeSymbol::silence();
  const std::size_t slot = (head_ + ring_.size() - static_cast<std::size_t>(delta)) % ring_.size();
  return ring_[slot];
}

void TraceBuffer::trace(std::span<const double> taps, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const long long reach = std::min<long long>(
      pushed_, static_cast<long long>(std::min(taps.size(), ring_.size())));
  std::size_t slot = head_;
  for (long long delta = 1; delta <= reach; ++delta) {
    slot = (slot == 0 ? ring_.size() : slot) - 1;
    const SpikeSymbol s = ring_[slot];
    if (!s.is_silent()) out[static_cast<std::size_t>(s.index() - 1)] += taps[delta - 1];
  }
}

std::vector<double> TraceBuffer::trace(std::span<const double> taps) const {
  std::vector<double> out(static_cast<std::size_t>(num_units_));
  trace(taps, out);
  return out;
}

}  // namespace wta
