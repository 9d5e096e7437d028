#include "wta/mathcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wta/rng.hpp"

namespace wta {

std::vector<double> SpikeSymbol::to_vector(int num_units) const {
  if (!valid_for(num_units)) {
    throw std::invalid_argument("spike symbol " + std::to_string(value_) +
                                " out of range for C=" +
                                std::to_string(num_units));
  }
  std::vector<double> v(static_cast<std::size_t>(num_units), 0.0);
  if (value_ > 0) v[static_cast<std::size_t>(value_ - 1)] = 1.0;
  return v;
}

double guarded_log(double x, LogGuard* guard) {
  if (!(x >= kLogFloor)) {
    if (guard) ++guard->clamped;
    return std::log(kLogFloor);
  }
  return std::log(x);
}

double neg_cross_entropy(std::span<const double> a, std::span<const double> b,
                         LogGuard* guard) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("neg_cross_entropy: dimension mismatch");
  }
  double total = 0.0;
  double sum_a = 0.0;
  double sum_b = 0.0;
  for (std::size_t x = 0; x < a.size(); ++x) {
    sum_a += a[x];
    sum_b += b[x];
    if (a[x] != 0.0) total += a[x] * guarded_log(b[x], guard);
  }
  const double silence_a = 1.0 - sum_a;
  if (silence_a != 0.0) total += silence_a * guarded_log(1.0 - sum_b, guard);
  return total;
}

double kl_divergence(std::span<const double> a, std::span<const double> b,
                     LogGuard* guard) {
  return neg_cross_entropy(a, a, guard) - neg_cross_entropy(a, b, guard);
}

namespace {

double softmax_shift(std::span<const double> u) {
  double shift = 0.0;  // the silence logit
  for (double v : u) {
    if (std::isnan(v)) throw std::invalid_argument("wta_softmax: NaN potential");
    shift = std::max(shift, v);
  }
  return shift;
}

}  // namespace

double wta_softmax_into(std::span<const double> u, std::span<double> units) {
  const double shift = softmax_shift(u);
  const double silence_term = std::exp(-shift);
  double denom = silence_term;
  for (std::size_t c = 0; c < u.size(); ++c) {
    units[c] = std::exp(u[c] - shift);
    denom += units[c];
  }
  for (std::size_t c = 0; c < u.size(); ++c) units[c] /= denom;
  return silence_term / denom;
}

ProbVector wta_softmax(std::span<const double> u) {
  ProbVector p;
  p.units.resize(u.size());
  p.silence = wta_softmax_into(u, p.units);
  return p;
}

double log_prob(SpikeSymbol s, std::span<const double> u) {
  const double shift = softmax_shift(u);
  double denom = std::exp(-shift);
  for (double v : u) denom += std::exp(v - shift);
  const double log_norm = shift + std::log(denom);
  if (s.is_silent()) return -log_norm;
  if (!s.valid_for(static_cast<int>(u.size()))) {
    throw std::invalid_argument("log_prob: symbol out of range");
  }
  return u[static_cast<std::size_t>(s.index() - 1)] - log_norm;
}

SpikeSymbol sample_spike(std::span<const double> units, RngStream& rng) {
  const double draw = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t c = 0; c < units.size(); ++c) {
    cumulative += units[c];
    if (draw < cumulative) return SpikeSymbol::unit(static_cast<int>(c) + 1);
  }
  return SpikeSymbol::silence();
}

SpikeSymbol sample_spike(const ProbVector& p, RngStream& rng) {
  return sample_spike(std::span<const double>(p.units), rng);
}

TemporalAverage::TemporalAverage(double decay, std::size_t size)
    : decay_(decay), acc_(size, 0.0) {
  if (!(decay > 0.0 && decay <= 1.0)) {
    throw std::invalid_argument("TemporalAverage: decay must lie in (0, 1]");
  }
}

void TemporalAverage::step(std::span<const double> f) {
  if (f.size() != acc_.size()) {
    throw std::invalid_argument("TemporalAverage: size mismatch");
  }
  for (std::size_t n = 0; n < acc_.size(); ++n) acc_[n] = decay_ * acc_[n] + f[n];
}

void TemporalAverage::step(double f) { step(std::span<const double>(&f, 1)); }

void TemporalAverage::reset() { std::fill(acc_.begin(), acc_.end(), 0.0); }

}  // namespace wta
