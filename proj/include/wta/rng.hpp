#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace wta {

/// Seedable, splittable random stream. Each stream is a mt19937_64 whose seed
/// is derived from (seed, stream id) through SplitMix64, so streams for
/// different circuits or Monte Carlo samples never share state.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream);

  /// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
  double uniform();
  double normal(double mean, double stddev);
  std::uint64_t next() { return engine_(); }

  /// Child stream derived from this stream's identity (not its position).
  RngStream split(std::uint64_t child) const;

  std::string state() const;
  void set_state(const std::string& text);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  friend bool operator==(const RngStream& a, const RngStream& b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace wta
