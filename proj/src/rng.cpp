#include "wta/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace wta {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed),
      stream_(stream),
      engine_(splitmix64(splitmix64(seed) ^ splitmix64(~stream))) {}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(stream_)), child);
}

std::string RngStream::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void RngStream::set_state(const std::string& text) {
  std::istringstream in(text);
  in >> engine_;
  if (in.fail()) throw std::invalid_argument("RngStream: malformed state");
}

}  // namespace wta
