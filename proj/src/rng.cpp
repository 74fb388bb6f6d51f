#include "sero/rng.hpp"

#include <sstream>

#include "sero/errors.hpp"

namespace sero {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// A fresh distribution per draw: std::normal_distribution caches a second
// variate, which would otherwise be invisible to serialize_rng.
double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw ConfigError("malformed RNG state");
  return rng;
}

}  // namespace sero
