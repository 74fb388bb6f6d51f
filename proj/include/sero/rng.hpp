#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sero {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); streams keep subsystems from
/// perturbing each other's random sequences.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace sero
