#pragma once

#include <random>

namespace impz {

/// Seeded generator used everywhere randomness is needed.
using Rng = std::mt19937_64;

}  // namespace impz
