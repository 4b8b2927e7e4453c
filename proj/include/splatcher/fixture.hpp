#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "splatcher/error.hpp"
#include "splatcher/ingest.hpp"

namespace splatcher {

enum class Distribution { gaussian, uniform };

[[nodiscard]] inline Distribution parse_distribution(std::string_view s) {
  if (s == "gaussian") return Distribution::gaussian;
  if (s == "uniform") return Distribution::uniform;
  throw ConfigError("distribution must be gaussian or uniform");
}

inline constexpr std::uint32_t kFixturePtypes = 2;

/// Synthetic two-population dataset around the origin: "gas" (ptype 0) in a
/// few gaussian clumps or a uniform cube, "stars" (ptype 1) tighter with
/// smaller radii. World radii span [0.004, 0.06]; q is log-normal.
[[nodiscard]] inline std::vector<ParticleRecord> make_fixture(std::size_t count, std::uint64_t seed,
                                                              Distribution dist = Distribution::gaussian) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  constexpr int kClumps = 5;
  double clumps[kClumps][3];
  for (auto& c : clumps) {
    for (double& v : c) v = (unit(rng) * 2.0 - 1.0) * 0.6;
  }

  std::vector<ParticleRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ParticleRecord p;
    p.ptype = unit(rng) < 0.2 ? 1u : 0u;
    double pos[3];
    if (dist == Distribution::uniform) {
      for (double& v : pos) v = unit(rng) * 2.0 - 1.0;
    } else {
      const auto& c = clumps[static_cast<int>(unit(rng) * kClumps) % kClumps];
      const double spread = p.ptype == 1 ? 0.08 : 0.25;
      for (int k = 0; k < 3; ++k) pos[k] = c[k] + normal(rng) * spread;
    }
    p.x = static_cast<float>(pos[0]);
    p.y = static_cast<float>(pos[1]);
    p.z = static_cast<float>(pos[2]);
    const double radius_scale = p.ptype == 1 ? 0.5 : 1.0;
    p.r = static_cast<float>(0.004 * std::pow(15.0, unit(rng)) * radius_scale);
    p.q = static_cast<float>(std::exp(normal(rng)));
    out.push_back(p);
  }
  return out;
}

}  // namespace splatcher
