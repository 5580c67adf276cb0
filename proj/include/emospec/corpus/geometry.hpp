#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "emospec/error.hpp"

namespace emospec::corpus {

struct Geometry {
  std::string name{"custom"};
  std::size_t channels{0};
  std::size_t samples{0};  // per channel
  double fs{0.0};

  void validate() const {
    if (channels == 0 || samples == 0) throw InvalidArgument("geometry '" + name + "': channels and samples must be positive");
    if (!(fs > 0.0)) throw InvalidArgument("geometry '" + name + "': fs must be positive");
  }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

// Per-epoch layouts of the three public corpora.
namespace geometries {
inline Geometry deap() { return {"deap", 32, 8064, 128.0}; }
inline Geometry seed() { return {"seed", 62, 16000, 200.0}; }
inline Geometry dens() { return {"dens", 128, 1751, 250.0}; }
}  // namespace geometries

inline Geometry geometry_from_name(std::string_view name) {
  if (name == "deap") return geometries::deap();
  if (name == "seed") return geometries::seed();
  if (name == "dens") return geometries::dens();
  throw InvalidArgument("unknown geometry '" + std::string(name) + "' (expected deap | seed | dens)");
}

}  // namespace emospec::corpus
