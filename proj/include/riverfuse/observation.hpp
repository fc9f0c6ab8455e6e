#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "riverfuse/date.hpp"
#include "riverfuse/network.hpp"

namespace riverfuse {

enum class OrbitClass { short_repeat, long_repeat, non_repeat };

inline std::string to_string(OrbitClass c) {
  switch (c) {
    case OrbitClass::short_repeat: return "short-repeat";
    case OrbitClass::long_repeat: return "long-repeat";
    case OrbitClass::non_repeat: return "non-repeat";
  }
  throw std::logic_error("unreachable orbit class");
}

inline OrbitClass parse_orbit_class(std::string_view s) {
  if (s == "short-repeat") return OrbitClass::short_repeat;
  if (s == "long-repeat") return OrbitClass::long_repeat;
  if (s == "non-repeat") return OrbitClass::non_repeat;
  throw std::invalid_argument("unknown orbit class '" + std::string(s) + "'");
}

/// One altimetric water-level measurement at a network location.
struct Observation {
  NetworkLocation location;
  Date epoch;
  double height_m = 0;
  std::string mission;
  OrbitClass orbit_class = OrbitClass::short_repeat;
  int track_id = 0;
  std::optional<double> along_track_std_m;
  double quality_factor = 1.0;
};

/// An in-situ gauge record: daily (or sparser) heights at a fixed location,
/// epochs strictly increasing.
struct GaugeSeries {
  std::string id;
  NetworkLocation location;
  std::vector<Date> epochs;
  std::vector<double> heights_m;
};

/// A named prediction location.
struct Target {
  std::string id;
  NetworkLocation location;
};

}  // namespace riverfuse
