#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "riverfuse/csv.hpp"
#include "riverfuse/date.hpp"
#include "riverfuse/network.hpp"
#include "riverfuse/observation.hpp"

namespace riverfuse {

struct RejectedRow {
  std::size_t line = 0;  // source line, 0 when the row did not come from a file
  std::string reason;
};

struct LoadReport {
  std::vector<RejectedRow> rejected;
};

struct LoadOptions {
  // Plausibility era; epochs outside are rejected row-by-row.
  Date era_min = Date(1980, 1, 1);
  Date era_max = Date(2100, 1, 1);
};

/// Reads observations.csv. Structural problems (missing file, malformed
/// header, wrong arity, unparsable numbers) throw; rows that parse but
/// violate the data invariants (unknown edge, offset outside the edge,
/// non-finite height, epoch outside the era, quality factor below one)
/// are skipped and reported with their line numbers.
inline std::vector<Observation> load_observations(const std::string& path,
                                                  const RiverNetwork& net,
                                                  const LoadOptions& options = {},
                                                  LoadReport* report = nullptr) {
  const auto table = csv::read_table(
      path, {"mission", "orbit_class", "track_id", "edge_id", "offset_km", "date",
             "height_m", "along_track_std_m", "quality_factor"});
  std::vector<Observation> obs;
  obs.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    const auto reject = [&](const std::string& reason) {
      if (report) report->rejected.push_back({row.line, reason});
    };
    try {
      Observation o;
      o.mission = row.fields[0];
      o.orbit_class = parse_orbit_class(row.fields[1]);
      o.track_id = static_cast<int>(csv::parse_int(table, row, 2));
      o.location = net.locate(row.fields[3], csv::parse_double(table, row, 4));
      o.epoch = Date::parse(row.fields[5]);
      o.height_m = csv::parse_double(table, row, 6);
      if (!row.fields[7].empty()) {
        o.along_track_std_m = csv::parse_double(table, row, 7);
        if (!(*o.along_track_std_m >= 0) || !std::isfinite(*o.along_track_std_m)) {
          reject("along_track_std_m must be non-negative");
          continue;
        }
      }
      o.quality_factor = csv::parse_double(table, row, 8);
      if (!std::isfinite(o.height_m)) {
        reject("height_m is not finite");
        continue;
      }
      if (o.epoch < options.era_min || o.epoch > options.era_max) {
        reject("epoch " + o.epoch.to_string() + " outside the plausible era");
        continue;
      }
      if (!(o.quality_factor >= 1.0) || !std::isfinite(o.quality_factor)) {
        reject("quality_factor must be >= 1");
        continue;
      }
      obs.push_back(std::move(o));
    } catch (const std::invalid_argument& err) {
      reject(err.what());
    }
  }
  return obs;
}

inline void save_observations(const std::string& path, const RiverNetwork& net,
                              std::span<const Observation> obs) {
  csv::Writer out(path);
  out.row({"mission", "orbit_class", "track_id", "edge_id", "offset_km", "date", "height_m",
           "along_track_std_m", "quality_factor"});
  for (const auto& o : obs) {
    out.row({o.mission, to_string(o.orbit_class), std::to_string(o.track_id),
             net.edge(o.location.edge).id, csv::format_fixed(o.location.offset_km, 3),
             o.epoch.to_string(), csv::format_fixed(o.height_m, 4),
             o.along_track_std_m ? csv::format_fixed(*o.along_track_std_m, 4) : "",
             csv::format_fixed(o.quality_factor, 3)});
  }
  out.close();
}

/// Reads gauges.csv (gauge_id,edge_id,offset_km,date,height_m), grouping
/// rows by gauge id. Epochs within a gauge must be strictly increasing; a
/// gauge's location must be consistent across its rows.
inline std::vector<GaugeSeries> load_gauges(const std::string& path, const RiverNetwork& net) {
  const auto table =
      csv::read_table(path, {"gauge_id", "edge_id", "offset_km", "date", "height_m"});
  std::vector<GaugeSeries> gauges;
  std::map<std::string, std::size_t> by_id;
  for (const auto& row : table.rows) {
    const std::string& id = row.fields[0];
    const NetworkLocation loc = net.locate(row.fields[1], csv::parse_double(table, row, 2));
    const Date date = Date::parse(row.fields[3]);
    const double height = csv::parse_double(table, row, 4);
    if (!std::isfinite(height)) {
      throw std::runtime_error(path + ":" + std::to_string(row.line) +
                               ": gauge height is not finite");
    }
    auto [it, inserted] = by_id.emplace(id, gauges.size());
    if (inserted) {
      gauges.push_back(GaugeSeries{id, loc, {}, {}});
    } else {
      const auto& g = gauges[it->second];
      if (!(g.location == loc)) {
        throw std::runtime_error(path + ":" + std::to_string(row.line) + ": gauge '" + id +
                                 "' changes location mid-series");
      }
      if (!g.epochs.empty() && !(g.epochs.back() < date)) {
        throw std::runtime_error(path + ":" + std::to_string(row.line) + ": gauge '" + id +
                                 "' epochs must be strictly increasing");
      }
    }
    gauges[it->second].epochs.push_back(date);
    gauges[it->second].heights_m.push_back(height);
  }
  return gauges;
}

inline void save_gauges(const std::string& path, const RiverNetwork& net,
                        std::span<const GaugeSeries> gauges) {
  csv::Writer out(path);
  out.row({"gauge_id", "edge_id", "offset_km", "date", "height_m"});
  for (const auto& g : gauges) {
    for (std::size_t i = 0; i < g.epochs.size(); ++i) {
      out.row({g.id, net.edge(g.location.edge).id, csv::format_fixed(g.location.offset_km, 3),
               g.epochs[i].to_string(), csv::format_fixed(g.heights_m[i], 4)});
    }
  }
  out.close();
}

/// Reads targets.csv (target_id,edge_id,offset_km). Target ids must be
/// unique.
inline std::vector<Target> load_targets(const std::string& path, const RiverNetwork& net) {
  const auto table = csv::read_table(path, {"target_id", "edge_id", "offset_km"});
  std::vector<Target> targets;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    if (!seen.insert(row.fields[0]).second) {
      throw std::runtime_error(path + ":" + std::to_string(row.line) + ": duplicate target '" +
                               row.fields[0] + "'");
    }
    targets.push_back(
        Target{row.fields[0], net.locate(row.fields[1], csv::parse_double(table, row, 2))});
  }
  return targets;
}

inline void save_targets(const std::string& path, const RiverNetwork& net,
                         std::span<const Target> targets) {
  csv::Writer out(path);
  out.row({"target_id", "edge_id", "offset_km"});
  for (const auto& t : targets) {
    out.row({t.id, net.edge(t.location.edge).id, csv::format_fixed(t.location.offset_km, 3)});
  }
  out.close();
}

namespace detail {

inline double median(std::vector<double> values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double m = values[mid];
  if (n % 2 == 0) {
    const double lower = *std::max_element(values.begin(), values.begin() + mid);
    m = 0.5 * (lower + m);
  }
  return m;
}

}  // namespace detail

/// Removes observations whose along-track standard deviation exceeds
/// k_sigma times the median of their mission's values. Observations
/// without an along-track std pass through. The pass repeats until no
/// row is removed, which makes the operation idempotent.
inline std::vector<Observation> screen_along_track(std::vector<Observation> obs,
                                                   double k_sigma = 3.0,
                                                   LoadReport* report = nullptr) {
  bool removed = true;
  while (removed) {
    removed = false;
    std::map<std::string, std::vector<double>> stds;
    for (const auto& o : obs) {
      if (o.along_track_std_m) stds[o.mission].push_back(*o.along_track_std_m);
    }
    std::map<std::string, double> cutoff;
    for (auto& [mission, values] : stds) {
      cutoff[mission] = k_sigma * detail::median(std::move(values));
    }
    std::vector<Observation> kept;
    kept.reserve(obs.size());
    for (auto& o : obs) {
      if (o.along_track_std_m && *o.along_track_std_m > cutoff[o.mission]) {
        if (report) {
          report->rejected.push_back(
              {0, "along-track std " + csv::format_fixed(*o.along_track_std_m, 4) +
                      " exceeds mission cutoff (" + o.mission + ")"});
        }
        removed = true;
        continue;
      }
      kept.push_back(std::move(o));
    }
    obs = std::move(kept);
  }
  return obs;
}

struct AnnualRepeatOptions {
  double threshold_m = 3.0;
  double repeat_period_days = 365.25;
  double period_tolerance_days = 15.0;
  double vicinity_river_km = 50.0;
  double vicinity_basin_km = 30.0;
  double vicinity_days = 15.0;
};

/// Outlier screen for long-repeat missions: an observation is removed when
/// it deviates from the median of its comparison group by more than the
/// threshold. The group holds same-track observations about one repeat
/// period away plus all observations in a space-time vicinity; rows with
/// an empty group pass through. Repeats until stable.
inline std::vector<Observation> screen_annual_repeat(const RiverNetwork& net,
                                                     std::vector<Observation> obs,
                                                     const AnnualRepeatOptions& options = {},
                                                     LoadReport* report = nullptr) {
  bool removed = true;
  while (removed) {
    removed = false;
    std::vector<bool> flagged(obs.size(), false);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (obs[i].orbit_class != OrbitClass::long_repeat) continue;
      std::vector<double> group;
      for (std::size_t j = 0; j < obs.size(); ++j) {
        if (j == i) continue;
        const double dt = std::abs(static_cast<double>(obs[i].epoch - obs[j].epoch));
        const bool same_track = obs[j].mission == obs[i].mission &&
                                obs[j].track_id == obs[i].track_id &&
                                std::abs(dt - options.repeat_period_days) <=
                                    options.period_tolerance_days;
        bool vicinity = false;
        if (dt <= options.vicinity_days) {
          const auto rd = net.river_distance(obs[i].location, obs[j].location);
          vicinity = (rd && *rd <= options.vicinity_river_km) ||
                     net.basin_distance(obs[i].location, obs[j].location) <=
                         options.vicinity_basin_km;
        }
        if (same_track || vicinity) group.push_back(obs[j].height_m);
      }
      if (group.empty()) continue;
      if (std::abs(obs[i].height_m - detail::median(std::move(group))) > options.threshold_m) {
        flagged[i] = true;
      }
    }
    std::vector<Observation> kept;
    kept.reserve(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (flagged[i]) {
        if (report) {
          report->rejected.push_back(
              {0, "height deviates from repeat/vicinity median (" + obs[i].mission + " " +
                      obs[i].epoch.to_string() + ")"});
        }
        removed = true;
        continue;
      }
      kept.push_back(std::move(obs[i]));
    }
    obs = std::move(kept);
  }
  return obs;
}

struct OffsetOptions {
  double cell_chainage_km = 10.0;  // spatial co-location cell size
  int cell_doy_days = 10;          // seasonal co-location cell size
};

struct MissionOffsets {
  std::string reference;
  std::map<std::string, double> offset_m;  // reference maps to exactly 0
  std::vector<std::string> undefined;      // missions with no co-location cells
};

/// Radial-error alignment between missions: the network is cut into
/// (edge, chainage cell, day-of-year cell) boxes; within each box that
/// both missions populate, the difference of height medians is one offset
/// sample, and a mission's offset is the median over its boxes. Missions
/// sharing no box with the reference are reported as undefined.
inline MissionOffsets estimate_mission_offsets(const RiverNetwork& net,
                                               std::span<const Observation> obs,
                                               const std::string& reference_mission,
                                               const OffsetOptions& options = {}) {
  struct CellKey {
    int edge;
    int chain_cell;
    int doy_cell;
    auto operator<=>(const CellKey&) const = default;
  };
  std::map<std::string, std::map<CellKey, std::vector<double>>> cells;
  std::set<std::string> missions;
  for (const auto& o : obs) {
    missions.insert(o.mission);
    const CellKey key{
        o.location.edge,
        static_cast<int>(std::floor(net.chainage_km(o.location) / options.cell_chainage_km)),
        (o.epoch.day_of_year() - 1) / options.cell_doy_days};
    cells[o.mission][key].push_back(o.height_m);
  }
  if (!missions.count(reference_mission)) {
    throw std::invalid_argument("reference mission '" + reference_mission +
                                "' has no observations");
  }

  MissionOffsets result;
  result.reference = reference_mission;
  result.offset_m[reference_mission] = 0.0;
  std::map<CellKey, double> ref_medians;
  for (auto& [key, values] : cells[reference_mission]) {
    ref_medians[key] = detail::median(values);
  }
  for (const auto& mission : missions) {
    if (mission == reference_mission) continue;
    std::vector<double> samples;
    for (auto& [key, values] : cells[mission]) {
      const auto ref = ref_medians.find(key);
      if (ref == ref_medians.end()) continue;
      samples.push_back(detail::median(values) - ref->second);
    }
    if (samples.empty()) {
      result.undefined.push_back(mission);
    } else {
      result.offset_m[mission] = detail::median(std::move(samples));
    }
  }
  return result;
}

/// Subtracts each mission's offset from its heights. Observations from
/// missions with no defined offset are dropped and reported.
inline std::vector<Observation> apply_offsets(std::vector<Observation> obs,
                                              const MissionOffsets& offsets,
                                              LoadReport* report = nullptr) {
  std::vector<Observation> out;
  out.reserve(obs.size());
  for (auto& o : obs) {
    const auto it = offsets.offset_m.find(o.mission);
    if (it == offsets.offset_m.end()) {
      if (report) {
        report->rejected.push_back(
            {0, "mission '" + o.mission + "' has no inter-mission offset (no co-location)"});
      }
      continue;
    }
    o.height_m -= it->second;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace riverfuse
