#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "riverfuse/covariance.hpp"
#include "riverfuse/date.hpp"
#include "riverfuse/network.hpp"
#include "riverfuse/observation.hpp"
#include "riverfuse/sim.hpp"

namespace riverfuse {

namespace detail {

using nlohmann::json;

inline json load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw std::runtime_error(path + ": " + err.what());
  }
  return j;
}

/// Rejects objects with keys outside the allowed set and reports missing
/// required keys by name.
inline void check_keys(const json& j, const std::string& context,
                       const std::set<std::string>& required,
                       const std::set<std::string>& optional = {}) {
  if (!j.is_object()) throw std::runtime_error(context + ": expected a JSON object");
  for (const auto& item : j.items()) {
    if (!required.count(item.key()) && !optional.count(item.key())) {
      throw std::runtime_error(context + ": unknown key '" + item.key() + "'");
    }
  }
  for (const auto& key : required) {
    if (!j.contains(key)) {
      throw std::runtime_error(context + ": missing key '" + key + "'");
    }
  }
}

inline double get_number(const json& j, const std::string& context, const std::string& key) {
  if (!j.at(key).is_number()) {
    throw std::runtime_error(context + ": key '" + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

inline double get_number_or(const json& j, const std::string& context, const std::string& key,
                            double fallback) {
  return j.contains(key) ? get_number(j, context, key) : fallback;
}

inline int get_int_or(const json& j, const std::string& context, const std::string& key,
                      int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) {
    throw std::runtime_error(context + ": key '" + key + "' must be an integer");
  }
  return j.at(key).get<int>();
}

inline std::string get_string(const json& j, const std::string& context,
                              const std::string& key) {
  if (!j.at(key).is_string()) {
    throw std::runtime_error(context + ": key '" + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

}  // namespace detail

/// Parses the covariance parameter file. All eight keys are required and
/// no other keys are accepted; values are validated.
inline CovarianceParams params_from_json(const nlohmann::json& j,
                                         const std::string& context = "params") {
  detail::check_keys(j, context,
                     {"sigma2_river", "rho_river", "sigma2_basin", "rho_basin", "tau", "nugget",
                      "trib_factor_major", "trib_factor_minor"});
  CovarianceParams p;
  p.sigma2_river = detail::get_number(j, context, "sigma2_river");
  p.rho_river = detail::get_number(j, context, "rho_river");
  p.sigma2_basin = detail::get_number(j, context, "sigma2_basin");
  p.rho_basin = detail::get_number(j, context, "rho_basin");
  p.tau = detail::get_number(j, context, "tau");
  p.nugget = detail::get_number(j, context, "nugget");
  p.trib_factor_major = detail::get_number(j, context, "trib_factor_major");
  p.trib_factor_minor = detail::get_number(j, context, "trib_factor_minor");
  try {
    p.validate();
  } catch (const std::invalid_argument& err) {
    throw std::runtime_error(context + ": " + err.what());
  }
  return p;
}

inline nlohmann::json params_to_json(const CovarianceParams& p) {
  return nlohmann::json{{"sigma2_river", p.sigma2_river},
                        {"rho_river", p.rho_river},
                        {"sigma2_basin", p.sigma2_basin},
                        {"rho_basin", p.rho_basin},
                        {"tau", p.tau},
                        {"nugget", p.nugget},
                        {"trib_factor_major", p.trib_factor_major},
                        {"trib_factor_minor", p.trib_factor_minor}};
}

inline CovarianceParams load_params(const std::string& path) {
  return params_from_json(detail::load_json(path), path);
}

inline void save_params(const std::string& path, const CovarianceParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open file for writing");
  out << params_to_json(p).dump(2) << '\n';
}

/// Everything cmd_simulate needs: the network layout, the deterministic
/// truth model, the mission roster, the era, and the named targets where
/// gauges and truth series are produced.
struct SimulateConfig {
  NetworkSpec network;
  TruthConfig truth;  // profiles are global (default intercept/slope only)
  std::vector<MissionConfig> missions;
  Date era_from;
  Date era_to;
  struct TargetSpec {
    std::string id;
    std::string river_id;
    double up_km = 0;
  };
  std::vector<TargetSpec> targets;
  double gauge_noise_std_m = 0;
  // Events are resolved to network locations after the network is built.
  struct EventSpec {
    int year = 0;
    int onset_doy = 152;
    int duration_days = 100;
    double amplitude_m = 3;
    std::string origin_river;
    double origin_up_km = 0;
    double celerity_km_per_day = 50;
  };
  std::vector<EventSpec> events;
};

inline SimulateConfig simulate_config_from_json(const nlohmann::json& j,
                                                const std::string& context) {
  using detail::check_keys;
  using detail::get_int_or;
  using detail::get_number;
  using detail::get_number_or;
  using detail::get_string;

  check_keys(j, context, {"network", "era", "truth", "missions", "targets"},
             {"gauge_noise_std_m"});
  SimulateConfig cfg;

  const auto& jn = j.at("network");
  check_keys(jn, context + ".network", {"main_length_km"},
             {"node_spacing_km", "sub_basin_km", "main_source_weight", "tributaries", "dams"});
  cfg.network.main_length_km = get_number(jn, context + ".network", "main_length_km");
  cfg.network.node_spacing_km =
      get_number_or(jn, context + ".network", "node_spacing_km", cfg.network.node_spacing_km);
  cfg.network.sub_basin_km =
      get_number_or(jn, context + ".network", "sub_basin_km", cfg.network.sub_basin_km);
  cfg.network.main_source_weight = get_number_or(jn, context + ".network", "main_source_weight",
                                                 cfg.network.main_source_weight);
  if (jn.contains("tributaries")) {
    for (const auto& jt : jn.at("tributaries")) {
      const std::string tctx = context + ".network.tributaries";
      check_keys(jt, tctx, {"river_id", "attach_chainage_km", "length_km"},
                 {"trib_class", "catchment_weight", "node_spacing_km"});
      TributarySpec t;
      t.river_id = get_string(jt, tctx, "river_id");
      t.attach_chainage_km = get_number(jt, tctx, "attach_chainage_km");
      t.length_km = get_number(jt, tctx, "length_km");
      if (jt.contains("trib_class")) t.trib_class = parse_trib_class(get_string(jt, tctx, "trib_class"));
      t.catchment_weight = get_number_or(jt, tctx, "catchment_weight", t.catchment_weight);
      t.node_spacing_km = get_number_or(jt, tctx, "node_spacing_km", t.node_spacing_km);
      cfg.network.tributaries.push_back(std::move(t));
    }
  }
  if (jn.contains("dams")) {
    for (const auto& jd : jn.at("dams")) {
      check_keys(jd, context + ".network.dams", {"river_id", "up_km"});
      cfg.network.dams.push_back(DamSpec{get_string(jd, context + ".network.dams", "river_id"),
                                         get_number(jd, context + ".network.dams", "up_km")});
    }
  }

  const auto& je = j.at("era");
  check_keys(je, context + ".era", {"from", "to"});
  cfg.era_from = Date::parse(get_string(je, context + ".era", "from"));
  cfg.era_to = Date::parse(get_string(je, context + ".era", "to"));

  const auto& jt = j.at("truth");
  const std::string tctx = context + ".truth";
  check_keys(jt, tctx, {},
             {"intercept_m", "slope_m_per_km", "seasonal_amplitude_m", "seasonal_peak_doy",
              "events", "outlier_rate", "outlier_magnitude_m"});
  cfg.truth.default_intercept_m = get_number_or(jt, tctx, "intercept_m", 0.0);
  cfg.truth.default_slope_m_per_km = get_number_or(jt, tctx, "slope_m_per_km", 0.0);
  cfg.truth.seasonal_amplitude_m = get_number_or(jt, tctx, "seasonal_amplitude_m", 0.0);
  cfg.truth.seasonal_peak_doy = get_int_or(jt, tctx, "seasonal_peak_doy", 227);
  cfg.truth.outlier_rate = get_number_or(jt, tctx, "outlier_rate", 0.0);
  cfg.truth.outlier_magnitude_m = get_number_or(jt, tctx, "outlier_magnitude_m", 8.0);
  if (jt.contains("events")) {
    for (const auto& jev : jt.at("events")) {
      const std::string ectx = tctx + ".events";
      check_keys(jev, ectx, {"year", "amplitude_m", "origin_river", "origin_up_km"},
                 {"onset_doy", "duration_days", "celerity_km_per_day"});
      SimulateConfig::EventSpec ev;
      ev.year = get_int_or(jev, ectx, "year", 0);
      ev.amplitude_m = get_number(jev, ectx, "amplitude_m");
      ev.origin_river = get_string(jev, ectx, "origin_river");
      ev.origin_up_km = get_number(jev, ectx, "origin_up_km");
      ev.onset_doy = get_int_or(jev, ectx, "onset_doy", ev.onset_doy);
      ev.duration_days = get_int_or(jev, ectx, "duration_days", ev.duration_days);
      ev.celerity_km_per_day =
          get_number_or(jev, ectx, "celerity_km_per_day", ev.celerity_km_per_day);
      cfg.events.push_back(std::move(ev));
    }
  }

  for (const auto& jm : j.at("missions")) {
    const std::string mctx = context + ".missions";
    check_keys(jm, mctx, {"name", "orbit_class"},
               {"repeat_days", "vs_spacing_km", "crossings_per_cycle", "obs_per_day",
                "phase_days", "noise_std_m", "along_track_std_m", "bias_m"});
    MissionConfig m;
    m.name = get_string(jm, mctx, "name");
    m.orbit_class = parse_orbit_class(get_string(jm, mctx, "orbit_class"));
    m.repeat_days = get_int_or(jm, mctx, "repeat_days", m.repeat_days);
    m.vs_spacing_km = get_number_or(jm, mctx, "vs_spacing_km", m.vs_spacing_km);
    m.crossings_per_cycle = get_int_or(jm, mctx, "crossings_per_cycle", m.crossings_per_cycle);
    m.obs_per_day = get_number_or(jm, mctx, "obs_per_day", m.obs_per_day);
    m.phase_days = get_int_or(jm, mctx, "phase_days", m.phase_days);
    m.noise_std_m = get_number_or(jm, mctx, "noise_std_m", m.noise_std_m);
    m.along_track_std_m = get_number_or(jm, mctx, "along_track_std_m", m.along_track_std_m);
    m.bias_m = get_number_or(jm, mctx, "bias_m", m.bias_m);
    cfg.missions.push_back(std::move(m));
  }

  for (const auto& jg : j.at("targets")) {
    const std::string gctx = context + ".targets";
    check_keys(jg, gctx, {"id", "river_id", "up_km"});
    cfg.targets.push_back(SimulateConfig::TargetSpec{get_string(jg, gctx, "id"),
                                                     get_string(jg, gctx, "river_id"),
                                                     get_number(jg, gctx, "up_km")});
  }

  cfg.gauge_noise_std_m = get_number_or(j, context, "gauge_noise_std_m", 0.0);
  return cfg;
}

inline SimulateConfig load_simulate_config(const std::string& path) {
  return simulate_config_from_json(detail::load_json(path), path);
}

}  // namespace riverfuse
