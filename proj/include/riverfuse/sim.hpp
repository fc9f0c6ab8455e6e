#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "riverfuse/covariance.hpp"
#include "riverfuse/date.hpp"
#include "riverfuse/network.hpp"
#include "riverfuse/observation.hpp"
#include "riverfuse/random.hpp"

namespace riverfuse {

/// Synthetic network description: a main stem along the x axis with
/// straight tributaries branching off at fixed confluences. Chainages are
/// measured from the mouth; tributary positions from their confluence.
struct TributarySpec {
  std::string river_id;
  double attach_chainage_km = 0;  // confluence position on the main stem
  double length_km = 100;
  TribClass trib_class = TribClass::major_tributary;
  double catchment_weight = 1;
  double node_spacing_km = 50;
};

struct DamSpec {
  std::string river_id;  // "main" or a tributary id
  double up_km = 0;      // distance upstream from the river's downstream end
};

struct NetworkSpec {
  double main_length_km = 400;
  double node_spacing_km = 50;
  double sub_basin_km = 150;  // chainage block length mapped to one sub-basin
  double main_source_weight = 1;
  std::vector<TributarySpec> tributaries;
  std::vector<DamSpec> dams;
};

namespace detail {

inline std::vector<double> merge_positions(std::vector<double> positions) {
  std::sort(positions.begin(), positions.end());
  std::vector<double> merged;
  for (double p : positions) {
    if (merged.empty() || p - merged.back() > 1e-6) merged.push_back(p);
  }
  return merged;
}

}  // namespace detail

/// Builds a valid network from the spec. Tributary confluences must have
/// distinct chainages and dams must not coincide with confluences.
inline RiverNetwork make_network(const NetworkSpec& spec) {
  if (!(spec.main_length_km > 0) || !(spec.node_spacing_km > 0) || !(spec.sub_basin_km > 0)) {
    throw std::invalid_argument("network spec lengths must be positive");
  }
  for (const auto& t : spec.tributaries) {
    if (!(t.attach_chainage_km > 0) || t.attach_chainage_km >= spec.main_length_km) {
      throw std::invalid_argument("tributary '" + t.river_id +
                                  "' must attach strictly inside the main stem");
    }
  }

  std::vector<NodeRecord> nodes;
  std::vector<EdgeRecord> edges;

  // Main-stem break points: regular spacing plus confluences and dams.
  std::vector<double> breaks{0.0, spec.main_length_km};
  for (double c = spec.node_spacing_km; c < spec.main_length_km; c += spec.node_spacing_km) {
    breaks.push_back(c);
  }
  for (const auto& t : spec.tributaries) breaks.push_back(t.attach_chainage_km);
  for (const auto& d : spec.dams) {
    if (d.river_id == "main") {
      if (!(d.up_km > 0) || d.up_km >= spec.main_length_km) {
        throw std::invalid_argument("main-stem dam position outside the river");
      }
      breaks.push_back(d.up_km);
    }
  }
  breaks = detail::merge_positions(std::move(breaks));

  const auto is_near = [](double a, double b) { return std::abs(a - b) <= 1e-6; };
  const auto main_basin = [&](double chainage) {
    return "sb-main-" + std::to_string(static_cast<int>(chainage / spec.sub_basin_km));
  };

  std::vector<std::string> main_node_at(breaks.size());
  for (std::size_t i = 0; i < breaks.size(); ++i) {
    const double c = breaks[i];
    NodeRecord node;
    node.id = "m" + std::to_string(i);
    node.x_km = c;
    node.y_km = 0;
    node.sub_basin_id = main_basin(c);
    node.kind = NodeKind::confluence;
    if (i == 0) node.kind = NodeKind::mouth;
    if (i + 1 == breaks.size()) node.kind = NodeKind::source;
    for (const auto& d : spec.dams) {
      if (d.river_id == "main" && is_near(c, d.up_km)) {
        for (const auto& t : spec.tributaries) {
          if (is_near(c, t.attach_chainage_km)) {
            throw std::invalid_argument("dam coincides with a confluence on the main stem");
          }
        }
        node.kind = NodeKind::dam;
      }
    }
    main_node_at[i] = node.id;
    nodes.push_back(std::move(node));
  }

  // Main-stem edge weight: the source weight plus every tributary whose
  // confluence is at or above the edge's upstream node.
  const auto main_weight = [&](double up_chainage) {
    double w = spec.main_source_weight;
    for (const auto& t : spec.tributaries) {
      if (t.attach_chainage_km >= up_chainage - 1e-6) w += t.catchment_weight;
    }
    return w;
  };
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    EdgeRecord e;
    e.id = "me" + std::to_string(i);
    e.up_node = main_node_at[i + 1];
    e.down_node = main_node_at[i];
    e.length_km = breaks[i + 1] - breaks[i];
    e.river_id = "main";
    e.trib_class = TribClass::main_stem;
    e.catchment_weight = main_weight(breaks[i + 1]);
    edges.push_back(std::move(e));
  }

  for (std::size_t ti = 0; ti < spec.tributaries.size(); ++ti) {
    const auto& t = spec.tributaries[ti];
    for (std::size_t tj = ti + 1; tj < spec.tributaries.size(); ++tj) {
      if (is_near(t.attach_chainage_km, spec.tributaries[tj].attach_chainage_km)) {
        throw std::invalid_argument("tributaries attach at the same confluence");
      }
    }
    std::string confluence_id;
    for (std::size_t i = 0; i < breaks.size(); ++i) {
      if (is_near(breaks[i], t.attach_chainage_km)) confluence_id = main_node_at[i];
    }

    std::vector<double> positions{t.length_km};
    for (double d = t.node_spacing_km; d < t.length_km; d += t.node_spacing_km) {
      positions.push_back(d);
    }
    for (const auto& dam : spec.dams) {
      if (dam.river_id == t.river_id) {
        if (!(dam.up_km > 0) || dam.up_km >= t.length_km) {
          throw std::invalid_argument("tributary dam position outside the river");
        }
        positions.push_back(dam.up_km);
      }
    }
    positions = detail::merge_positions(std::move(positions));

    // Branch geometry: straight line at a fixed angle, alternating sides.
    const double dir_x = 0.3;
    const double dir_y = ti % 2 == 0 ? 0.954 : -0.954;
    std::string below = confluence_id;
    for (std::size_t j = 0; j < positions.size(); ++j) {
      const double d = positions[j];
      NodeRecord node;
      node.id = t.river_id + "-n" + std::to_string(j);
      node.x_km = t.attach_chainage_km + dir_x * d;
      node.y_km = dir_y * d;
      node.sub_basin_id =
          "sb-" + t.river_id + "-" + std::to_string(static_cast<int>(d / spec.sub_basin_km));
      node.kind = j + 1 == positions.size() ? NodeKind::source : NodeKind::confluence;
      for (const auto& dam : spec.dams) {
        if (dam.river_id == t.river_id && is_near(d, dam.up_km)) node.kind = NodeKind::dam;
      }
      nodes.push_back(node);

      EdgeRecord e;
      e.id = t.river_id + "-e" + std::to_string(j);
      e.up_node = node.id;
      e.down_node = below;
      e.length_km = d - (j == 0 ? 0.0 : positions[j - 1]);
      e.river_id = t.river_id;
      e.trib_class = t.trib_class;
      e.catchment_weight = t.catchment_weight;
      edges.push_back(std::move(e));
      below = node.id;
    }
  }

  return RiverNetwork::build(std::move(nodes), std::move(edges));
}

/// Random valid network for property tests: randomized main-stem length,
/// spacing, tributary layout and weights, occasionally a dam.
inline RiverNetwork random_network(Rng& rng, int max_tributaries = 4) {
  NetworkSpec spec;
  spec.main_length_km = rng.uniform(200, 600);
  spec.node_spacing_km = rng.uniform(30, 80);
  spec.sub_basin_km = rng.uniform(80, 200);
  spec.main_source_weight = rng.uniform(0.5, 2.0);
  const int n_tribs = static_cast<int>(rng.uniform_int(0, max_tributaries));
  for (int i = 0; i < n_tribs; ++i) {
    TributarySpec t;
    t.river_id = "trib" + std::to_string(i);
    const double slot = spec.main_length_km / (n_tribs + 1);
    t.attach_chainage_km = slot * (i + 1) + rng.uniform(-0.3, 0.3) * slot;
    t.length_km = rng.uniform(50, 250);
    t.trib_class = rng.bernoulli(0.5) ? TribClass::major_tributary : TribClass::minor_tributary;
    t.catchment_weight = rng.uniform(0.2, 1.5);
    t.node_spacing_km = rng.uniform(30, 80);
    spec.tributaries.push_back(std::move(t));
  }
  if (rng.bernoulli(0.3)) {
    DamSpec dam;
    const int which = static_cast<int>(rng.uniform_int(0, n_tribs));
    dam.river_id = which == 0 ? "main" : spec.tributaries[which - 1].river_id;
    const double len =
        which == 0 ? spec.main_length_km : spec.tributaries[which - 1].length_km;
    dam.up_km = rng.uniform(0.25, 0.75) * len;
    // Nudge away from confluences so node kinds stay unambiguous.
    for (const auto& t : spec.tributaries) {
      if (dam.river_id == "main" && std::abs(dam.up_km - t.attach_chainage_km) < 1.0) {
        dam.up_km += 2.0;
      }
    }
    if (dam.up_km < len - 1.0) spec.dams.push_back(dam);
  }
  return make_network(spec);
}

/// Deterministic synthetic water level: per-edge linear profile in
/// chainage, a sinusoidal seasonal cycle, and flood/drought pulses that
/// translate downstream at a fixed celerity. Pulses use a raised-cosine
/// envelope and do not propagate upstream, onto unconnected branches, or
/// across dams.
struct FloodEventSpec {
  int year = 0;
  int onset_doy = 152;  // pulse start at the origin
  int duration_days = 100;
  double amplitude_m = 3;  // negative for droughts
  NetworkLocation origin;
  double celerity_km_per_day = 50;
};

struct EdgeProfile {
  int edge = -1;
  double intercept_m = 0;
  double slope_m_per_km = 0;
};

struct TruthConfig {
  double default_intercept_m = 0;
  double default_slope_m_per_km = 0;
  std::vector<EdgeProfile> profiles;  // per-edge overrides
  double seasonal_amplitude_m = 0;
  int seasonal_peak_doy = 227;
  std::vector<FloodEventSpec> events;
  double outlier_rate = 0;      // fraction of observations hit by a gross error
  double outlier_magnitude_m = 8;
};

inline double truth_level(const RiverNetwork& net, const TruthConfig& cfg, NetworkLocation loc,
                          double t_serial_days) {
  double intercept = cfg.default_intercept_m;
  double slope = cfg.default_slope_m_per_km;
  for (const auto& p : cfg.profiles) {
    if (p.edge == loc.edge) {
      intercept = p.intercept_m;
      slope = p.slope_m_per_km;
      break;
    }
  }
  double level = intercept + slope * net.chainage_km(loc);

  constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
  if (cfg.seasonal_amplitude_m != 0) {
    const double floor_t = std::floor(t_serial_days);
    const double doy = Date(static_cast<std::int32_t>(floor_t)).day_of_year() +
                       (t_serial_days - floor_t);
    level += cfg.seasonal_amplitude_m *
             std::cos(kTwoPi * (doy - cfg.seasonal_peak_doy) / 365.25);
  }

  for (const auto& ev : cfg.events) {
    const auto rd = net.river_distance(ev.origin, loc);
    if (!rd) continue;
    if (net.chainage_km(loc) > net.chainage_km(ev.origin) + 1e-9) continue;  // upstream
    const double onset = Date(ev.year, 1, 1).serial() + (ev.onset_doy - 1);
    const double s = (t_serial_days - *rd / ev.celerity_km_per_day - onset) / ev.duration_days;
    if (s >= 0 && s <= 1) {
      level += ev.amplitude_m * 0.5 * (1.0 - std::cos(kTwoPi * s));
    }
  }
  return level;
}

inline double truth_level(const RiverNetwork& net, const TruthConfig& cfg, NetworkLocation loc,
                          Date t) {
  return truth_level(net, cfg, loc, static_cast<double>(t.serial()));
}

/// One simulated altimetry mission.
struct MissionConfig {
  std::string name;
  OrbitClass orbit_class = OrbitClass::short_repeat;
  int repeat_days = 35;           // short- and long-repeat missions
  double vs_spacing_km = 70;      // short-repeat: virtual-station spacing per river
  int crossings_per_cycle = 40;   // long-repeat: fixed track crossings
  double obs_per_day = 0.5;       // non-repeat: average sampling density
  int phase_days = 0;
  double noise_std_m = 0.10;
  double along_track_std_m = 0.10;
  double bias_m = 0;  // constant radial offset relative to the truth datum
};

namespace detail {

/// Maps a chainage on one river to a network location. Assumes the river
/// is a single chain (true for generated networks).
inline NetworkLocation locate_on_river(const RiverNetwork& net, int river, double chainage) {
  for (int e = 0; e < net.edge_count(); ++e) {
    if (net.edge_river(e) != river) continue;
    const double down = net.chainage_km(NetworkLocation{e, net.edge(e).length_km});
    const double up = net.chainage_km(NetworkLocation{e, 0.0});
    if (chainage >= down - 1e-9 && chainage <= up + 1e-9) {
      const double offset = std::clamp(up - chainage, 0.0, net.edge(e).length_km);
      return NetworkLocation{e, offset};
    }
  }
  throw std::logic_error("chainage outside river extent");
}

inline NetworkLocation random_location(const RiverNetwork& net, Rng& rng) {
  double total = 0;
  for (int e = 0; e < net.edge_count(); ++e) total += net.edge(e).length_km;
  double u = rng.uniform(0, total);
  for (int e = 0; e < net.edge_count(); ++e) {
    if (u <= net.edge(e).length_km) return NetworkLocation{e, u};
    u -= net.edge(e).length_km;
  }
  return NetworkLocation{net.edge_count() - 1, net.edge(net.edge_count() - 1).length_km};
}

}  // namespace detail

/// Resolves a (river id, distance upstream of the river's downstream end)
/// coordinate to a network location. For the main stem the coordinate
/// equals the chainage; for a tributary it is measured from its
/// confluence.
inline NetworkLocation locate_river_up(const RiverNetwork& net, const std::string& river_id,
                                       double up_km) {
  int river = -1;
  for (int r = 0; r < net.river_count(); ++r) {
    if (net.river_id(r) == river_id) river = r;
  }
  if (river < 0) throw std::invalid_argument("unknown river id '" + river_id + "'");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int e = 0; e < net.edge_count(); ++e) {
    if (net.edge_river(e) != river) continue;
    lo = std::min(lo, net.chainage_km(NetworkLocation{e, net.edge(e).length_km}));
    hi = std::max(hi, net.chainage_km(NetworkLocation{e, 0.0}));
  }
  if (!(up_km >= 0) || lo + up_km > hi + 1e-9) {
    throw std::invalid_argument("coordinate " + std::to_string(up_km) +
                                " outside river '" + river_id + "'");
  }
  return detail::locate_on_river(net, river, lo + up_km);
}

/// Fixed virtual-station locations for a short-repeat mission: stations
/// every vs_spacing_km along each river, measured down from the river's
/// upstream end.
inline std::vector<NetworkLocation> virtual_stations(const RiverNetwork& net,
                                                     double vs_spacing_km) {
  std::vector<NetworkLocation> stations;
  for (int r = 0; r < net.river_count(); ++r) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int e = 0; e < net.edge_count(); ++e) {
      if (net.edge_river(e) != r) continue;
      lo = std::min(lo, net.chainage_km(NetworkLocation{e, net.edge(e).length_km}));
      hi = std::max(hi, net.chainage_km(NetworkLocation{e, 0.0}));
    }
    for (double c = hi - 0.5 * vs_spacing_km; c > lo; c -= vs_spacing_km) {
      stations.push_back(detail::locate_on_river(net, r, c));
    }
  }
  return stations;
}

/// Samples every configured mission over [from, to]. Short-repeat missions
/// revisit fixed virtual stations on their repeat cycle; long-repeat
/// missions revisit fixed track crossings; non-repeat missions sample
/// fresh random locations. The result is sorted by (mission, epoch,
/// location, track) so identical seeds give identical files.
inline std::vector<Observation> sample_missions(const RiverNetwork& net, const TruthConfig& truth,
                                                std::span<const MissionConfig> missions,
                                                Date from, Date to, Rng& rng) {
  if (to < from) throw std::invalid_argument("simulation era is empty");
  std::vector<Observation> obs;

  const auto emit = [&](const MissionConfig& m, NetworkLocation loc, Date t, int track) {
    Observation o;
    o.mission = m.name;
    o.orbit_class = m.orbit_class;
    o.track_id = track;
    o.location = loc;
    o.epoch = t;
    o.height_m = truth_level(net, truth, loc, t) + m.bias_m + rng.normal(0, m.noise_std_m);
    if (truth.outlier_rate > 0 && rng.bernoulli(truth.outlier_rate)) {
      o.height_m += (rng.bernoulli(0.5) ? 1.0 : -1.0) * truth.outlier_magnitude_m;
    }
    o.along_track_std_m = m.along_track_std_m * rng.uniform(0.7, 1.3);
    o.quality_factor = 1.0;
    obs.push_back(std::move(o));
  };

  for (const auto& m : missions) {
    if (m.orbit_class == OrbitClass::short_repeat) {
      const auto stations = virtual_stations(net, m.vs_spacing_km);
      std::vector<int> station_phase(stations.size());
      for (auto& p : station_phase) {
        p = static_cast<int>(rng.uniform_int(0, std::max(1, m.repeat_days) - 1));
      }
      for (std::size_t s = 0; s < stations.size(); ++s) {
        for (Date t = from + m.phase_days + station_phase[s]; t <= to; t = t + m.repeat_days) {
          emit(m, stations[s], t, static_cast<int>(s));
        }
      }
    } else if (m.orbit_class == OrbitClass::long_repeat) {
      for (int crossing = 0; crossing < m.crossings_per_cycle; ++crossing) {
        const NetworkLocation loc = detail::random_location(net, rng);
        const int day = static_cast<int>(rng.uniform_int(0, std::max(1, m.repeat_days) - 1));
        for (Date t = from + m.phase_days + day; t <= to; t = t + m.repeat_days) {
          emit(m, loc, t, crossing);
        }
      }
    } else {
      const int days = to - from + 1;
      const long total = std::lround(m.obs_per_day * days);
      for (long i = 0; i < total; ++i) {
        const Date t = from + static_cast<int>(rng.uniform_int(0, days - 1));
        emit(m, detail::random_location(net, rng), t, static_cast<int>(i));
      }
    }
  }

  std::sort(obs.begin(), obs.end(), [&](const Observation& a, const Observation& b) {
    if (a.mission != b.mission) return a.mission < b.mission;
    if (a.epoch != b.epoch) return a.epoch < b.epoch;
    if (a.location.edge != b.location.edge) return a.location.edge < b.location.edge;
    if (a.location.offset_km != b.location.offset_km) {
      return a.location.offset_km < b.location.offset_km;
    }
    return a.track_id < b.track_id;
  });
  return obs;
}

/// Adds a zero-mean draw of the process covariance to the observation
/// heights, via dense Cholesky of the process covariance matrix. Used to
/// generate data whose parameters a fit should recover.
inline void add_gaussian_process(const RiverNetwork& net, const CovarianceParams& params,
                                 std::vector<Observation>& obs, Rng& rng) {
  const auto matrices = build_matrices(net, obs, params);
  Eigen::MatrixXd sigma = matrices.sigma_u;
  const double jitter = 1e-10 * std::max(1.0, sigma.trace() / std::max<Eigen::Index>(1, sigma.rows()));
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int attempt = 0; attempt < 4; ++attempt) {
    llt.compute(sigma);
    if (llt.info() == Eigen::Success) break;
    sigma.diagonal().array() += jitter * std::pow(10.0, attempt);
  }
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("process covariance is not positive definite");
  }
  Eigen::VectorXd g(sigma.rows());
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = rng.normal();
  const Eigen::VectorXd draw = llt.matrixL() * g;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    obs[i].height_m += draw[static_cast<Eigen::Index>(i)];
  }
}

/// Daily truth series at fixed targets, optionally with gauge noise.
inline GaugeSeries make_gauge_series(const RiverNetwork& net, const TruthConfig& truth,
                                     const std::string& id, NetworkLocation loc, Date from,
                                     Date to, double noise_std_m, Rng& rng) {
  GaugeSeries g;
  g.id = id;
  g.location = loc;
  for (Date t = from; t <= to; t = t + 1) {
    g.epochs.push_back(t);
    double h = truth_level(net, truth, loc, t);
    if (noise_std_m > 0) h += rng.normal(0, noise_std_m);
    g.heights_m.push_back(h);
  }
  return g;
}

}  // namespace riverfuse
