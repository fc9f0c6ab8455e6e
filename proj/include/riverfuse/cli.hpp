#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "riverfuse/analysis.hpp"
#include "riverfuse/config_json.hpp"
#include "riverfuse/covariance.hpp"
#include "riverfuse/csv.hpp"
#include "riverfuse/date.hpp"
#include "riverfuse/fit.hpp"
#include "riverfuse/ingest.hpp"
#include "riverfuse/kriging.hpp"
#include "riverfuse/network.hpp"
#include "riverfuse/observation.hpp"
#include "riverfuse/random.hpp"
#include "riverfuse/sim.hpp"
#include "riverfuse/trend.hpp"

namespace riverfuse::cli {

enum class Scenario { s1, s2, s3 };

inline Scenario parse_scenario(const std::string& s) {
  if (s == "S-I") return Scenario::s1;
  if (s == "S-II") return Scenario::s2;
  if (s == "S-III") return Scenario::s3;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected S-I, S-II or S-III)");
}

/// Mission-mix filter: S-I keeps everything, S-II keeps main-stem
/// observations only, S-III keeps main stem plus major tributaries.
inline std::vector<Observation> filter_scenario(const RiverNetwork& net,
                                                std::vector<Observation> obs,
                                                Scenario scenario) {
  if (scenario == Scenario::s1) return obs;
  std::vector<Observation> kept;
  kept.reserve(obs.size());
  for (auto& o : obs) {
    const TribClass c = net.edge(o.location.edge).trib_class;
    const bool keep = c == TribClass::main_stem ||
                      (scenario == Scenario::s3 && c == TribClass::major_tributary);
    if (keep) kept.push_back(std::move(o));
  }
  return kept;
}

struct PrepareOptions {
  Scenario scenario = Scenario::s1;
  bool screen = true;
  std::string reference_mission = "auto";
  double k_sigma = 3.0;
};

/// Picks the offset reference: the short-repeat mission with the most
/// observations (ties to the lexicographically smallest name), falling
/// back to the most populous mission of any class.
inline std::string auto_reference_mission(std::span<const Observation> obs) {
  std::map<std::string, std::pair<long, bool>> counts;  // count, is short-repeat
  for (const auto& o : obs) {
    auto& entry = counts[o.mission];
    ++entry.first;
    if (o.orbit_class == OrbitClass::short_repeat) entry.second = true;
  }
  std::string best;
  long best_count = -1;
  bool best_short = false;
  for (const auto& [name, entry] : counts) {
    const auto [count, is_short] = entry;
    const bool better = (is_short && !best_short) ||
                        (is_short == best_short &&
                         (count > best_count || (count == best_count && name < best)));
    if (better) {
      best = name;
      best_count = count;
      best_short = is_short;
    }
  }
  return best;
}

/// The shared front of fit and predict: scenario filter, dam masking,
/// outlier screening and inter-mission alignment. Diagnostics go to `log`.
inline std::vector<Observation> prepare_observations(const RiverNetwork& net,
                                                     std::vector<Observation> obs,
                                                     const PrepareOptions& options,
                                                     std::ostream& log) {
  const std::size_t loaded = obs.size();
  obs = filter_scenario(net, std::move(obs), options.scenario);
  const std::size_t after_scenario = obs.size();
  obs = net.mask_upstream_of_dams(std::move(obs));
  const std::size_t after_mask = obs.size();

  LoadReport report;
  std::size_t after_screen = after_mask;
  if (options.screen && !obs.empty()) {
    obs = screen_along_track(std::move(obs), options.k_sigma, &report);
    obs = screen_annual_repeat(net, std::move(obs), {}, &report);
    after_screen = obs.size();

    const std::string reference = options.reference_mission == "auto"
                                      ? auto_reference_mission(obs)
                                      : options.reference_mission;
    const auto offsets = estimate_mission_offsets(net, obs, reference);
    obs = apply_offsets(std::move(obs), offsets, &report);
    log << "reference mission: " << reference << "\n";
    for (const auto& [mission, offset] : offsets.offset_m) {
      log << "  offset " << mission << ": " << csv::format_fixed(offset, 4) << " m\n";
    }
    for (const auto& mission : offsets.undefined) {
      log << "  offset " << mission << ": undefined (no co-location), mission dropped\n";
    }
  }

  log << "observations: " << loaded << " loaded, " << after_scenario << " in scenario, "
      << after_mask << " after dam masking, " << after_screen << " after screening, "
      << obs.size() << " used\n";
  if (obs.empty()) throw std::runtime_error("no observations left after preparation");
  return obs;
}

inline RiverNetwork load_network_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  return load_network((fs::path(dir) / "nodes.csv").string(),
                      (fs::path(dir) / "edges.csv").string());
}

inline void write_series_csv(const std::string& path, std::span<const SeriesPoint> series) {
  csv::Writer out(path);
  out.row({"date", "height_m", "sigma_m", "n_obs", "flag"});
  for (const auto& p : series) {
    const bool has_value = p.flag != SeriesFlag::nodata;
    out.row({p.date.to_string(), has_value ? csv::format_fixed(p.height_m, 4) : "nan",
             has_value ? csv::format_fixed(p.sigma_m, 4) : "nan", std::to_string(p.n_obs),
             to_string(p.flag)});
  }
  out.close();
}

inline std::vector<SeriesPoint> read_series_csv(const std::string& path) {
  const auto table = csv::read_table(path, {"date", "height_m", "sigma_m", "n_obs", "flag"});
  std::vector<SeriesPoint> series;
  for (const auto& row : table.rows) {
    SeriesPoint p;
    p.date = Date::parse(row.fields[0]);
    p.flag = parse_series_flag(row.fields[4]);
    p.n_obs = static_cast<int>(csv::parse_int(table, row, 3));
    if (p.flag != SeriesFlag::nodata) {
      p.height_m = csv::parse_double(table, row, 1);
      p.sigma_m = csv::parse_double(table, row, 2);
    }
    series.push_back(p);
  }
  return series;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir;
};

inline void cmd_simulate(const SimulateArgs& args, std::ostream& log) {
  namespace fs = std::filesystem;
  const SimulateConfig cfg = load_simulate_config(args.config_path);
  const RiverNetwork net = make_network(cfg.network);

  TruthConfig truth = cfg.truth;
  for (const auto& ev : cfg.events) {
    FloodEventSpec spec;
    spec.year = ev.year;
    spec.onset_doy = ev.onset_doy;
    spec.duration_days = ev.duration_days;
    spec.amplitude_m = ev.amplitude_m;
    spec.origin = locate_river_up(net, ev.origin_river, ev.origin_up_km);
    spec.celerity_km_per_day = ev.celerity_km_per_day;
    truth.events.push_back(spec);
  }
  std::vector<Target> targets;
  for (const auto& t : cfg.targets) {
    targets.push_back(Target{t.id, locate_river_up(net, t.river_id, t.up_km)});
  }

  Rng rng(args.seed);
  const auto obs = sample_missions(net, truth, cfg.missions, cfg.era_from, cfg.era_to, rng);
  std::vector<GaugeSeries> gauges;
  for (const auto& t : targets) {
    gauges.push_back(make_gauge_series(net, truth, t.id, t.location, cfg.era_from, cfg.era_to,
                                       cfg.gauge_noise_std_m, rng));
  }

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  save_network(net, (out / "nodes.csv").string(), (out / "edges.csv").string());
  save_observations((out / "observations.csv").string(), net, obs);
  save_gauges((out / "gauges.csv").string(), net, gauges);
  save_targets((out / "targets.csv").string(), net, targets);

  csv::Writer truth_csv((out / "truth.csv").string());
  truth_csv.row({"edge_id", "offset_km", "date", "height_m"});
  for (const auto& t : targets) {
    for (Date d = cfg.era_from; d <= cfg.era_to; d = d + 1) {
      truth_csv.row({net.edge(t.location.edge).id,
                     csv::format_fixed(t.location.offset_km, 3), d.to_string(),
                     csv::format_fixed(truth_level(net, truth, t.location, d), 4)});
    }
  }
  truth_csv.close();

  log << "simulated " << obs.size() << " observations over "
      << (cfg.era_to - cfg.era_from + 1) << " days, " << targets.size() << " targets\n";
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string network_dir;
  std::string obs_path;
  std::string scenario = "S-I";
  std::string out_dir;
  double knot_spacing_km = 100.0;
  bool no_screen = false;
  std::string reference_mission = "auto";
  double bin_width_km = 40.0;
  double max_lag_km = 400.0;
  double bin_width_days = 5.0;
  double max_lag_days = 40.0;
  CovarianceParams initial{};
};

inline void cmd_fit(const FitArgs& args, std::ostream& log) {
  namespace fs = std::filesystem;
  const RiverNetwork net = load_network_dir(args.network_dir);
  LoadReport load_report;
  auto obs = load_observations(args.obs_path, net, {}, &load_report);
  for (const auto& r : load_report.rejected) {
    log << args.obs_path << ":" << r.line << ": rejected: " << r.reason << "\n";
  }

  PrepareOptions prep;
  prep.scenario = parse_scenario(args.scenario);
  prep.screen = !args.no_screen;
  prep.reference_mission = args.reference_mission;
  obs = prepare_observations(net, std::move(obs), prep, log);

  FitPipelineConfig cfg;
  cfg.knot_spacing_km = args.knot_spacing_km;
  cfg.bins = BinEdges::uniform(args.bin_width_km, args.max_lag_km, args.bin_width_km,
                               args.max_lag_km, args.bin_width_days, args.max_lag_days);
  cfg.initial = args.initial;
  const auto result = fit_covariance(net, obs, cfg);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  save_params((out / "params.json").string(), result.params);

  nlohmann::json report{{"converged", result.report.converged},
                        {"iterations", result.report.iterations},
                        {"weighted_rss", result.report.weighted_rss},
                        {"message", result.report.message},
                        {"n_obs", result.n_obs},
                        {"rows_rejected_on_load", load_report.rejected.size()},
                        {"trend_basis_dropped", result.trend.dropped.size()}};
  std::ofstream report_out((out / "fit_report.json").string(), std::ios::binary);
  report_out << report.dump(2) << '\n';

  log << "fit " << (result.report.converged ? "converged" : "did not converge") << " ("
      << result.report.iterations << " iterations)\n";
  if (!result.report.message.empty()) log << "fit note: " << result.report.message << "\n";
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string network_dir;
  std::string obs_path;
  std::string params_path;
  std::string targets_path;
  std::string from;
  std::string to;
  int step_days = 5;
  std::string mode = "uk";
  std::string scenario = "S-I";
  std::string out_dir;
  double knot_spacing_km = 100.0;
  bool no_screen = false;
  std::string reference_mission = "auto";
  NeighborhoodSpec neighborhood{};
};

/// Ordinary-kriging baseline: short-repeat virtual-station data only, a
/// constant trend, per-station datums. Heights are reduced by their
/// station mean, the residual field is kriged with a constant basis, and
/// the nearest station's datum (largest spatial covariance to the target)
/// is added back.
inline std::vector<SeriesPoint> ok_baseline_series(const RiverNetwork& net,
                                                   const CovarianceParams& params,
                                                   std::span<const Observation> obs,
                                                   NetworkLocation target, Date from, Date to,
                                                   int step_days, const NeighborhoodSpec& nbhd) {
  std::map<std::pair<int, long long>, std::vector<std::size_t>> stations;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].orbit_class != OrbitClass::short_repeat) continue;
    stations[{obs[i].location.edge, std::llround(obs[i].location.offset_km * 1000)}]
        .push_back(i);
  }
  if (stations.empty()) {
    throw std::runtime_error("ok mode needs short-repeat observations");
  }

  std::vector<Observation> residuals;
  double best_cov = -1;
  double datum = 0;
  for (const auto& [key, members] : stations) {
    double mean = 0;
    for (const auto i : members) mean += obs[i].height_m;
    mean /= static_cast<double>(members.size());
    for (const auto i : members) {
      Observation o = obs[i];
      o.height_m -= mean;
      residuals.push_back(std::move(o));
    }
    const double cov = spatial_cov(net, obs[members.front()].location, target, params);
    if (cov > best_cov) {
      best_cov = cov;
      datum = mean;
    }
  }

  const TrendBasis constant = TrendBasis::constant();
  auto series =
      interpolate_series(net, constant, params, residuals, target, from, to, step_days, nbhd);
  for (auto& p : series) {
    if (p.flag != SeriesFlag::nodata) p.height_m += datum;
  }
  return series;
}

inline void cmd_predict(const PredictArgs& args, std::ostream& log) {
  namespace fs = std::filesystem;
  const RiverNetwork net = load_network_dir(args.network_dir);
  const CovarianceParams params = load_params(args.params_path);
  const auto targets = load_targets(args.targets_path, net);
  const Date from = Date::parse(args.from);
  const Date to = Date::parse(args.to);
  if (args.mode != "uk" && args.mode != "ok") {
    throw std::invalid_argument("mode must be 'uk' or 'ok'");
  }

  LoadReport load_report;
  auto obs = load_observations(args.obs_path, net, {}, &load_report);
  for (const auto& r : load_report.rejected) {
    log << args.obs_path << ":" << r.line << ": rejected: " << r.reason << "\n";
  }
  PrepareOptions prep;
  prep.scenario = parse_scenario(args.scenario);
  prep.screen = !args.no_screen;
  prep.reference_mission = args.reference_mission;
  obs = prepare_observations(net, std::move(obs), prep, log);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  const TrendBasis basis =
      args.mode == "uk" ? TrendBasis::build(net, args.knot_spacing_km) : TrendBasis::constant();

  for (const auto& target : targets) {
    std::vector<SeriesPoint> series;
    if (args.mode == "uk") {
      series = interpolate_series(net, basis, params, obs, target.location, from, to,
                                  args.step_days, args.neighborhood);
    } else {
      series = ok_baseline_series(net, params, obs, target.location, from, to, args.step_days,
                                  args.neighborhood);
    }
    write_series_csv((out / ("series_" + target.id + ".csv")).string(), series);
    std::size_t with_data = 0;
    for (const auto& p : series) with_data += p.flag != SeriesFlag::nodata;
    log << "target " << target.id << ": " << series.size() << " epochs, " << with_data
        << " with data\n";
  }
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
  std::string network_dir;
  std::string gauges_path;
  std::vector<std::string> series;  // source=dir
  std::string out_dir;
  int step_days = 5;
  double flood_threshold_m = 0.5;
  double drought_threshold_m = -0.5;
  SeasonWindow window{};
};

inline void cmd_validate(const ValidateArgs& args, std::ostream& log) {
  namespace fs = std::filesystem;
  const RiverNetwork net = load_network_dir(args.network_dir);
  const auto gauges = load_gauges(args.gauges_path, net);
  if (gauges.empty()) throw std::runtime_error("gauge file holds no series");

  static const std::set<std::string> kAllowedSources{"uk", "ok-baseline", "vs"};
  std::vector<std::pair<std::string, std::string>> sources;  // (name, dir)
  for (const auto& spec : args.series) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("expected --series <source>=<dir>, got '" + spec + "'");
    }
    const std::string name = spec.substr(0, eq);
    if (!kAllowedSources.count(name)) {
      throw std::invalid_argument("unknown series source '" + name +
                                  "' (expected uk, ok-baseline or vs)");
    }
    sources.emplace_back(name, spec.substr(eq + 1));
  }
  if (sources.empty()) throw std::runtime_error("no --series sources given");

  struct Cell {
    std::string gauge;
    int year;
  };
  std::vector<Cell> cells;
  std::map<std::string, Climatology> climatologies;
  std::map<std::string, TimeSeries> gauge_grid;   // gauge series on the epoch grid
  std::map<std::string, TimeSeries> gauge_daily;  // every gauge epoch, for height joins

  for (const auto& g : gauges) {
    climatologies.emplace(g.id, Climatology::from_gauge(g, args.window));
    std::set<int> years;
    for (const auto& d : g.epochs) {
      if (args.window.contains(d)) years.insert(d.year());
    }
    std::map<std::int32_t, double> daily;
    TimeSeries all_days;
    for (std::size_t i = 0; i < g.epochs.size(); ++i) {
      daily[g.epochs[i].serial()] = g.heights_m[i];
      all_days.add(g.epochs[i], g.heights_m[i]);
    }
    gauge_daily.emplace(g.id, std::move(all_days));
    TimeSeries grid;
    for (const int year : years) {
      cells.push_back({g.id, year});
      for (Date d = args.window.start(year); d <= args.window.end(year);
           d = d + args.step_days) {
        const auto it = daily.find(d.serial());
        if (it != daily.end()) grid.add(d, it->second);
      }
    }
    gauge_grid.emplace(g.id, std::move(grid));
  }

  // location,year,source -> index; the gauge itself is a source.
  struct IndexedCell {
    std::optional<double> index;
    EventClass cls = EventClass::normal;
  };
  std::map<std::pair<std::string, int>, std::map<std::string, IndexedCell>> table;
  std::map<std::string, std::map<std::string, TimeSeries>> source_series;

  for (const auto& cell : cells) {
    IndexedCell ic;
    ic.index = flood_index(gauge_grid.at(cell.gauge), climatologies.at(cell.gauge), cell.year,
                           args.window);
    ic.cls = classify_event(*ic.index, args.flood_threshold_m, args.drought_threshold_m);
    table[{cell.gauge, cell.year}]["gauge"] = ic;
  }

  for (const auto& [source, dir] : sources) {
    for (const auto& g : gauges) {
      const fs::path path = fs::path(dir) / ("series_" + g.id + ".csv");
      if (!fs::exists(path)) {
        log << "source " << source << ": no series for gauge " << g.id << " (skipped)\n";
        continue;
      }
      const auto points = read_series_csv(path.string());
      TimeSeries series;
      for (const auto& p : points) {
        if (p.flag == SeriesFlag::nodata || !std::isfinite(p.height_m)) continue;
        series.add(p.date, p.height_m);
      }
      source_series[source][g.id] = series;
      for (const auto& cell : cells) {
        if (cell.gauge != g.id) continue;
        IndexedCell ic;
        try {
          ic.index = flood_index(series, climatologies.at(g.id), cell.year, args.window);
          ic.cls = classify_event(*ic.index, args.flood_threshold_m, args.drought_threshold_m);
        } catch (const std::runtime_error&) {
          ic.index = std::nullopt;  // no epochs in this season
        }
        table[{cell.gauge, cell.year}][source] = ic;
      }
    }
  }

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  csv::Writer report((out / "report.csv").string());
  report.row({"location", "year", "source", "index_m", "class"});
  std::vector<std::string> source_names{"gauge"};
  for (const auto& [source, dir] : sources) source_names.push_back(source);
  for (const auto& [key, by_source] : table) {
    for (const auto& name : source_names) {
      const auto it = by_source.find(name);
      if (it == by_source.end() || !it->second.index) continue;
      report.row({key.first, std::to_string(key.second), name,
                  csv::format_fixed(*it->second.index, 4), to_string(it->second.cls)});
    }
  }
  report.close();

  nlohmann::json summary;
  long total_overlap = 0;
  for (const auto& [source, dir] : sources) {
    std::vector<EventClass> predicted, truth;
    std::vector<double> pred_idx, true_idx;
    for (const auto& [key, by_source] : table) {
      const auto pit = by_source.find(source);
      const auto git = by_source.find("gauge");
      if (pit == by_source.end() || git == by_source.end()) continue;
      if (!pit->second.index || !git->second.index) continue;
      predicted.push_back(pit->second.cls);
      truth.push_back(git->second.cls);
      pred_idx.push_back(*pit->second.index);
      true_idx.push_back(*git->second.index);
    }
    total_overlap += static_cast<long>(predicted.size());

    nlohmann::json js;
    js["n_cells"] = predicted.size();
    for (const EventClass kind : {EventClass::flood, EventClass::drought}) {
      const auto c = contingency(predicted, truth, kind);
      nlohmann::json jk;
      jk["hits"] = c.hits;
      jk["misses"] = c.misses;
      jk["false_alarms"] = c.false_alarms;
      if (const auto pod = c.pod()) jk["pod"] = *pod;
      if (const auto far = c.far()) jk["far"] = *far;
      js[to_string(kind)] = jk;
    }
    if (pred_idx.size() >= 3) {
      TimeSeries a, b;  // abuse exact-join metrics over synthetic cell "dates"
      for (std::size_t i = 0; i < pred_idx.size(); ++i) {
        a.add(Date(static_cast<std::int32_t>(i)), pred_idx[i]);
        b.add(Date(static_cast<std::int32_t>(i)), true_idx[i]);
      }
      const auto m = series_metrics(a, b);
      if (m.r2) js["r2_index"] = *m.r2;
      js["rmse_index"] = m.rmse;
    }

    // Height-series skill against the daily gauge record, averaged over
    // gauges. The daily join keeps the metric defined whatever epoch grid
    // the series was produced on.
    double rmse_sum = 0;
    int rmse_n = 0;
    for (const auto& g : gauges) {
      const auto sit = source_series[source].find(g.id);
      if (sit == source_series[source].end()) continue;
      try {
        const auto m = series_metrics(sit->second, gauge_daily.at(g.id));
        rmse_sum += m.rmse;
        ++rmse_n;
      } catch (const std::runtime_error&) {
        continue;  // too few common epochs for this gauge
      }
    }
    if (rmse_n > 0) js["rmse_series_mean"] = rmse_sum / rmse_n;
    summary[source] = js;
  }
  if (total_overlap == 0) {
    throw std::runtime_error("no overlapping epochs between any source and the gauges");
  }
  std::ofstream summary_out((out / "summary.json").string(), std::ios::binary);
  summary_out << summary.dump(2) << '\n';
  log << "validated " << sources.size() << " sources against " << gauges.size()
      << " gauges over " << cells.size() << " season cells\n";
}

// ---------------------------------------------------------------------------
// entry point

inline int run(const std::vector<std::string>& args, std::ostream& log = std::cerr) {
  CLI::App app{"river water-level interpolation from multi-mission altimetry"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic scene");
  simulate->add_option("--config", sim.config_path, "simulation config JSON")->required();
  simulate->add_option("--seed", sim.seed, "random seed");
  simulate->add_option("--out", sim.out_dir, "output directory")->required();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "estimate covariance parameters");
  fit_cmd->add_option("--network", fit.network_dir, "directory with nodes.csv/edges.csv")
      ->required();
  fit_cmd->add_option("--obs", fit.obs_path, "observations.csv")->required();
  fit_cmd->add_option("--scenario", fit.scenario, "S-I, S-II or S-III");
  fit_cmd->add_option("--out", fit.out_dir, "output directory")->required();
  fit_cmd->add_option("--knot-spacing-km", fit.knot_spacing_km, "trend knot spacing");
  fit_cmd->add_flag("--no-screen", fit.no_screen, "skip outlier screening and alignment");
  fit_cmd->add_option("--reference-mission", fit.reference_mission,
                      "offset reference mission ('auto' picks the densest short-repeat)");
  fit_cmd->add_option("--bin-width-km", fit.bin_width_km, "spatial lag bin width");
  fit_cmd->add_option("--max-lag-km", fit.max_lag_km, "largest spatial lag");
  fit_cmd->add_option("--bin-width-days", fit.bin_width_days, "temporal lag bin width");
  fit_cmd->add_option("--max-lag-days", fit.max_lag_days, "largest temporal lag");

  PredictArgs pred;
  auto* predict = app.add_subcommand("predict", "interpolate water-level series at targets");
  predict->add_option("--network", pred.network_dir, "directory with nodes.csv/edges.csv")
      ->required();
  predict->add_option("--obs", pred.obs_path, "observations.csv")->required();
  predict->add_option("--params", pred.params_path, "covariance parameter JSON")->required();
  predict->add_option("--targets", pred.targets_path, "targets.csv")->required();
  predict->add_option("--from", pred.from, "first epoch (YYYY-MM-DD)")->required();
  predict->add_option("--to", pred.to, "last epoch (YYYY-MM-DD)")->required();
  predict->add_option("--step-days", pred.step_days, "epoch spacing in days");
  predict->add_option("--mode", pred.mode, "uk (universal kriging) or ok (baseline)");
  predict->add_option("--scenario", pred.scenario, "S-I, S-II or S-III");
  predict->add_option("--out", pred.out_dir, "output directory")->required();
  predict->add_option("--knot-spacing-km", pred.knot_spacing_km, "trend knot spacing");
  predict->add_flag("--no-screen", pred.no_screen, "skip outlier screening and alignment");
  predict->add_option("--reference-mission", pred.reference_mission, "offset reference");
  predict->add_option("--max-river-km", pred.neighborhood.max_river_km,
                      "neighborhood along-stream radius");
  predict->add_option("--max-basin-km", pred.neighborhood.max_basin_km,
                      "neighborhood sub-basin radius");
  predict->add_option("--max-time-days", pred.neighborhood.max_time_days,
                      "neighborhood time radius");
  predict->add_option("--max-count", pred.neighborhood.max_count,
                      "neighborhood observation cap");

  ValidateArgs val;
  auto* validate = app.add_subcommand("validate", "score series against gauges");
  validate->add_option("--network", val.network_dir, "directory with nodes.csv/edges.csv")
      ->required();
  validate->add_option("--gauges", val.gauges_path, "gauges.csv")->required();
  validate->add_option("--series", val.series, "source=dir with series_<gauge>.csv files")
      ->required();
  validate->add_option("--out", val.out_dir, "output directory")->required();
  validate->add_option("--step-days", val.step_days, "index epoch spacing in days");
  validate->add_option("--flood-threshold-m", val.flood_threshold_m, "flood index threshold");
  validate->add_option("--drought-threshold-m", val.drought_threshold_m,
                       "drought index threshold");

  try {
    std::vector<const char*> argv;
    argv.push_back("riverfuse");
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    log << "error: " << err.what() << "\n";
    return 1;
  }

  try {
    if (simulate->parsed()) cmd_simulate(sim, log);
    if (fit_cmd->parsed()) cmd_fit(fit, log);
    if (predict->parsed()) cmd_predict(pred, log);
    if (validate->parsed()) cmd_validate(val, log);
  } catch (const std::exception& err) {
    log << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace riverfuse::cli
