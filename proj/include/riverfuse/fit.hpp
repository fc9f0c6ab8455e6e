#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "riverfuse/covariance.hpp"
#include "riverfuse/kriging.hpp"
#include "riverfuse/network.hpp"
#include "riverfuse/observation.hpp"
#include "riverfuse/trend.hpp"

namespace riverfuse {

/// Bin boundaries for the empirical covariance. A lag falls in bin i when
/// edges[i] <= lag < edges[i+1]; lags beyond the last edge are discarded.
struct BinEdges {
  std::vector<double> river_km;
  std::vector<double> basin_km;
  std::vector<double> time_days;

  static BinEdges defaults() {
    BinEdges e;
    for (int i = 0; i <= 10; ++i) e.river_km.push_back(40.0 * i);
    for (int i = 0; i <= 10; ++i) e.basin_km.push_back(40.0 * i);
    for (int i = 0; i <= 8; ++i) e.time_days.push_back(5.0 * i);
    return e;
  }

  static BinEdges uniform(double river_width_km, double river_max_km, double basin_width_km,
                          double basin_max_km, double time_width_days, double time_max_days) {
    const auto make = [](double width, double max) {
      if (!(width > 0) || !(max > width)) {
        throw std::invalid_argument("bin width must be positive and below the maximum lag");
      }
      std::vector<double> edges;
      for (double x = 0;; x += width) {
        edges.push_back(x);
        if (x >= max) break;
      }
      return edges;
    };
    BinEdges e;
    e.river_km = make(river_width_km, river_max_km);
    e.basin_km = make(basin_width_km, basin_max_km);
    e.time_days = make(time_width_days, time_max_days);
    return e;
  }
};

struct CovBin {
  long count = 0;
  double sum_product = 0;
  double sum_weight = 0;    // tail-up weights, connected pairs only
  double sum_river_km = 0;  // connected pairs only
  double sum_basin_km = 0;
  double sum_dt_days = 0;

  double mean_product() const { return sum_product / static_cast<double>(count); }
  double mean_weight() const { return sum_weight / static_cast<double>(count); }
  double mean_river_km() const { return sum_river_km / static_cast<double>(count); }
  double mean_basin_km() const { return sum_basin_km / static_cast<double>(count); }
  double mean_dt_days() const { return sum_dt_days / static_cast<double>(count); }
};

/// Binned empirical covariance of detrended residuals: products of
/// residual pairs averaged per (spatial lag, time lag) cell, separately
/// for flow-connected pairs (binned by along-stream distance) and
/// unconnected pairs (binned by sub-basin distance).
struct EmpiricalCovariance {
  BinEdges edges;
  std::vector<CovBin> connected;    // (river bins) x (time bins), row-major
  std::vector<CovBin> unconnected;  // (basin bins) x (time bins), row-major

  int river_bins() const { return static_cast<int>(edges.river_km.size()) - 1; }
  int basin_bins() const { return static_cast<int>(edges.basin_km.size()) - 1; }
  int time_bins() const { return static_cast<int>(edges.time_days.size()) - 1; }

  const CovBin& connected_bin(int is, int it) const {
    return connected[static_cast<std::size_t>(is) * time_bins() + it];
  }
  const CovBin& unconnected_bin(int is, int it) const {
    return unconnected[static_cast<std::size_t>(is) * time_bins() + it];
  }

  long non_empty_bins() const {
    long n = 0;
    for (const auto& b : connected) n += b.count > 0;
    for (const auto& b : unconnected) n += b.count > 0;
    return n;
  }
};

namespace detail {

inline int find_bin(const std::vector<double>& edges, double value) {
  if (value < edges.front() || value >= edges.back()) return -1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), value);
  return static_cast<int>(it - edges.begin()) - 1;
}

}  // namespace detail

/// Accumulates the empirical covariance over all distinct pairs of
/// detrended observations. Pairs beyond the last spatial or temporal edge
/// are ignored.
inline EmpiricalCovariance empirical_covariance(const RiverNetwork& net,
                                                std::span<const Observation> residuals,
                                                const BinEdges& edges = BinEdges::defaults()) {
  EmpiricalCovariance emp;
  emp.edges = edges;
  emp.connected.assign(static_cast<std::size_t>(emp.river_bins()) * emp.time_bins(), CovBin{});
  emp.unconnected.assign(static_cast<std::size_t>(emp.basin_bins()) * emp.time_bins(), CovBin{});

  const std::size_t n = residuals.size();
  // Precomputed per-observation quantities keep the pair loop O(1) per pair.
  std::vector<double> chain(n);
  for (std::size_t i = 0; i < n; ++i) chain[i] = net.chainage_km(residuals[i].location);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dt = std::abs(static_cast<double>(residuals[i].epoch - residuals[j].epoch));
      const int it = detail::find_bin(edges.time_days, dt);
      if (it < 0) continue;
      const double product = residuals[i].height_m * residuals[j].height_m;
      const double db = net.basin_distance(residuals[i].location, residuals[j].location);
      if (const auto rd = net.river_distance(residuals[i].location, residuals[j].location)) {
        const int is = detail::find_bin(edges.river_km, *rd);
        if (is < 0) continue;
        auto& bin = emp.connected[static_cast<std::size_t>(is) * emp.time_bins() + it];
        ++bin.count;
        bin.sum_product += product;
        bin.sum_weight += tail_up_weight(net, residuals[i].location, residuals[j].location);
        bin.sum_river_km += *rd;
        bin.sum_basin_km += db;
        bin.sum_dt_days += dt;
      } else {
        const int is = detail::find_bin(edges.basin_km, db);
        if (is < 0) continue;
        auto& bin = emp.unconnected[static_cast<std::size_t>(is) * emp.time_bins() + it];
        ++bin.count;
        bin.sum_product += product;
        bin.sum_basin_km += db;
        bin.sum_dt_days += dt;
      }
    }
  }
  return emp;
}

struct FitReport {
  bool converged = false;
  int iterations = 0;
  double weighted_rss = 0;
  std::string message;
};

struct FitResult {
  CovarianceParams params;
  FitReport report;
};

namespace detail {

struct FitRow {
  bool connected = false;
  double weight = 0;  // pair count
  double value = 0;   // mean residual product
  double w_bar = 0;   // mean tail-up weight (connected rows)
  double d_river = 0;
  double d_basin = 0;
  double d_time = 0;
};

inline std::vector<FitRow> fit_rows(const EmpiricalCovariance& emp) {
  std::vector<FitRow> rows;
  for (int is = 0; is < emp.river_bins(); ++is) {
    for (int it = 0; it < emp.time_bins(); ++it) {
      const auto& b = emp.connected_bin(is, it);
      if (b.count == 0) continue;
      rows.push_back({true, static_cast<double>(b.count), b.mean_product(), b.mean_weight(),
                      b.mean_river_km(), b.mean_basin_km(), b.mean_dt_days()});
    }
  }
  for (int is = 0; is < emp.basin_bins(); ++is) {
    for (int it = 0; it < emp.time_bins(); ++it) {
      const auto& b = emp.unconnected_bin(is, it);
      if (b.count == 0) continue;
      rows.push_back({false, static_cast<double>(b.count), b.mean_product(), 0.0, 0.0,
                      b.mean_basin_km(), b.mean_dt_days()});
    }
  }
  return rows;
}

/// Weighted least-squares for the two component variances given the
/// ranges, with non-negativity enforced by testing the boundary solutions.
/// This inner solve makes the outer search a two-parameter-free problem
/// and guarantees the fitted variances scale linearly with the bin values.
struct VarianceSolve {
  double sigma2_river = 0;
  double sigma2_basin = 0;
  double rss = 0;
};

inline VarianceSolve solve_variances(const std::vector<FitRow>& rows, double rho_river,
                                     double rho_basin, double tau) {
  double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0, vv = 0;
  for (const auto& row : rows) {
    const double t = std::exp(-row.d_time / tau);
    const double g1 = row.connected ? row.w_bar * std::exp(-row.d_river / rho_river) * t : 0.0;
    const double g2 = std::exp(-row.d_basin / rho_basin) * t;
    s11 += row.weight * g1 * g1;
    s12 += row.weight * g1 * g2;
    s22 += row.weight * g2 * g2;
    r1 += row.weight * g1 * row.value;
    r2 += row.weight * g2 * row.value;
    vv += row.weight * row.value * row.value;
  }

  const auto rss_of = [&](double a, double b) {
    return vv - 2 * a * r1 - 2 * b * r2 + a * a * s11 + 2 * a * b * s12 + b * b * s22;
  };

  VarianceSolve best{0, 0, rss_of(0, 0)};
  const auto consider = [&](double a, double b) {
    if (a < 0 || b < 0) return;
    const double rss = rss_of(a, b);
    if (rss < best.rss) best = {a, b, rss};
  };

  const double det = s11 * s22 - s12 * s12;
  if (det > 1e-14 * std::max(1.0, s11 * s22)) {
    consider((r1 * s22 - r2 * s12) / det, (r2 * s11 - r1 * s12) / det);
  }
  if (s11 > 0) consider(r1 / s11, 0.0);
  if (s22 > 0) consider(0.0, r2 / s22);
  return best;
}

/// Nelder-Mead on a small box-free objective; comparison-based, so the
/// minimizer location is invariant under scaling of the objective.
template <typename F>
inline std::pair<std::vector<double>, int> nelder_mead(F objective, std::vector<double> start,
                                                       double step, int max_iter, double tol) {
  const std::size_t dim = start.size();
  struct Vertex {
    std::vector<double> x;
    double value;
  };
  std::vector<Vertex> simplex;
  simplex.push_back({start, objective(start)});
  for (std::size_t d = 0; d < dim; ++d) {
    auto x = start;
    x[d] += step;
    simplex.push_back({x, objective(x)});
  }
  const auto by_value = [](const Vertex& a, const Vertex& b) { return a.value < b.value; };

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    std::sort(simplex.begin(), simplex.end(), by_value);
    const double spread = std::abs(simplex.back().value - simplex.front().value);
    if (spread <= tol * (std::abs(simplex.front().value) + tol)) break;

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t v = 0; v + 1 < simplex.size(); ++v) {
      for (std::size_t d = 0; d < dim; ++d) centroid[d] += simplex[v].x[d];
    }
    for (auto& c : centroid) c /= static_cast<double>(dim);

    const auto blend = [&](double alpha) {
      std::vector<double> x(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        x[d] = centroid[d] + alpha * (simplex.back().x[d] - centroid[d]);
      }
      return x;
    };

    const auto reflected = blend(-1.0);
    const double fr = objective(reflected);
    if (fr < simplex.front().value) {
      const auto expanded = blend(-2.0);
      const double fe = objective(expanded);
      simplex.back() = fe < fr ? Vertex{expanded, fe} : Vertex{reflected, fr};
      continue;
    }
    if (fr < simplex[simplex.size() - 2].value) {
      simplex.back() = {reflected, fr};
      continue;
    }
    const auto contracted = blend(0.5);
    const double fc = objective(contracted);
    if (fc < simplex.back().value) {
      simplex.back() = {contracted, fc};
      continue;
    }
    for (std::size_t v = 1; v < simplex.size(); ++v) {
      for (std::size_t d = 0; d < dim; ++d) {
        simplex[v].x[d] = 0.5 * (simplex[v].x[d] + simplex.front().x[d]);
      }
      simplex[v].value = objective(simplex[v].x);
    }
  }
  std::sort(simplex.begin(), simplex.end(), by_value);
  return {simplex.front().x, iter};
}

}  // namespace detail

/// Fits the covariance parameters to a binned empirical covariance by
/// pair-count-weighted least squares. The ranges and the temporal scale
/// are searched on a log grid and refined with Nelder-Mead; the two
/// component variances are profiled out by an exact non-negative linear
/// solve at every candidate. Parameters that the data cannot identify
/// (e.g. the along-stream range when no flow-connected bins exist) are
/// pinned to their initial values and reported in the message. The nugget
/// and tributary factors pass through from `initial` untouched.
inline FitResult fit_params(const EmpiricalCovariance& emp, const CovarianceParams& initial) {
  initial.validate();
  const auto rows = detail::fit_rows(emp);
  if (rows.size() < 6) {
    throw std::runtime_error("empirical covariance under-determined: only " +
                             std::to_string(rows.size()) + " non-empty bins (need 6)");
  }

  double max_dr = 0, max_db = 0, max_dt = 0;
  bool any_connected = false;
  for (const auto& row : rows) {
    if (row.connected) {
      any_connected = true;
      max_dr = std::max(max_dr, row.d_river);
    }
    max_db = std::max(max_db, row.d_basin);
    max_dt = std::max(max_dt, row.d_time);
  }

  // A range parameter is searchable only when the corresponding lags vary;
  // otherwise it is pinned to its initial value.
  const bool fit_rho_river = any_connected && max_dr > 0;
  const bool fit_rho_basin = max_db > 0;
  const bool fit_tau = max_dt > 0;

  struct Dim {
    int which;  // 0 = rho_river, 1 = rho_basin, 2 = tau
    double lo, hi;
  };
  std::vector<Dim> dims;
  if (fit_rho_river) dims.push_back({0, 0.05 * max_dr, 10.0 * max_dr});
  if (fit_rho_basin) dims.push_back({1, 0.05 * max_db, 10.0 * max_db});
  if (fit_tau) dims.push_back({2, 0.05 * max_dt, 10.0 * max_dt});

  const auto unpack = [&](const std::vector<double>& logx) {
    std::array<double, 3> scales{initial.rho_river, initial.rho_basin, initial.tau};
    for (std::size_t d = 0; d < dims.size(); ++d) scales[dims[d].which] = std::exp(logx[d]);
    return scales;
  };
  const auto objective = [&](const std::vector<double>& logx) {
    const auto s = unpack(logx);
    return detail::solve_variances(rows, s[0], s[1], s[2]).rss;
  };

  FitResult result;
  result.params = initial;
  result.report.message = "";

  std::vector<double> best_log(dims.size(), 0.0);
  if (!dims.empty()) {
    // Coarse log-spaced grid to find a basin of attraction.
    constexpr int kGridPoints = 10;
    std::vector<std::vector<double>> grids(dims.size());
    for (std::size_t d = 0; d < dims.size(); ++d) {
      const double lo = std::log(dims[d].lo);
      const double hi = std::log(dims[d].hi);
      for (int i = 0; i < kGridPoints; ++i) {
        grids[d].push_back(lo + (hi - lo) * i / (kGridPoints - 1));
      }
    }
    double best_rss = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(dims.size(), 0);
    while (true) {
      std::vector<double> logx(dims.size());
      for (std::size_t d = 0; d < dims.size(); ++d) logx[d] = grids[d][idx[d]];
      const double rss = objective(logx);
      if (rss < best_rss) {
        best_rss = rss;
        best_log = logx;
      }
      std::size_t d = 0;
      for (; d < dims.size(); ++d) {
        if (++idx[d] < grids[d].size()) break;
        idx[d] = 0;
      }
      if (d == dims.size()) break;
    }

    auto [refined, iterations] =
        detail::nelder_mead(objective, best_log, 0.25, 400, 1e-12);
    best_log = refined;
    result.report.iterations = iterations;
    result.report.converged = iterations < 400;
    if (!result.report.converged) result.report.message = "search did not converge; ";

    // The simplex is free to wander past the search interval (a flat
    // empirical covariance pushes a range toward infinity). Reported values
    // stay inside the interval; the pin flag records that a bound was hit.
    for (std::size_t d = 0; d < dims.size(); ++d) {
      best_log[d] = std::clamp(best_log[d], std::log(dims[d].lo), std::log(dims[d].hi));
      const double value = std::exp(best_log[d]);
      if (value <= dims[d].lo * 1.0001 || value >= dims[d].hi * 0.9999) {
        result.report.converged = false;
        result.report.message += "range parameter pinned at search bound; ";
      }
    }
  } else {
    result.report.converged = true;
  }

  const auto scales = unpack(best_log);
  const auto vs = detail::solve_variances(rows, scales[0], scales[1], scales[2]);
  result.params.sigma2_river = any_connected ? vs.sigma2_river : initial.sigma2_river;
  result.params.sigma2_basin = vs.sigma2_basin;
  if (fit_rho_river) result.params.rho_river = scales[0];
  if (fit_rho_basin) result.params.rho_basin = scales[1];
  if (fit_tau) result.params.tau = scales[2];
  result.report.weighted_rss = vs.rss;

  if (!any_connected) {
    result.report.message += "no flow-connected bins, river component not identified; ";
  }
  if (!fit_rho_basin) {
    result.report.message += "no sub-basin lag variation, rho_basin pinned to initial; ";
  }
  return result;
}

struct FitPipelineConfig {
  double knot_spacing_km = 100.0;
  BinEdges bins = BinEdges::defaults();
  CovarianceParams initial{};
  double nugget_floor = 1e-4;  // keeps the data covariance invertible
  bool gls_refine = true;
  std::size_t gls_max_obs = 3000;  // dense-covariance refit is quadratic in memory
};

struct FitPipelineResult {
  CovarianceParams params;
  FitReport report;
  TrendFit trend;
  std::size_t n_obs = 0;
};

namespace detail {

inline double estimate_nugget(const RiverNetwork& net, std::span<const Observation> residuals,
                              const CovarianceParams& fitted, double floor) {
  double sum = 0, sum2 = 0, factor = 0;
  for (const auto& o : residuals) {
    sum += o.height_m;
    sum2 += o.height_m * o.height_m;
    factor += trib_class_factor(net.edge(o.location.edge).trib_class, fitted) * o.quality_factor;
  }
  const double n = static_cast<double>(residuals.size());
  const double var = sum2 / n - (sum / n) * (sum / n);
  const double mean_factor = std::max(1e-12, factor / n);
  const double excess = (var - fitted.sigma2_river - fitted.sigma2_basin) / mean_factor;
  return std::max(floor, excess);
}

}  // namespace detail

/// End-to-end covariance estimation: preliminary least-squares trend fit,
/// empirical covariance of the residuals, parameter fit, and one optional
/// generalized-least-squares refinement of the trend with the fitted
/// covariance. The nugget is estimated from the residual variance in
/// excess of the fitted process variance.
inline FitPipelineResult fit_covariance(const RiverNetwork& net,
                                        std::span<const Observation> obs,
                                        const FitPipelineConfig& cfg = {}) {
  if (obs.size() < 8) {
    throw std::runtime_error("too few observations to estimate a covariance (" +
                             std::to_string(obs.size()) + ")");
  }
  const TrendBasis basis = TrendBasis::build(net, cfg.knot_spacing_km);

  FitPipelineResult out;
  out.n_obs = obs.size();
  out.trend = ols_trend(net, basis, obs);
  auto residuals = detrend(net, basis, out.trend.beta, obs);
  auto emp = empirical_covariance(net, residuals, cfg.bins);
  auto fit = fit_params(emp, cfg.initial);
  fit.params.nugget = detail::estimate_nugget(net, residuals, fit.params, cfg.nugget_floor);

  if (cfg.gls_refine && obs.size() <= cfg.gls_max_obs) {
    out.trend = gls_trend(net, basis, obs, fit.params);
    residuals = detrend(net, basis, out.trend.beta, obs);
    emp = empirical_covariance(net, residuals, cfg.bins);
    CovarianceParams initial = cfg.initial;
    initial.nugget = fit.params.nugget;
    fit = fit_params(emp, initial);
    fit.params.nugget = detail::estimate_nugget(net, residuals, fit.params, cfg.nugget_floor);
  }

  out.params = fit.params;
  out.report = fit.report;
  return out;
}

}  // namespace riverfuse
