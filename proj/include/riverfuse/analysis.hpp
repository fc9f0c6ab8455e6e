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

#include "riverfuse/date.hpp"
#include "riverfuse/observation.hpp"

namespace riverfuse {

/// Seasonal analysis window given as month/day bounds, inclusive, applied
/// year by year. The default covers the flood season June 1 to November 30.
struct SeasonWindow {
  unsigned from_month = 6;
  unsigned from_day = 1;
  unsigned to_month = 11;
  unsigned to_day = 30;

  bool contains(unsigned month, unsigned day) const {
    const unsigned md = month * 100 + day;
    return md >= from_month * 100 + from_day && md <= to_month * 100 + to_day;
  }
  bool contains(Date d) const { return contains(d.month(), d.day()); }

  Date start(int year) const { return Date(year, from_month, from_day); }
  Date end(int year) const { return Date(year, to_month, to_day); }
};

/// Sparse time series keyed by exact dates; missing epochs are simply
/// absent.
struct TimeSeries {
  std::vector<Date> epochs;
  std::vector<double> values;

  void add(Date d, double v) {
    epochs.push_back(d);
    values.push_back(v);
  }
  std::size_t size() const { return epochs.size(); }
};

/// Multi-year mean water level per day-of-year, keyed by (month, day) so
/// leap years align on the calendar rather than on the ordinal day.
class Climatology {
 public:
  /// Builds the climatology from a gauge series over the window. Every
  /// (month, day) the gauge covers inside the window must be covered in at
  /// least `min_years` distinct years.
  static Climatology from_gauge(const GaugeSeries& gauge, const SeasonWindow& window = {},
                                int min_years = 2) {
    std::map<std::pair<unsigned, unsigned>, std::pair<double, std::set<int>>> acc;
    for (std::size_t i = 0; i < gauge.epochs.size(); ++i) {
      const Date d = gauge.epochs[i];
      if (!window.contains(d)) continue;
      auto& [sum, years] = acc[{d.month(), d.day()}];
      sum += gauge.heights_m[i];
      years.insert(d.year());
    }
    if (acc.empty()) {
      throw std::runtime_error("gauge '" + gauge.id + "' has no data in the season window");
    }
    Climatology clim;
    for (const auto& [key, entry] : acc) {
      const auto& [sum, years] = entry;
      if (static_cast<int>(years.size()) < min_years) {
        throw std::runtime_error(
            "insufficient years for climatology at " + std::to_string(key.first) + "-" +
            std::to_string(key.second) + " (gauge '" + gauge.id + "': " +
            std::to_string(years.size()) + " of " + std::to_string(min_years) + ")");
      }
      clim.mean_[key] = sum / static_cast<double>(years.size());
    }
    return clim;
  }

  std::optional<double> value(unsigned month, unsigned day) const {
    const auto it = mean_.find({month, day});
    if (it == mean_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<double> value(Date d) const { return value(d.month(), d.day()); }

 private:
  std::map<std::pair<unsigned, unsigned>, double> mean_;
};

/// Seasonal anomaly index for one year: the mean over in-window epochs of
/// (level minus climatology at the same day-of-year). Epochs without a
/// climatology value are skipped; an empty average is an error.
inline double flood_index(const TimeSeries& series, const Climatology& climatology, int year,
                          const SeasonWindow& window = {}) {
  double sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Date d = series.epochs[i];
    if (d.year() != year || !window.contains(d)) continue;
    if (!std::isfinite(series.values[i])) continue;
    const auto clim = climatology.value(d);
    if (!clim) continue;
    sum += series.values[i] - *clim;
    ++n;
  }
  if (n == 0) {
    throw std::runtime_error("no epochs available for the " + std::to_string(year) +
                             " season index");
  }
  return sum / n;
}

enum class EventClass { flood, drought, normal };

inline std::string to_string(EventClass c) {
  switch (c) {
    case EventClass::flood: return "flood";
    case EventClass::drought: return "drought";
    case EventClass::normal: return "normal";
  }
  throw std::logic_error("unreachable event class");
}

/// Strict thresholds: an index above flood_threshold is a flood, below
/// drought_threshold a drought; values equal to a threshold are normal.
inline EventClass classify_event(double index_m, double flood_threshold_m = 0.5,
                                 double drought_threshold_m = -0.5) {
  if (index_m > flood_threshold_m) return EventClass::flood;
  if (index_m < drought_threshold_m) return EventClass::drought;
  return EventClass::normal;
}

struct Contingency {
  int hits = 0;
  int misses = 0;
  int false_alarms = 0;
  int correct_negatives = 0;

  std::optional<double> pod() const {
    const int denom = hits + misses;
    if (denom == 0) return std::nullopt;
    return static_cast<double>(hits) / denom;
  }
  std::optional<double> far() const {
    const int denom = hits + false_alarms;
    if (denom == 0) return std::nullopt;
    return static_cast<double>(false_alarms) / denom;
  }
};

/// Contingency counts of predicted against true event classes for one
/// event kind, over aligned cells.
inline Contingency contingency(std::span<const EventClass> predicted,
                               std::span<const EventClass> truth, EventClass kind) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("prediction/truth lists differ in length");
  }
  Contingency c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == kind;
    const bool t = truth[i] == kind;
    if (p && t) ++c.hits;
    else if (!p && t) ++c.misses;
    else if (p && !t) ++c.false_alarms;
    else ++c.correct_negatives;
  }
  return c;
}

struct SeriesMetrics {
  double rmse = 0;
  std::optional<double> r2;   // undefined when either series has zero variance
  std::optional<double> nse;  // undefined when the reference has zero variance
  int n = 0;
};

/// Error metrics between a candidate series and a reference over their
/// common epochs (exact date matches). Requires at least three common
/// epochs.
inline SeriesMetrics series_metrics(const TimeSeries& candidate, const TimeSeries& reference) {
  std::map<std::int32_t, double> ref;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (std::isfinite(reference.values[i])) {
      ref[reference.epochs[i].serial()] = reference.values[i];
    }
  }
  std::vector<double> x, y;  // candidate, reference
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (!std::isfinite(candidate.values[i])) continue;
    const auto it = ref.find(candidate.epochs[i].serial());
    if (it == ref.end()) continue;
    x.push_back(candidate.values[i]);
    y.push_back(it->second);
  }
  const int n = static_cast<int>(x.size());
  if (n < 3) {
    throw std::runtime_error("series share too few epochs for metrics (" + std::to_string(n) +
                             ", need 3)");
  }

  double sx = 0, sy = 0;
  for (int i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sse = 0, sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sse += (x[i] - y[i]) * (x[i] - y[i]);
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }

  SeriesMetrics m;
  m.n = n;
  m.rmse = std::sqrt(sse / n);
  if (sxx > 0 && syy > 0) m.r2 = (sxy * sxy) / (sxx * syy);
  if (syy > 0) m.nse = 1.0 - sse / syy;
  return m;
}

}  // namespace riverfuse
