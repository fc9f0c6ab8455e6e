#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "riverfuse/network.hpp"

namespace riverfuse {

/// Clamped uniform cubic B-spline basis on one river's chainage interval.
struct RiverBasis {
  int river = -1;
  std::string river_id;
  double chainage_min_km = 0;
  double chainage_max_km = 0;
  int degree = 3;
  std::vector<double> knots;  // full clamped knot vector; empty for a constant basis
  int count = 0;              // number of basis functions
  int offset = 0;             // index of this river's first function in the global basis
};

/// Spatial trend basis: an independent B-spline family per river, indexed
/// globally in the order rivers first appear in the edge list. Rivers whose
/// chainage extent is shorter than the knot spacing fall back to a single
/// constant function. All basis functions are non-negative and each river's
/// family sums to one at every chainage (so a constant water level is
/// representable exactly).
class TrendBasis {
 public:
  /// One constant function over the whole network (the ordinary-kriging
  /// trend).
  static TrendBasis constant() {
    TrendBasis basis;
    basis.global_constant_ = true;
    basis.size_ = 1;
    return basis;
  }

  static TrendBasis build(const RiverNetwork& net, double knot_spacing_km = 100.0) {
    if (!(knot_spacing_km > 0)) {
      throw std::invalid_argument("knot spacing must be positive");
    }
    TrendBasis basis;
    basis.spacing_km_ = knot_spacing_km;
    basis.rivers_.resize(net.river_count());
    for (auto& rb : basis.rivers_) {
      rb.chainage_min_km = std::numeric_limits<double>::infinity();
      rb.chainage_max_km = -std::numeric_limits<double>::infinity();
    }
    for (int e = 0; e < net.edge_count(); ++e) {
      auto& rb = basis.rivers_[net.edge_river(e)];
      const double lo = net.chainage_km(NetworkLocation{e, net.edge(e).length_km});
      const double hi = net.chainage_km(NetworkLocation{e, 0.0});
      rb.chainage_min_km = std::min(rb.chainage_min_km, lo);
      rb.chainage_max_km = std::max(rb.chainage_max_km, hi);
    }
    int offset = 0;
    for (int r = 0; r < net.river_count(); ++r) {
      auto& rb = basis.rivers_[r];
      rb.river = r;
      rb.river_id = net.river_id(r);
      rb.offset = offset;
      const double extent = rb.chainage_max_km - rb.chainage_min_km;
      if (extent < knot_spacing_km) {
        rb.count = 1;  // constant fallback for short rivers
        rb.knots.clear();
      } else {
        const int spans = std::max(1, static_cast<int>(std::lround(extent / knot_spacing_km)));
        rb.count = spans + rb.degree;
        rb.knots = clamped_uniform_knots(rb.chainage_min_km, rb.chainage_max_km, spans, rb.degree);
      }
      offset += rb.count;
    }
    basis.size_ = offset;
    return basis;
  }

  int size() const { return size_; }

  bool is_constant() const { return global_constant_; }

  const std::vector<RiverBasis>& rivers() const { return rivers_; }

  /// Dense basis vector at a location: zero outside the location's river
  /// block, a partition of unity inside it.
  Eigen::VectorXd eval(const RiverNetwork& net, NetworkLocation loc) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(size_);
    if (global_constant_) {
      f[0] = 1.0;
      return f;
    }
    const auto& rb = rivers_[net.edge_river(loc.edge)];
    if (rb.count == 1) {
      f[rb.offset] = 1.0;
      return f;
    }
    const double x = std::clamp(net.chainage_km(loc), rb.chainage_min_km, rb.chainage_max_km);
    double values[4];
    const int first = spline_values(rb, x, values);
    for (int k = 0; k <= rb.degree; ++k) f[rb.offset + first + k] = values[k];
    return f;
  }

  /// Design matrix for a set of observations plus the basis vector at a
  /// prediction target.
  template <typename ObsRange>
  Eigen::MatrixXd design_matrix(const RiverNetwork& net, const ObsRange& obs) const {
    Eigen::MatrixXd F(static_cast<Eigen::Index>(obs.size()), size_);
    Eigen::Index i = 0;
    for (const auto& o : obs) F.row(i++) = eval(net, o.location).transpose();
    return F;
  }

 private:
  static std::vector<double> clamped_uniform_knots(double lo, double hi, int spans, int degree) {
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(spans + 1 + 2 * degree));
    for (int i = 0; i < degree; ++i) knots.push_back(lo);
    for (int i = 0; i <= spans; ++i) {
      knots.push_back(lo + (hi - lo) * static_cast<double>(i) / spans);
    }
    for (int i = 0; i < degree; ++i) knots.push_back(hi);
    return knots;
  }

  /// Cox-de Boor evaluation of the degree+1 non-zero functions at x.
  /// Returns the local index of the first non-zero function.
  static int spline_values(const RiverBasis& rb, double x, double* values) {
    const int d = rb.degree;
    const auto& t = rb.knots;
    // Find the knot span: largest k with t[k] <= x, clamped to a valid span.
    const int last_span = static_cast<int>(t.size()) - d - 2;
    int k = static_cast<int>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
    k = std::clamp(k, d, last_span);

    double left[4], right[4];
    values[0] = 1.0;
    for (int j = 1; j <= d; ++j) {
      left[j] = x - t[k + 1 - j];
      right[j] = t[k + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double temp = values[r] / (right[r + 1] + left[j - r]);
        values[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      values[j] = saved;
    }
    return k - d;
  }

  std::vector<RiverBasis> rivers_;
  double spacing_km_ = 100.0;
  int size_ = 0;
  bool global_constant_ = false;
};

}  // namespace riverfuse
