#pragma once

#include <Eigen/Core>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "riverfuse/date.hpp"
#include "riverfuse/network.hpp"
#include "riverfuse/observation.hpp"

namespace riverfuse {

/// Parameters of the separable space-time covariance model. The spatial
/// part is the sum of a flow-connected along-stream component and a
/// sub-basin proximity component; the temporal part is a shared
/// exponential decay. `nugget` is the measurement-error variance floor;
/// the tributary factors inflate it for observations on tributaries.
struct CovarianceParams {
  double sigma2_river = 1.0;
  double rho_river = 100.0;
  double sigma2_basin = 1.0;
  double rho_basin = 100.0;
  double tau = 15.0;
  double nugget = 0.0;
  double trib_factor_major = 2.0;
  double trib_factor_minor = 4.0;

  void validate() const {
    const auto positive = [](double v, const char* name) {
      if (!(v > 0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string(name) + " must be positive");
      }
    };
    const auto non_negative = [](double v, const char* name) {
      if (!(v >= 0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string(name) + " must be non-negative");
      }
    };
    non_negative(sigma2_river, "sigma2_river");
    positive(rho_river, "rho_river");
    non_negative(sigma2_basin, "sigma2_basin");
    positive(rho_basin, "rho_basin");
    positive(tau, "tau");
    non_negative(nugget, "nugget");
    if (!(trib_factor_major >= 1) || !(trib_factor_minor >= 1)) {
      throw std::invalid_argument("tributary factors must be >= 1");
    }
  }
};

/// Exponential temporal correlation, exp(-|dt|/tau).
inline double temporal_cov(double dt_days, const CovarianceParams& p) {
  return std::exp(-std::abs(dt_days) / p.tau);
}

/// Tail-up flow weight sqrt(W_upstream / W_downstream) for a connected
/// pair. Additive catchment weights at confluences make the resulting
/// kernel a valid (positive semi-definite) moving-average covariance.
inline double tail_up_weight(const RiverNetwork& net, NetworkLocation a, NetworkLocation b) {
  double wa = net.catchment_weight(a);
  double wb = net.catchment_weight(b);
  double up = std::min(wa, wb);
  double down = std::max(wa, wb);
  if (a.edge != b.edge) {
    // The downstream location is the one nearer the mouth.
    const bool a_down = net.chainage_km(a) < net.chainage_km(b);
    up = a_down ? wb : wa;
    down = a_down ? wa : wb;
  }
  if (!(down > 0)) return 1.0;  // both weights zero: degenerate headwater pair
  return std::sqrt(up / down);
}

/// Spatial covariance: flow-connected component plus sub-basin component.
/// The flow component vanishes for unconnected (or dam-severed) pairs.
inline double spatial_cov(const RiverNetwork& net, NetworkLocation a, NetworkLocation b,
                          const CovarianceParams& p) {
  double flow = 0.0;
  if (const auto d = net.river_distance(a, b)) {
    flow = p.sigma2_river * tail_up_weight(net, a, b) * std::exp(-*d / p.rho_river);
  }
  const double db = net.basin_distance(a, b);
  const double basin = p.sigma2_basin * std::exp(-db / p.rho_basin);
  return flow + basin;
}

/// Process covariance between two space-time points (no nugget).
inline double st_cov_process(const RiverNetwork& net, NetworkLocation a, Date ta,
                             NetworkLocation b, Date tb, const CovarianceParams& p) {
  const double spatial = spatial_cov(net, a, b, p);
  if (spatial == 0.0) return 0.0;
  return spatial * temporal_cov(static_cast<double>(ta - tb), p);
}

/// Full covariance: process covariance plus the nugget at exact space-time
/// coincidence.
inline double st_cov(const RiverNetwork& net, NetworkLocation a, Date ta, NetworkLocation b,
                     Date tb, const CovarianceParams& p) {
  double c = st_cov_process(net, a, ta, b, tb, p);
  if (a == b && ta == tb) c += p.nugget;
  return c;
}

inline double trib_class_factor(TribClass c, const CovarianceParams& p) {
  switch (c) {
    case TribClass::main_stem: return 1.0;
    case TribClass::major_tributary: return p.trib_factor_major;
    case TribClass::minor_tributary: return p.trib_factor_minor;
  }
  throw std::logic_error("unreachable tributary class");
}

/// Per-observation measurement-error variance: the nugget scaled by the
/// tributary class of the observation's edge and its quality factor.
inline double error_variance(const RiverNetwork& net, const Observation& obs,
                             const CovarianceParams& p) {
  const TribClass c = net.edge(obs.location.edge).trib_class;
  return p.nugget * trib_class_factor(c, p) * obs.quality_factor;
}

struct CovarianceMatrices {
  Eigen::MatrixXd sigma_u;          // process covariance between observations
  Eigen::VectorXd sigma_alti_diag;  // diagonal measurement-error covariance
};

/// Dense covariance blocks for a set of observations. sigma_u holds the
/// process covariance only; all measurement error (nugget, tributary
/// down-weighting, per-observation quality) lives in sigma_alti_diag, so
/// the total data covariance is sigma_u + diag(sigma_alti_diag).
inline CovarianceMatrices build_matrices(const RiverNetwork& net,
                                         std::span<const Observation> obs,
                                         const CovarianceParams& p) {
  const Eigen::Index n = static_cast<Eigen::Index>(obs.size());
  CovarianceMatrices m;
  m.sigma_u.resize(n, n);
  m.sigma_alti_diag.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.sigma_alti_diag[i] = error_variance(net, obs[i], p);
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double c = st_cov_process(net, obs[i].location, obs[i].epoch, obs[j].location,
                                      obs[j].epoch, p);
      m.sigma_u(i, j) = c;
      m.sigma_u(j, i) = c;
    }
  }
  return m;
}

}  // namespace riverfuse
