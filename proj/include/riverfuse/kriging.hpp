#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "riverfuse/covariance.hpp"
#include "riverfuse/date.hpp"
#include "riverfuse/network.hpp"
#include "riverfuse/observation.hpp"
#include "riverfuse/trend.hpp"

namespace riverfuse {

/// Local search window for predictions: an observation enters the
/// neighborhood when its time lag is within max_time_days and it is either
/// flow-connected within max_river_km or within max_basin_km of the
/// target's sub-basin. When more than max_count qualify, the ones with the
/// largest process covariance to the target are kept.
struct NeighborhoodSpec {
  double max_river_km = 200.0;
  double max_basin_km = 200.0;
  double max_time_days = 45.0;
  int max_count = 300;
};

namespace detail {

/// Symmetric solver for the total data covariance; Cholesky with a
/// semi-definite fallback.
class SigmaSolver {
 public:
  explicit SigmaSolver(Eigen::MatrixXd sigma) : sigma_(std::move(sigma)) {
    llt_.compute(sigma_);
    if (llt_.info() == Eigen::Success) {
      spd_ = true;
      return;
    }
    ldlt_.compute(sigma_);
    if (ldlt_.info() != Eigen::Success) {
      throw std::runtime_error("covariance matrix could not be factorized");
    }
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    if (spd_) return llt_.solve(rhs);
    return ldlt_.solve(rhs);
  }

  double rcond() const { return spd_ ? llt_.rcond() : ldlt_.rcond(); }

 private:
  Eigen::MatrixXd sigma_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  bool spd_ = false;
};

/// Column selection for the trend block: drops columns with no support
/// among the observations (and any further columns required for full
/// column rank), via rank-revealing QR on unit-normalized columns, so the
/// cut is by direction rather than scale. Returns kept column indices in
/// ascending order.
inline std::vector<int> supported_columns(const Eigen::MatrixXd& F) {
  Eigen::MatrixXd Fn = F;
  for (Eigen::Index j = 0; j < Fn.cols(); ++j) {
    const double norm = Fn.col(j).norm();
    if (norm > 0) Fn.col(j) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Fn);
  qr.setThreshold(1e-7);
  const int rank = static_cast<int>(qr.rank());
  if (rank == 0) {
    throw std::runtime_error("trend design matrix is identically zero");
  }
  const auto perm = qr.colsPermutation().indices();
  std::vector<int> kept(perm.data(), perm.data() + rank);
  std::sort(kept.begin(), kept.end());
  return kept;
}

struct UkSolution {
  Eigen::VectorXd lambda;
  Eigen::VectorXd gamma;  // multiplier block over kept columns
  std::vector<int> kept;
  double rcond = 0;
  double unbiasedness_residual = 0;  // max |F^T lambda - f| over all columns
  bool trend_deficient = false;      // a dropped column had f != 0 there
};

/// Solves the universal-kriging weight system
///   lambda = Sigma^-1 (c + F (F^T Sigma^-1 F)^-1 (f - F^T Sigma^-1 c))
/// with Sigma the total data covariance. The trend block is solved on
/// unit-normalized columns with iterative refinement; the normalization
/// cancels exactly, leaving the solution unchanged. When even that cannot
/// enforce the unbiasedness constraints to round-off, the weakest-pivot
/// basis column is treated as numerically unsupported and dropped, so the
/// constraints of the system actually solved always hold; every drop is
/// visible through the kept set and the deficiency flag.
inline UkSolution solve_uk(const Eigen::MatrixXd& sigma_u,
                           const Eigen::VectorXd& sigma_alti_diag, const Eigen::MatrixXd& F,
                           const Eigen::VectorXd& c_u, const Eigen::VectorXd& f) {
  const Eigen::Index n = sigma_u.rows();
  if (F.rows() != n || c_u.size() != n || sigma_alti_diag.size() != n ||
      f.size() != F.cols()) {
    throw std::invalid_argument("kriging system dimensions disagree");
  }

  Eigen::MatrixXd sigma = sigma_u;
  sigma.diagonal() += sigma_alti_diag;

  // Pivot order of the unit-normalized columns; the initial rank drops
  // unsupported and direction-degenerate columns.
  Eigen::MatrixXd Fn = F;
  for (Eigen::Index j = 0; j < Fn.cols(); ++j) {
    const double norm = Fn.col(j).norm();
    if (norm > 0) Fn.col(j) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Fn);
  qr.setThreshold(1e-7);
  const int rank0 = static_cast<int>(qr.rank());
  if (rank0 == 0) {
    throw std::runtime_error("trend design matrix is identically zero");
  }
  const auto perm = qr.colsPermutation().indices();

  const SigmaSolver solver(std::move(sigma));
  const Eigen::VectorXd b = solver.solve(c_u);

  UkSolution sol;
  for (int rank = rank0; rank >= 1; --rank) {
    std::vector<int> kept(perm.data(), perm.data() + rank);
    std::sort(kept.begin(), kept.end());
    const Eigen::Index m = rank;
    Eigen::MatrixXd Fk(n, m);
    Eigen::VectorXd fk(m);
    Eigen::VectorXd scale(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      scale[j] = F.col(kept[static_cast<std::size_t>(j)]).norm();
      Fk.col(j) = F.col(kept[static_cast<std::size_t>(j)]) / scale[j];
      fk[j] = f[kept[static_cast<std::size_t>(j)]] / scale[j];
    }

    const Eigen::MatrixXd A = solver.solve(Fk);
    const Eigen::MatrixXd M = Fk.transpose() * A;
    const Eigen::VectorXd g = fk - Fk.transpose() * b;

    const Eigen::LDLT<Eigen::MatrixXd> mldlt(M);
    Eigen::VectorXd gamma = mldlt.solve(g);
    const bool ldlt_ok = mldlt.info() == Eigen::Success && gamma.allFinite();
    if (!ldlt_ok) {
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (!lu.isInvertible() || !(gamma = lu.solve(g)).allFinite()) {
        if (rank > 1) continue;
        throw std::runtime_error("trend normal matrix is singular");
      }
    }
    // Refinement drives the constraint residual M gamma - g toward
    // round-off when the normal matrix is poorly conditioned.
    for (int step = 0; ldlt_ok && step < 5; ++step) {
      const Eigen::VectorXd r = g - M * gamma;
      if (!r.allFinite() ||
          r.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + g.cwiseAbs().maxCoeff())) {
        break;
      }
      const Eigen::VectorXd dg = mldlt.solve(r);
      if (!dg.allFinite()) break;
      gamma += dg;
    }

    const Eigen::VectorXd lambda = b + A * gamma;
    if (!lambda.allFinite()) {
      if (rank > 1) continue;
      throw std::runtime_error("kriging system is singular");
    }

    // Residual in the caller's units: the scaled solve must reproduce the
    // original (unscaled) basis values at the target.
    const Eigen::VectorXd rk =
        ((Fk.transpose() * lambda - fk).array() * scale.array()).matrix();
    const bool enforced =
        rk.allFinite() &&
        rk.cwiseAbs().maxCoeff() <=
            1e-10 * (1.0 + (fk.array() * scale.array()).abs().maxCoeff());
    if (enforced || rank == 1) {
      sol.lambda = lambda;
      // Undo the column normalization so gamma pairs with the caller's f.
      sol.gamma = (gamma.array() / scale.array()).matrix();
      sol.kept = std::move(kept);
      break;
    }
  }
  sol.rcond = solver.rcond();

  const Eigen::VectorXd resid = F.transpose() * sol.lambda - f;
  sol.unbiasedness_residual = resid.size() ? resid.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index j = 0, k = 0; j < F.cols(); ++j) {
    if (k < static_cast<Eigen::Index>(sol.kept.size()) && sol.kept[k] == j) {
      ++k;
      continue;
    }
    if (std::abs(resid[j]) > 1e-8) sol.trend_deficient = true;
  }
  return sol;
}

}  // namespace detail

/// Universal-kriging weights for one prediction. Inputs are the process
/// covariance between observations, the diagonal measurement-error
/// covariance, the trend design matrix F, the process covariance vector
/// between observations and the target, and the trend basis vector f at
/// the target.
inline Eigen::VectorXd solve_weights(const Eigen::MatrixXd& sigma_u,
                                     const Eigen::VectorXd& sigma_alti_diag,
                                     const Eigen::MatrixXd& F, const Eigen::VectorXd& c_u,
                                     const Eigen::VectorXd& f) {
  return detail::solve_uk(sigma_u, sigma_alti_diag, F, c_u, f).lambda;
}

struct KrigingPrediction {
  double height_m = 0;
  double variance_m2 = 0;
  int n_obs = 0;
  bool variance_clipped = false;  // negative variance from round-off, reported as 0
  bool trend_deficient = false;   // target uses basis functions unsupported by data
  double rcond = 0;
  double unbiasedness_residual = 0;
  Eigen::VectorXd weights;
  std::vector<int> neighborhood;  // indices into the observation span
  std::vector<int> kept;          // basis columns the solved system enforced
};

/// Point prediction at (target, t0) from the local neighborhood. Returns
/// nullopt when the neighborhood is empty.
inline std::optional<KrigingPrediction> predict(
    const RiverNetwork& net, const TrendBasis& basis, const CovarianceParams& params,
    std::span<const Observation> obs, NetworkLocation target, Date t0,
    const NeighborhoodSpec& nbhd = {}) {
  struct Candidate {
    int index;
    double score;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double dt = std::abs(static_cast<double>(obs[i].epoch - t0));
    if (dt > nbhd.max_time_days) continue;
    const auto rd = net.river_distance(obs[i].location, target);
    const bool near_stream = rd.has_value() && *rd <= nbhd.max_river_km;
    const bool near_basin = net.basin_distance(obs[i].location, target) <= nbhd.max_basin_km;
    if (!near_stream && !near_basin) continue;
    const double score =
        st_cov_process(net, obs[i].location, obs[i].epoch, target, t0, params);
    candidates.push_back({static_cast<int>(i), score});
  }
  if (candidates.empty()) return std::nullopt;

  if (static_cast<int>(candidates.size()) > nbhd.max_count) {
    std::nth_element(candidates.begin(), candidates.begin() + nbhd.max_count,
                     candidates.end(), [](const Candidate& a, const Candidate& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return a.index < b.index;
                     });
    candidates.resize(static_cast<std::size_t>(nbhd.max_count));
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.index < b.index; });

  std::vector<Observation> local;
  local.reserve(candidates.size());
  for (const auto& c : candidates) local.push_back(obs[static_cast<std::size_t>(c.index)]);

  const auto matrices = build_matrices(net, local, params);
  const Eigen::MatrixXd F = basis.design_matrix(net, local);
  const Eigen::VectorXd f = basis.eval(net, target);
  const Eigen::Index n = static_cast<Eigen::Index>(local.size());
  Eigen::VectorXd c(n), z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c[i] = st_cov_process(net, local[static_cast<std::size_t>(i)].location,
                          local[static_cast<std::size_t>(i)].epoch, target, t0, params);
    z[i] = local[static_cast<std::size_t>(i)].height_m;
  }

  const auto sol = detail::solve_uk(matrices.sigma_u, matrices.sigma_alti_diag, F, c, f);

  KrigingPrediction out;
  out.height_m = sol.lambda.dot(z);
  const double c0 = params.sigma2_river + params.sigma2_basin;
  double fk_gamma = 0;
  for (std::size_t j = 0; j < sol.kept.size(); ++j) {
    fk_gamma += f[sol.kept[j]] * sol.gamma[static_cast<Eigen::Index>(j)];
  }
  double variance = c0 - sol.lambda.dot(c) + fk_gamma;
  if (variance < 0) {
    out.variance_clipped = true;
    variance = 0;
  }
  out.variance_m2 = variance;
  out.n_obs = static_cast<int>(local.size());
  out.trend_deficient = sol.trend_deficient;
  out.rcond = sol.rcond;
  out.unbiasedness_residual = sol.unbiasedness_residual;
  out.weights = sol.lambda;
  out.kept = sol.kept;
  out.neighborhood.reserve(candidates.size());
  for (const auto& cand : candidates) out.neighborhood.push_back(cand.index);
  return out;
}

enum class SeriesFlag { ok, nodata, clipped_variance };

inline std::string to_string(SeriesFlag f) {
  switch (f) {
    case SeriesFlag::ok: return "ok";
    case SeriesFlag::nodata: return "nodata";
    case SeriesFlag::clipped_variance: return "clipped-variance";
  }
  throw std::logic_error("unreachable series flag");
}

inline SeriesFlag parse_series_flag(std::string_view s) {
  if (s == "ok") return SeriesFlag::ok;
  if (s == "nodata") return SeriesFlag::nodata;
  if (s == "clipped-variance") return SeriesFlag::clipped_variance;
  throw std::invalid_argument("unknown series flag '" + std::string(s) + "'");
}

struct SeriesPoint {
  Date date;
  double height_m = std::numeric_limits<double>::quiet_NaN();
  double sigma_m = std::numeric_limits<double>::quiet_NaN();
  int n_obs = 0;
  SeriesFlag flag = SeriesFlag::nodata;
};

/// Regular time series of predictions at one target: epochs from, from +
/// step, ... up to and including `to` when it lands on the grid. Epochs
/// with an empty neighborhood are emitted with the nodata flag rather than
/// dropped.
inline std::vector<SeriesPoint> interpolate_series(
    const RiverNetwork& net, const TrendBasis& basis, const CovarianceParams& params,
    std::span<const Observation> obs, NetworkLocation target, Date from, Date to,
    int step_days, const NeighborhoodSpec& nbhd = {}) {
  if (step_days <= 0) throw std::invalid_argument("step_days must be positive");
  if (to < from) throw std::invalid_argument("series end precedes start");
  std::vector<SeriesPoint> series;
  for (Date t = from; t <= to; t = t + step_days) {
    SeriesPoint point;
    point.date = t;
    if (const auto pred = predict(net, basis, params, obs, target, t, nbhd)) {
      point.height_m = pred->height_m;
      point.sigma_m = std::sqrt(pred->variance_m2);
      point.n_obs = pred->n_obs;
      point.flag = pred->variance_clipped ? SeriesFlag::clipped_variance : SeriesFlag::ok;
    }
    series.push_back(point);
  }
  return series;
}

struct TrendFit {
  Eigen::VectorXd beta;  // full-length coefficient vector, zeros at dropped columns
  std::vector<int> kept;
  std::vector<int> dropped;
};

namespace detail {

inline TrendFit finish_trend(const std::vector<int>& kept, const Eigen::VectorXd& beta_kept,
                             int size) {
  TrendFit fit;
  fit.beta = Eigen::VectorXd::Zero(size);
  fit.kept = kept;
  std::size_t k = 0;
  for (int j = 0; j < size; ++j) {
    if (k < kept.size() && kept[k] == j) {
      fit.beta[j] = beta_kept[static_cast<Eigen::Index>(k)];
      ++k;
    } else {
      fit.dropped.push_back(j);
    }
  }
  return fit;
}

}  // namespace detail

/// Ordinary least-squares trend fit (identity residual covariance), used
/// as the preliminary step before covariance estimation.
inline TrendFit ols_trend(const RiverNetwork& net, const TrendBasis& basis,
                          std::span<const Observation> obs) {
  const Eigen::MatrixXd F = basis.design_matrix(net, obs);
  Eigen::VectorXd z(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) z[static_cast<Eigen::Index>(i)] = obs[i].height_m;

  const auto kept = detail::supported_columns(F);
  Eigen::MatrixXd Fk(F.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    Fk.col(static_cast<Eigen::Index>(j)) = F.col(kept[j]);
  }
  const Eigen::VectorXd beta_kept = Fk.householderQr().solve(z);
  if (!beta_kept.allFinite()) throw std::runtime_error("trend fit is singular");
  return detail::finish_trend(kept, beta_kept, basis.size());
}

/// Generalized least-squares trend fit with the full data covariance.
inline TrendFit gls_trend(const RiverNetwork& net, const TrendBasis& basis,
                          std::span<const Observation> obs, const CovarianceParams& params) {
  const auto matrices = build_matrices(net, obs, params);
  Eigen::MatrixXd sigma = matrices.sigma_u;
  sigma.diagonal() += matrices.sigma_alti_diag;

  const Eigen::MatrixXd F = basis.design_matrix(net, obs);
  Eigen::VectorXd z(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) z[static_cast<Eigen::Index>(i)] = obs[i].height_m;

  const auto kept = detail::supported_columns(F);
  Eigen::MatrixXd Fk(F.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    Fk.col(static_cast<Eigen::Index>(j)) = F.col(kept[j]);
  }

  const detail::SigmaSolver solver(std::move(sigma));
  const Eigen::MatrixXd A = solver.solve(Fk);
  const Eigen::MatrixXd M = Fk.transpose() * A;
  const Eigen::VectorXd rhs = A.transpose() * z;
  Eigen::LDLT<Eigen::MatrixXd> mldlt(M);
  Eigen::VectorXd beta_kept = mldlt.solve(rhs);
  if (mldlt.info() != Eigen::Success || !beta_kept.allFinite()) {
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) throw std::runtime_error("trend fit is singular");
    beta_kept = lu.solve(rhs);
  }
  return detail::finish_trend(kept, beta_kept, basis.size());
}

/// Copies the observations with the fitted trend removed from the heights.
inline std::vector<Observation> detrend(const RiverNetwork& net, const TrendBasis& basis,
                                        const Eigen::VectorXd& beta,
                                        std::span<const Observation> obs) {
  std::vector<Observation> out(obs.begin(), obs.end());
  for (auto& o : out) o.height_m -= basis.eval(net, o.location).dot(beta);
  return out;
}

}  // namespace riverfuse
