#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "riverfuse/kriging.hpp"
#include "riverfuse/random.hpp"
#include "riverfuse/sim.hpp"
#include "support.hpp"

using namespace riverfuse;

namespace {

CovarianceParams base_params() {
  CovarianceParams p;
  p.sigma2_river = 1.0;
  p.rho_river = 120.0;
  p.sigma2_basin = 0.4;
  p.rho_basin = 250.0;
  p.tau = 12.0;
  p.nugget = 0.0;
  return p;
}

// Scatter of observations along a chain network within a time window.
std::vector<Observation> scatter(const RiverNetwork& net, Rng& rng, int n, Date t0,
                                 int window_days, double height = 0.0) {
  std::vector<Observation> obs;
  for (int i = 0; i < n; ++i) {
    const int e = static_cast<int>(rng.uniform_int(0, net.edge_count() - 1));
    obs.push_back(rft::make_obs(
        net.locate(net.edge(e).id, rng.uniform(0, net.edge(e).length_km)),
        t0 + static_cast<int>(rng.uniform_int(0, window_days)), height));
  }
  return obs;
}

}  // namespace

TEST(Kriging, NoiseFreeExactnessAtObservedPoints) {
  const auto p = base_params();  // nugget 0: exact interpolation
  const auto net = rft::chain_network({100, 100});
  const auto basis = TrendBasis::build(net, 100);
  Rng rng(42);
  auto obs = scatter(net, rng, 15, Date(2012, 6, 1), 20);
  for (std::size_t i = 0; i < obs.size(); ++i) obs[i].height_m = 3.0 + 0.1 * i;

  for (const std::size_t k : {std::size_t{0}, std::size_t{7}, obs.size() - 1}) {
    const auto pred =
        predict(net, basis, p, obs, obs[k].location, obs[k].epoch);
    ASSERT_TRUE(pred.has_value());
    EXPECT_NEAR(pred->height_m, obs[k].height_m, 1e-8);
    EXPECT_NEAR(pred->variance_m2, 0.0, 1e-8);
  }
}

TEST(Kriging, WeightsSatisfyUnbiasednessConstraints) {
  const auto net = rft::chain_network({150, 150});
  const auto basis = TrendBasis::build(net, 100);
  auto p = base_params();
  p.nugget = 0.02;
  Rng rng(11);
  const auto obs = scatter(net, rng, 40, Date(2012, 6, 1), 30);

  for (int trial = 0; trial < 10; ++trial) {
    const auto target =
        net.locate(trial % 2 ? "e0" : "e1", rng.uniform(0, 150));
    const auto pred = predict(net, basis, p, obs, target, Date(2012, 6, 15));
    ASSERT_TRUE(pred.has_value());
    EXPECT_LE(pred->unbiasedness_residual, 1e-8);

    // Recompute the residual from scratch on the local neighborhood.
    std::vector<Observation> local;
    for (const int i : pred->neighborhood) local.push_back(obs[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd F = basis.design_matrix(net, local);
    const Eigen::VectorXd f = basis.eval(net, target);
    const Eigen::VectorXd resid = F.transpose() * pred->weights - f;
    // Dropped (unsupported) columns are allowed to miss; supported ones must hold.
    if (!pred->trend_deficient) {
      EXPECT_LE(resid.cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Kriging, SingleObservationGetsUnitWeight) {
  const Eigen::MatrixXd sigma_u = Eigen::MatrixXd::Constant(1, 1, 1.4);
  const Eigen::VectorXd alti = Eigen::VectorXd::Constant(1, 0.2);
  const Eigen::MatrixXd F = Eigen::MatrixXd::Ones(1, 1);
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(1, 0.3);
  const Eigen::VectorXd f = Eigen::VectorXd::Ones(1);
  const auto lambda = solve_weights(sigma_u, alti, F, c, f);
  ASSERT_EQ(lambda.size(), 1);
  EXPECT_NEAR(lambda[0], 1.0, 1e-12);
}

TEST(Kriging, MatchesBorderedSystemOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 10));
    // Random SPD sigma via A*A^T + small ridge.
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
    }
    Eigen::MatrixXd sigma_u = A * A.transpose();
    Eigen::VectorXd alti(n);
    for (int i = 0; i < n; ++i) alti[i] = rng.uniform(0.01, 0.3);
    const int m = trial % 3 == 0 ? 2 : 1;
    Eigen::MatrixXd F = Eigen::MatrixXd::Ones(n, m);
    if (m == 2) {
      for (int i = 0; i < n; ++i) F(i, 1) = rng.uniform(-1, 1);
    }
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i) c[i] = rng.uniform(0, 1);
    Eigen::VectorXd f = Eigen::VectorXd::Ones(m);
    if (m == 2) f[1] = rng.uniform(-1, 1);

    const auto lambda = solve_weights(sigma_u, alti, F, c, f);
    Eigen::MatrixXd sigma_tot = sigma_u;
    sigma_tot.diagonal() += alti;
    const auto want = rft::kkt_lambda(sigma_tot, F, c, f);
    ASSERT_EQ(lambda.size(), want.size());
    const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
    EXPECT_LE((lambda - want).cwiseAbs().maxCoeff() / scale, 1e-7) << "trial " << trial;
  }
}

TEST(Kriging, VarianceMatchesDirectMseExpansion) {
  auto p = base_params();
  p.nugget = 0.05;
  const auto net = rft::chain_network({120, 180});
  const auto basis = TrendBasis::build(net, 100);
  Rng rng(23);
  const auto obs = scatter(net, rng, 25, Date(2012, 6, 1), 25);

  for (int trial = 0; trial < 6; ++trial) {
    const auto target = net.locate("e1", rng.uniform(0, 180));
    const Date t0 = Date(2012, 6, 10) + trial;
    const auto pred = predict(net, basis, p, obs, target, t0);
    ASSERT_TRUE(pred.has_value());
    ASSERT_FALSE(pred->variance_clipped);

    std::vector<Observation> local;
    for (const int i : pred->neighborhood) local.push_back(obs[static_cast<std::size_t>(i)]);
    const auto m = build_matrices(net, local, p);
    Eigen::MatrixXd sigma_tot = m.sigma_u;
    sigma_tot.diagonal() += m.sigma_alti_diag;
    Eigen::VectorXd c(static_cast<Eigen::Index>(local.size()));
    for (std::size_t i = 0; i < local.size(); ++i) {
      c[static_cast<Eigen::Index>(i)] =
          st_cov_process(net, local[i].location, local[i].epoch, target, t0, p);
    }
    const double c0 = p.sigma2_river + p.sigma2_basin;
    const auto& lam = pred->weights;
    const double direct = lam.dot(sigma_tot * lam) - 2.0 * lam.dot(c) + c0;
    EXPECT_NEAR(pred->variance_m2, direct, 1e-8);
    EXPECT_GE(pred->variance_m2, 0.0);
  }
}

TEST(Kriging, MoreDataNeverHurts) {
  auto p = base_params();
  p.nugget = 0.03;
  const auto net = rft::chain_network({100});
  const auto basis = TrendBasis::constant();
  const auto target = net.locate("e0", 50);
  const Date t0(2012, 6, 15);

  std::vector<Observation> obs{
      rft::make_obs(net.locate("e0", 20), t0 - 4, 1.0),
      rft::make_obs(net.locate("e0", 80), t0 + 3, 2.0),
  };
  const auto small = predict(net, basis, p, obs, target, t0);
  ASSERT_TRUE(small.has_value());

  obs.push_back(rft::make_obs(net.locate("e0", 45), t0 + 1, 1.4));
  obs.push_back(rft::make_obs(net.locate("e0", 55), t0 - 1, 1.6));
  const auto big = predict(net, basis, p, obs, target, t0);
  ASSERT_TRUE(big.has_value());
  EXPECT_LE(big->variance_m2, small->variance_m2 + 1e-10);
}

TEST(Kriging, ReproducesConstantFieldsExactly) {
  // Partition of unity puts constants in the trend span, so a constant
  // field is reproduced with zero error anywhere, even between stations.
  const auto p = base_params();
  const auto net = rft::chain_network({150, 150});
  const auto basis = TrendBasis::build(net, 100);
  Rng rng(3);
  auto obs = scatter(net, rng, 30, Date(2012, 6, 1), 20, 7.25);

  for (int trial = 0; trial < 8; ++trial) {
    const auto target = net.locate(trial % 2 ? "e0" : "e1", rng.uniform(0, 150));
    const auto pred = predict(net, basis, p, obs, target, Date(2012, 6, 12) + trial);
    ASSERT_TRUE(pred.has_value());
    EXPECT_NEAR(pred->height_m, 7.25, 1e-7);
  }
}

TEST(Kriging, NeighborhoodFiltersByTimeAndSpace) {
  const auto p = base_params();
  // Distinct sub-basins per node so basin distance can exceed the radius.
  const auto net = rft::chain_network({300, 300}, {"sb0", "sb1", "sb2"});
  const auto basis = TrendBasis::constant();
  const Date t0(2012, 6, 15);
  const auto target = net.locate("e1", 300);  // chainage 0

  std::vector<Observation> obs{
      rft::make_obs(net.locate("e1", 290), t0 + 2, 1.0),   // near in space and time
      rft::make_obs(net.locate("e1", 280), t0 + 50, 2.0),  // outside 45-day window
      rft::make_obs(net.locate("e0", 10), t0, 3.0),        // 590 km upstream, basin 300 km away
  };
  const auto pred = predict(net, basis, p, obs, target, t0);
  ASSERT_TRUE(pred.has_value());
  EXPECT_EQ(pred->n_obs, 1);
  ASSERT_EQ(pred->neighborhood.size(), 1u);
  EXPECT_EQ(pred->neighborhood[0], 0);
}

TEST(Kriging, NeighborhoodCapKeepsTheMostCorrelated) {
  const auto p = base_params();
  const auto net = rft::chain_network({100});
  const auto basis = TrendBasis::constant();
  const Date t0(2012, 6, 15);
  const auto target = net.locate("e0", 50);

  std::vector<Observation> obs;
  for (int i = 0; i < 12; ++i) {
    // Increasing time lag: obs 0 is the most correlated, 11 the least.
    obs.push_back(rft::make_obs(net.locate("e0", 50), t0 + 2 * i, 1.0 + i));
  }
  NeighborhoodSpec nbhd;
  nbhd.max_count = 4;
  const auto pred = predict(net, basis, p, obs, target, t0, nbhd);
  ASSERT_TRUE(pred.has_value());
  EXPECT_EQ(pred->n_obs, 4);
  ASSERT_EQ(pred->neighborhood.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(pred->neighborhood[i], i);
}

TEST(Kriging, EmptyNeighborhoodYieldsNullopt) {
  const auto p = base_params();
  const auto net = rft::chain_network({100});
  const auto basis = TrendBasis::constant();
  std::vector<Observation> obs{
      rft::make_obs(net.locate("e0", 50), Date(2012, 1, 1), 1.0),
  };
  EXPECT_FALSE(predict(net, basis, p, obs, net.locate("e0", 10), Date(2012, 6, 1)).has_value());
  EXPECT_FALSE(predict(net, basis, p, {}, net.locate("e0", 10), Date(2012, 1, 1)).has_value());
}

TEST(Kriging, SeriesGridIsInclusiveAndKeepsGaps) {
  const auto p = base_params();
  const auto net = rft::chain_network({100});
  const auto basis = TrendBasis::constant();
  std::vector<Observation> obs{
      rft::make_obs(net.locate("e0", 40), Date(2010, 6, 3), 2.0),
      rft::make_obs(net.locate("e0", 60), Date(2010, 6, 27), 3.0),
  };
  // 30-day window at 5-day steps: 7 epochs, endpoints included.
  const auto series = interpolate_series(net, basis, p, obs, net.locate("e0", 50),
                                         Date(2010, 6, 1), Date(2010, 7, 1), 5);
  ASSERT_EQ(series.size(), 7u);
  EXPECT_EQ(series.front().date, Date(2010, 6, 1));
  EXPECT_EQ(series.back().date, Date(2010, 7, 1));
  for (const auto& pt : series) EXPECT_EQ(pt.flag, SeriesFlag::ok);

  // A season-length window: Jun 1 .. Nov 30 at 5 days is exactly 37 epochs.
  const auto season = interpolate_series(net, basis, p, obs, net.locate("e0", 50),
                                         Date(2010, 6, 1), Date(2010, 11, 30), 5);
  EXPECT_EQ(season.size(), 37u);
  // Epochs beyond the data window come back flagged, not dropped.
  int nodata = 0;
  for (const auto& pt : season) {
    if (pt.flag == SeriesFlag::nodata) {
      ++nodata;
      EXPECT_TRUE(std::isnan(pt.height_m));
      EXPECT_EQ(pt.n_obs, 0);
    }
  }
  EXPECT_GT(nodata, 0);

  EXPECT_THROW(interpolate_series(net, basis, p, obs, net.locate("e0", 50), Date(2010, 6, 1),
                                  Date(2010, 7, 1), 0),
               std::invalid_argument);
  EXPECT_THROW(interpolate_series(net, basis, p, obs, net.locate("e0", 50), Date(2010, 6, 1),
                                  Date(2010, 5, 1), 5),
               std::invalid_argument);
}

TEST(Kriging, SeriesFlagStringsRoundTrip) {
  for (const auto f :
       {SeriesFlag::ok, SeriesFlag::nodata, SeriesFlag::clipped_variance}) {
    EXPECT_EQ(parse_series_flag(to_string(f)), f);
  }
  EXPECT_EQ(to_string(SeriesFlag::clipped_variance), "clipped-variance");
  EXPECT_THROW(parse_series_flag("bogus"), std::invalid_argument);
}

TEST(Kriging, OlsTrendRecoversSplineCoefficients) {
  const auto net = rft::chain_network({150, 150});
  const auto basis = TrendBasis::build(net, 100);
  Rng rng(9);
  Eigen::VectorXd beta_true(basis.size());
  for (int j = 0; j < basis.size(); ++j) beta_true[j] = rng.uniform(-2, 2);

  auto obs = scatter(net, rng, 80, Date(2012, 6, 1), 10);
  for (auto& o : obs) o.height_m = basis.eval(net, o.location).dot(beta_true);

  const auto fit = ols_trend(net, basis, obs);
  EXPECT_TRUE(fit.dropped.empty());
  // Compare fitted surface values, not raw coefficients.
  for (const auto& o : obs) {
    const auto f = basis.eval(net, o.location);
    EXPECT_NEAR(f.dot(fit.beta), o.height_m, 1e-8);
  }
  const auto resid = detrend(net, basis, fit.beta, obs);
  for (const auto& o : resid) EXPECT_NEAR(o.height_m, 0.0, 1e-8);
}

TEST(Kriging, TrendDropsColumnsForUnobservedRivers) {
  const auto net = rft::y_network();
  const auto basis = TrendBasis::build(net, 60);
  const auto& trib_rb = basis.rivers()[1];

  // All observations on the main stem: the tributary block has no support.
  Rng rng(13);
  std::vector<Observation> obs;
  for (int i = 0; i < 40; ++i) {
    const char* e = i % 2 ? "a" : "d";
    const double len = net.edge(net.edge_index(e)).length_km;
    obs.push_back(rft::make_obs(net.locate(e, rng.uniform(0, len)),
                                Date(2012, 6, 1) + static_cast<int>(rng.uniform_int(0, 10)),
                                rng.uniform(0, 5)));
  }
  const auto fit = ols_trend(net, basis, obs);
  for (int j = trib_rb.offset; j < trib_rb.offset + trib_rb.count; ++j) {
    EXPECT_NE(std::find(fit.dropped.begin(), fit.dropped.end(), j), fit.dropped.end())
        << "column " << j << " should be dropped";
    EXPECT_EQ(fit.beta[j], 0.0);
  }
  // kept must be sorted and disjoint from dropped.
  EXPECT_TRUE(std::is_sorted(fit.kept.begin(), fit.kept.end()));
  for (const int j : fit.kept) {
    EXPECT_EQ(std::find(fit.dropped.begin(), fit.dropped.end(), j), fit.dropped.end());
  }
}

TEST(Kriging, GlsTrendMatchesOlsOnWhiteNoise) {
  // With an identity-like covariance (tiny process, unit nugget), GLS
  // reduces to OLS.
  const auto net = rft::chain_network({150, 150});
  const auto basis = TrendBasis::build(net, 150);
  CovarianceParams p;
  p.sigma2_river = 1e-8;
  p.sigma2_basin = 1e-8;
  p.rho_river = 100;
  p.rho_basin = 100;
  p.tau = 10;
  p.nugget = 1.0;

  Rng rng(31);
  auto obs = scatter(net, rng, 60, Date(2012, 6, 1), 400);
  for (auto& o : obs) {
    o.height_m = 2.0 + 0.01 * net.chainage_km(o.location) + 0.05 * rng.normal();
  }
  const auto ols = ols_trend(net, basis, obs);
  const auto gls = gls_trend(net, basis, obs, p);
  ASSERT_EQ(ols.beta.size(), gls.beta.size());
  for (int j = 0; j < ols.beta.size(); ++j) {
    EXPECT_NEAR(ols.beta[j], gls.beta[j], 1e-4) << "coef " << j;
  }
}

TEST(Kriging, PredictionAtRemoteRiverFlagsTrendDeficit) {
  const auto net = rft::y_network();
  const auto basis = TrendBasis::build(net, 60);
  auto p = base_params();
  p.nugget = 0.01;

  // Observations only on the main stem; target on the tributary.
  Rng rng(17);
  std::vector<Observation> obs;
  for (int i = 0; i < 20; ++i) {
    obs.push_back(rft::make_obs(net.locate("d", rng.uniform(0, 60)),
                                Date(2012, 6, 10) + static_cast<int>(rng.uniform_int(0, 10)),
                                1.0));
  }
  const auto pred = predict(net, basis, p, obs, net.locate("b", 40), Date(2012, 6, 15));
  ASSERT_TRUE(pred.has_value());
  EXPECT_TRUE(pred->trend_deficient);
}

TEST(Kriging, RejectsMismatchedDimensions) {
  const Eigen::MatrixXd sigma_u = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::VectorXd alti = Eigen::VectorXd::Zero(3);
  const Eigen::MatrixXd F = Eigen::MatrixXd::Ones(2, 1);  // wrong row count
  const Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd f = Eigen::VectorXd::Ones(1);
  EXPECT_THROW(solve_weights(sigma_u, alti, F, c, f), std::invalid_argument);
}
