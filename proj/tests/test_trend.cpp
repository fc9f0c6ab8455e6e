#include <gtest/gtest.h>

#include <cmath>

#include "riverfuse/trend.hpp"
#include "support.hpp"

using namespace riverfuse;

namespace {

// Chainage grid spanning one river of the basis, endpoints included.
std::vector<double> grid(double lo, double hi, int n) {
  std::vector<double> xs;
  for (int i = 0; i < n; ++i) xs.push_back(lo + (hi - lo) * i / (n - 1));
  return xs;
}

NetworkLocation at_chainage(const RiverNetwork& net, double chainage) {
  for (int e = 0; e < net.edge_count(); ++e) {
    const double hi = net.chainage_km(NetworkLocation{e, 0.0});
    const double lo = net.chainage_km(NetworkLocation{e, net.edge(e).length_km});
    if (chainage >= lo - 1e-9 && chainage <= hi + 1e-9) {
      const double offset = net.edge(e).length_km - (chainage - lo);
      return net.locate(net.edge(e).id, std::clamp(offset, 0.0, net.edge(e).length_km));
    }
  }
  throw std::logic_error("chainage not on network");
}

}  // namespace

TEST(Trend, FunctionCountFollowsSpacing) {
  // 300 km single river at 100 km spacing: 3 spans, cubic -> 6 functions.
  const auto net = rft::chain_network({150, 150});
  const auto basis = TrendBasis::build(net, 100);
  EXPECT_EQ(basis.size(), 6);
  ASSERT_EQ(basis.rivers().size(), 1u);
  EXPECT_EQ(basis.rivers()[0].count, 6);
  EXPECT_EQ(basis.rivers()[0].degree, 3);

  // 250 km / 100 rounds to 3 spans -> 6 functions; 120 km -> 1 span -> 4.
  EXPECT_EQ(TrendBasis::build(rft::chain_network({250}), 100).size(), 6);
  EXPECT_EQ(TrendBasis::build(rft::chain_network({120}), 100).size(), 4);
}

TEST(Trend, PartitionOfUnityAndLocalSupport) {
  const auto net = rft::chain_network({120, 140, 90});
  const auto basis = TrendBasis::build(net, 100);
  const auto& rb = basis.rivers()[0];

  for (const double x : grid(rb.chainage_min_km, rb.chainage_max_km, 97)) {
    const auto f = basis.eval(net, at_chainage(net, x));
    double sum = 0;
    int nonzero = 0;
    for (int i = 0; i < f.size(); ++i) {
      EXPECT_GE(f[i], -1e-14) << "negative basis value at " << x;
      sum += f[i];
      if (f[i] > 1e-14) ++nonzero;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12) << "partition of unity fails at " << x;
    EXPECT_LE(nonzero, 4) << "cubic support exceeded at " << x;
    EXPECT_GE(nonzero, 1);
  }
}

TEST(Trend, MatchesTextbookRecursion) {
  const auto net = rft::chain_network({130, 170});
  const auto basis = TrendBasis::build(net, 75);
  const auto& rb = basis.rivers()[0];
  ASSERT_FALSE(rb.knots.empty());

  for (const double x : grid(rb.chainage_min_km, rb.chainage_max_km, 211)) {
    const auto f = basis.eval(net, at_chainage(net, x));
    for (int i = 0; i < rb.count; ++i) {
      const double want = rft::bspline_recursive(rb.knots, i, rb.degree, x);
      EXPECT_NEAR(f[rb.offset + i], want, 1e-10)
          << "basis " << i << " at chainage " << x;
    }
  }
}

TEST(Trend, TwoRiversGetDisjointBlocks) {
  const auto net = rft::y_network();  // main 160 km chainage extent, tribB 80+60
  const auto basis = TrendBasis::build(net, 60);
  ASSERT_EQ(basis.rivers().size(), 2u);
  const auto& main_rb = basis.rivers()[0];
  const auto& trib_rb = basis.rivers()[1];
  EXPECT_EQ(main_rb.offset, 0);
  EXPECT_EQ(trib_rb.offset, main_rb.count);
  EXPECT_EQ(basis.size(), main_rb.count + trib_rb.count);

  // A location on the main stem activates only the main block.
  const auto f_main = basis.eval(net, net.locate("a", 30));
  for (int i = trib_rb.offset; i < basis.size(); ++i) EXPECT_EQ(f_main[i], 0.0);
  EXPECT_NEAR(f_main.head(main_rb.count).sum(), 1.0, 1e-12);

  const auto f_trib = basis.eval(net, net.locate("b", 30));
  for (int i = 0; i < main_rb.count; ++i) EXPECT_EQ(f_trib[i], 0.0);
  EXPECT_NEAR(f_trib.tail(trib_rb.count).sum(), 1.0, 1e-12);
}

TEST(Trend, ShortRiverFallsBackToConstant) {
  // tribB extent 40 km < 100 km spacing -> single constant function.
  const auto net = rft::y_network(1, 3, 300, 40, 200);
  const auto basis = TrendBasis::build(net, 100);
  const auto& trib_rb = basis.rivers()[1];
  EXPECT_EQ(trib_rb.count, 1);
  const auto f = basis.eval(net, net.locate("b", 17));
  EXPECT_EQ(f[trib_rb.offset], 1.0);
  const auto f2 = basis.eval(net, net.locate("b", 39));
  EXPECT_EQ(f2[trib_rb.offset], 1.0);
}

TEST(Trend, EndpointsAreClamped) {
  const auto net = rft::chain_network({140, 160});
  const auto basis = TrendBasis::build(net, 100);
  const auto& rb = basis.rivers()[0];

  // At the upstream end exactly one function is active with value 1.
  const auto f_hi = basis.eval(net, at_chainage(net, rb.chainage_max_km));
  EXPECT_NEAR(f_hi[rb.offset + rb.count - 1], 1.0, 1e-12);
  EXPECT_NEAR(f_hi.sum(), 1.0, 1e-12);
  const auto f_lo = basis.eval(net, at_chainage(net, rb.chainage_min_km));
  EXPECT_NEAR(f_lo[rb.offset], 1.0, 1e-12);
  EXPECT_NEAR(f_lo.sum(), 1.0, 1e-12);
}

TEST(Trend, ConstantBasis) {
  const auto net = rft::y_network();
  const auto basis = TrendBasis::constant();
  EXPECT_EQ(basis.size(), 1);
  EXPECT_TRUE(basis.is_constant());
  for (const char* edge : {"a", "b", "d"}) {
    const auto f = basis.eval(net, net.locate(edge, 10));
    ASSERT_EQ(f.size(), 1);
    EXPECT_EQ(f[0], 1.0);
  }
}

TEST(Trend, DesignMatrixStacksEvaluations) {
  const auto net = rft::chain_network({150, 150});
  const auto basis = TrendBasis::build(net, 100);
  std::vector<Observation> obs{
      rft::make_obs(net.locate("e0", 10), Date(2010, 1, 1), 1.0),
      rft::make_obs(net.locate("e1", 40), Date(2010, 1, 2), 2.0),
  };
  const Eigen::MatrixXd F = basis.design_matrix(net, obs);
  ASSERT_EQ(F.rows(), 2);
  ASSERT_EQ(F.cols(), basis.size());
  for (int i = 0; i < 2; ++i) {
    const auto f = basis.eval(net, obs[i].location);
    for (int j = 0; j < basis.size(); ++j) EXPECT_EQ(F(i, j), f[j]);
  }
}

TEST(Trend, RejectsBadSpacing) {
  const auto net = rft::chain_network({100});
  EXPECT_THROW(TrendBasis::build(net, 0), std::invalid_argument);
  EXPECT_THROW(TrendBasis::build(net, -5), std::invalid_argument);
}
