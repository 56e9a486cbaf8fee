#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dualcap/baselines.hpp"
#include "dualcap/capacity.hpp"

using namespace dualcap;

namespace {

DiscreteChannelMatrix bsc(double p) {
  DiscreteChannelMatrix m;
  m.inputs = {0.0, 1.0};
  m.transition = {{1.0 - p, p}, {p, 1.0 - p}};
  return m;
}

std::vector<double> grid_points(double lo, double hi, int n) {
  const Matrix g = uniform_grid(lo, hi, n);
  return {g.data(), g.data() + g.size()};
}

}  // namespace

TEST(GaussianKl, Examples) {
  EXPECT_EQ(gaussian_kl(0.3, 1.7, 0.3, 1.7), 0.0);
  EXPECT_NEAR(gaussian_kl(1.0, 1.0, 1.0, 2.0), 0.096574, 1e-6);
  EXPECT_NEAR(gaussian_kl(-1.0, 1.0, 1.0, 2.0), 1.096574, 1e-6);
  EXPECT_THROW(gaussian_kl(0.0, 0.0, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(gaussian_kl(0.0, 1.0, 0.0, -1.0), std::invalid_argument);
}

TEST(GaussianKl, NonnegativeWithEqualityOnlyAtEqualParameters) {
  CounterRng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double m1 = rng.next_uniform(-3, 3), m2 = rng.next_uniform(-3, 3);
    const double v1 = rng.next_uniform(0.05, 4), v2 = rng.next_uniform(0.05, 4);
    EXPECT_GT(gaussian_kl(m1, v1, m2, v2), 0.0);
    EXPECT_EQ(gaussian_kl(m1, v1, m1, v1), 0.0);
  }
}

TEST(AwgnCapacity, Examples) {
  EXPECT_EQ(awgn_capacity(0.0), 0.0);
  EXPECT_EQ(awgn_capacity(1.0), 0.5);
  EXPECT_EQ(awgn_capacity(3.0), 1.0);
  EXPECT_THROW(awgn_capacity(-0.1), std::invalid_argument);
}

TEST(Discretize, RowsSumToOne) {
  const auto spec = ChannelSpec::awgn_average_power(0.3, 1.0);
  const DiscreteChannelMatrix m = discretize_channel(spec, grid_points(-2.5, 2.5, 15));
  EXPECT_EQ(m.output_count(), 512u);
  EXPECT_NO_THROW(m.validate());
  for (const auto& row : m.transition) {
    double s = 0.0;
    for (double w : row) {
      EXPECT_GE(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  EXPECT_EQ(m.costs.size(), 15u);
  EXPECT_NEAR(m.costs.front(), 6.25, 1e-15);
}

TEST(Discretize, NoiselessLimitIsOneHot) {
  const auto spec = ChannelSpec::awgn_average_power(1e-12, 1.0);
  const std::vector<double> grid{-0.65, 0.1, 0.75};
  const DiscreteChannelMatrix m = discretize_channel(spec, grid, -1.0, 1.0, 10);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto bin = static_cast<std::size_t>(std::floor((grid[j] + 1.0) / 0.2));
    EXPECT_NEAR(m.transition[j][bin], 1.0, 1e-12);
  }
}

TEST(Discretize, SymmetricAboutCenter) {
  const auto spec = ChannelSpec::awgn_average_power(1.0, 1.0);
  const DiscreteChannelMatrix m = discretize_channel(spec, {0.0}, -6.0, 6.0, 101);
  const auto& row = m.transition[0];
  for (std::size_t k = 0; k < row.size(); ++k) EXPECT_NEAR(row[k], row[row.size() - 1 - k], 1e-12);
}

TEST(Discretize, ThreeSigmaMass) {
  const auto spec = ChannelSpec::awgn_average_power(1.0, 1.0);
  // bin edges at integers so x +- 3 sigma falls on edges for integer x
  const DiscreteChannelMatrix m = discretize_channel(spec, {-1.0, 0.0, 2.0}, -10.0, 10.0, 200);
  for (std::size_t j = 0; j < 3; ++j) {
    double mass = 0.0;
    for (std::size_t k = 0; k < m.output_count(); ++k)
      if (std::abs(m.output_centers[k] - m.inputs[j]) < 3.0) mass += m.transition[j][k];
    EXPECT_NEAR(mass, 0.9973, 1e-3);
  }
}

TEST(Discretize, Errors) {
  NlpnParams p;
  EXPECT_THROW(discretize_channel(ChannelSpec::nlpn_channel(1e-5, p), {0.0}), std::invalid_argument);
  const auto spec = ChannelSpec::awgn_average_power(1.0, 1.0);
  EXPECT_THROW(discretize_channel(spec, {0.0}, -1.0, 1.0, 7), std::invalid_argument);
  EXPECT_THROW(discretize_channel(spec, {}, -1.0, 1.0, 16), std::invalid_argument);
  EXPECT_THROW(discretize_channel(spec, {0.0}, 1.0, -1.0, 16), std::invalid_argument);
}

TEST(BlahutArimoto, BinarySymmetricChannel) {
  const BlahutArimotoResult r = blahut_arimoto(bsc(0.11));
  EXPECT_NEAR(r.capacity_bits, 1.0 - binary_entropy(0.11), 1e-5);
  EXPECT_NEAR(r.capacity_bits, 0.500084, 1e-5);
  EXPECT_NEAR(r.input_distribution[0], 0.5, 1e-9);
}

TEST(BlahutArimoto, NoiselessIdentity) {
  DiscreteChannelMatrix m;
  m.transition = {{1.0, 0.0}, {0.0, 1.0}};
  const BlahutArimotoResult r = blahut_arimoto(m);
  EXPECT_NEAR(r.capacity_bits, 1.0, 1e-12);
  EXPECT_NEAR(r.input_distribution[1], 0.5, 1e-12);
}

TEST(BlahutArimoto, ZeroMultiplierMatchesUnconstrained) {
  const auto spec = ChannelSpec::awgn_average_power(0.5, 1.0);
  const DiscreteChannelMatrix with_cost = discretize_channel(spec, grid_points(-2, 2, 9), 128);
  DiscreteChannelMatrix without = with_cost;
  without.costs.clear();
  BlahutArimotoOptions opt;
  opt.gamma = 0.0;
  const BlahutArimotoResult a = blahut_arimoto(with_cost, opt);
  const BlahutArimotoResult b = blahut_arimoto(without, opt);
  EXPECT_EQ(a.capacity_bits, b.capacity_bits);
  EXPECT_EQ(a.input_distribution, b.input_distribution);
}

TEST(BlahutArimoto, MonotoneObjective) {
  const auto spec = ChannelSpec::awgn_average_power(0.4, 1.0);
  const DiscreteChannelMatrix m = discretize_channel(spec, grid_points(-2.5, 2.5, 15));
  for (double gamma : {0.0, 0.3}) {
    BlahutArimotoOptions opt;
    opt.gamma = gamma;
    const BlahutArimotoResult r = blahut_arimoto(m, opt);
    ASSERT_GT(r.objective_trace.size(), 3u);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      EXPECT_GE(r.objective_trace[i], r.objective_trace[i - 1] - 1e-15) << i;
  }
}

TEST(BlahutArimoto, DistributionIsNormalized) {
  const auto spec = ChannelSpec::optical_intensity(0.1, 1.0, 0.4);
  const DiscreteChannelMatrix m = discretize_channel(spec, grid_points(0, 1, 15));
  BlahutArimotoOptions opt;
  opt.target_cost = 0.4;
  const BlahutArimotoResult r = blahut_arimoto(m, opt);
  double s = 0.0;
  for (double p : r.input_distribution) {
    EXPECT_GE(p, 0.0);
    s += p;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(BlahutArimoto, TargetCostIsMet) {
  const auto spec = ChannelSpec::awgn_average_power(1.0, 1.0);
  const DiscreteChannelMatrix m = discretize_channel(spec, grid_points(-2.5, 2.5, 15));
  BlahutArimotoOptions opt;
  opt.target_cost = 1.0;
  const BlahutArimotoResult r = blahut_arimoto(m, opt);
  EXPECT_NEAR(r.mean_cost, 1.0, 1e-4);
  EXPECT_GT(r.gamma, 0.0);
  // A 15-point input cannot beat the Gaussian-input capacity.
  EXPECT_LT(r.capacity_bits, awgn_capacity(1.0));
  EXPECT_GT(r.capacity_bits, awgn_capacity(1.0) - 0.03);
}

TEST(BlahutArimoto, InactiveTargetKeepsZeroMultiplier) {
  const auto spec = ChannelSpec::optical_intensity(0.1, 1.0, 0.9);
  const DiscreteChannelMatrix m = discretize_channel(spec, grid_points(0, 1, 15));
  BlahutArimotoOptions opt;
  opt.target_cost = 0.9;
  const BlahutArimotoResult r = blahut_arimoto(m, opt);
  EXPECT_EQ(r.gamma, 0.0);
  EXPECT_LE(r.mean_cost, 0.9 + 1e-4);
}

TEST(BlahutArimoto, DiscretizationDoublingIsStable) {
  const auto spec = ChannelSpec::optical_intensity(0.1, 1.0, 0.4);
  const auto grid = grid_points(0, 1, 15);
  BlahutArimotoOptions opt;
  opt.target_cost = 0.4;
  const double c512 = blahut_arimoto(discretize_channel(spec, grid, 512), opt).capacity_bits;
  const double c1024 = blahut_arimoto(discretize_channel(spec, grid, 1024), opt).capacity_bits;
  EXPECT_LT(std::abs(c512 - c1024), 1e-3);
}

TEST(BlahutArimoto, Errors) {
  DiscreteChannelMatrix bad;
  bad.transition = {{0.5, 0.4}};
  EXPECT_THROW(blahut_arimoto(bad), std::invalid_argument);
  BlahutArimotoOptions opt;
  opt.max_iters = 1;
  opt.tol = 1e-300;
  EXPECT_THROW(blahut_arimoto(discretize_channel(ChannelSpec::awgn_average_power(1, 1), {-1, 0, 1}), opt),
               std::runtime_error);
  BlahutArimotoOptions target;
  target.target_cost = 1.0;
  EXPECT_THROW(blahut_arimoto(bsc(0.1), target), std::invalid_argument);
}
