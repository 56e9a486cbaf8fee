#include <gtest/gtest.h>

#include <cmath>

#include "dualcap/gradcheck.hpp"
#include "dualcap/ndt.hpp"

using namespace dualcap;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double d : v) m(i++, 0) = d;
  return m;
}

double mean_cost(const Matrix& s, CostTag tag) {
  double t = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) t += cost_value(tag, s.row(i).data(), static_cast<int>(s.cols()));
  return t / static_cast<double>(s.rows());
}

// One-layer generator on a 1-d latent whose outputs on the batch drawn from `rng`
// are exactly `targets[0]` and `targets[1]`.
NdtConfig two_point_generator(NdtMode mode, const ChannelSpec& ch, const CounterRng& rng, double t0, double t1) {
  NdtConfig ndt{mode, 1, init_mlp({1, 1}, OutputActivation::linear, 0), ch};
  CounterRng latent = rng.substream(0);
  const Matrix z = sample_latent(2, 1, latent);
  const double w = (t1 - t0) / (z(1, 0) - z(0, 0));
  ndt.generator.weights[0] << w;
  ndt.generator.biases[0] << t0 - w * z(0, 0);
  return ndt;
}

}  // namespace

TEST(SampleLatent, Moments) {
  CounterRng rng(1);
  const Matrix z = sample_latent(1000000, 1, rng);
  const double mean = z.mean();
  EXPECT_LT(std::abs(mean), 4.0 / 1000.0);
  EXPECT_NEAR((z.array() - mean).square().mean(), 1.0, 0.01);
}

TEST(SampleLatent, DeterministicAndShaped) {
  CounterRng a(2), b(2);
  EXPECT_TRUE(sample_latent(3, 50, a) == sample_latent(3, 50, b));
  CounterRng c(3);
  const Matrix one = sample_latent(1, 50, c);
  EXPECT_EQ(one.rows(), 1);
  EXPECT_EQ(one.cols(), 50);
  EXPECT_TRUE(one.allFinite());
  EXPECT_THROW(sample_latent(0, 5, c), std::invalid_argument);
  EXPECT_THROW(sample_latent(5, 0, c), std::invalid_argument);
}

TEST(Renormalize, HandEvaluated) {
  const Matrix out = renormalize(column({1.0, 3.0}), CostTag::square, 1.0);
  EXPECT_NEAR(out(0, 0), 1.0 / std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(out(1, 0), 3.0 / std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(mean_cost(out, CostTag::square), 1.0, 1e-15);
}

TEST(Renormalize, FixedPoints) {
  const Matrix a = column({1.0, -1.0});
  EXPECT_EQ(renormalize_divisor(a, CostTag::square, 1.0), 1.0);
  EXPECT_TRUE(renormalize(a, CostTag::square, 1.0) == a);
  const Matrix b = column({0.5, 1.5});
  EXPECT_TRUE(renormalize(b, CostTag::identity, 1.0) == b);
}

TEST(Renormalize, MeanCostEqualsConstraint) {
  CounterRng rng(4);
  for (CostTag tag : {CostTag::square, CostTag::identity, CostTag::square_magnitude}) {
    const int dim = tag == CostTag::square_magnitude ? 2 : 1;
    for (double p : {0.01, 0.4, 1.0, 7.5}) {
      for (int trial = 0; trial < 20; ++trial) {
        Matrix s = gradcheck::random_matrix(257, dim, rng, 3.0);
        if (tag == CostTag::identity) s = s.cwiseAbs();
        const Matrix out = renormalize(s, tag, p);
        EXPECT_NEAR(mean_cost(out, tag), p, 1e-12 * p) << to_string(tag);
      }
    }
  }
}

TEST(Renormalize, ComplexScalesBothPartsTogether) {
  Matrix s(2, 2);
  s << 3, 4, 0, 1;
  const Matrix out = renormalize(s, CostTag::square_magnitude, 1.0);
  const double d = std::sqrt(13.0);
  EXPECT_TRUE(out.isApprox(s / d, 1e-15));
}

TEST(Renormalize, DegenerateBatch) {
  EXPECT_THROW(renormalize(Matrix::Zero(4, 1), CostTag::square, 1.0), DivergenceError);
  EXPECT_THROW(renormalize(column({1.0}), CostTag::none, 1.0), std::invalid_argument);
  EXPECT_THROW(renormalize(column({1.0}), CostTag::square, 0.0), std::invalid_argument);
}

TEST(RenormalizeBackward, HandBatchMatchesFiniteDifferences) {
  const gradcheck::Report r = gradcheck::renormalization(column({1.0, 3.0}), CostTag::square, 1.0);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
  EXPECT_EQ(r.checked, 4u);
}

TEST(RenormalizeBackward, AllCostsMatchFiniteDifferences) {
  CounterRng rng(5);
  const Matrix sq = gradcheck::random_matrix(6, 1, rng);
  const Matrix id = gradcheck::random_matrix(6, 1, rng).cwiseAbs();
  const Matrix cx = gradcheck::random_matrix(5, 2, rng);
  EXPECT_TRUE(gradcheck::renormalization(sq, CostTag::square, 0.7).passed());
  EXPECT_TRUE(gradcheck::renormalization(id, CostTag::identity, 0.4).passed());
  EXPECT_TRUE(gradcheck::renormalization(cx, CostTag::square_magnitude, 1.0).passed());
}

TEST(RenormalizeBackward, CrossSampleCoupling) {
  const Matrix s = column({1.0, 3.0, -0.5});
  Matrix seed = Matrix::Zero(3, 1);
  seed(2, 0) = 1.0;  // gradient of output 2 only
  const Matrix g = renormalize_backward(s, CostTag::square, 1.0, seed);
  EXPECT_NE(g(0, 0), 0.0);
  EXPECT_NE(g(1, 0), 0.0);
}

TEST(MakeNdt, OutputActivationFollowsChannel) {
  EXPECT_EQ(make_ndt(NdtMode::through_channel, 5, {8}, ChannelSpec::awgn_average_power(1, 1), 0)
                .generator.output_activation,
            OutputActivation::linear);
  const NdtConfig amp = make_ndt(NdtMode::through_channel, 5, {8}, ChannelSpec::awgn_amplitude(1, 1.5), 0);
  EXPECT_EQ(amp.generator.output_activation, OutputActivation::tanh);
  EXPECT_EQ(amp.generator.output_scale, 1.5);
  const NdtConfig oi = make_ndt(NdtMode::through_channel, 5, {8}, ChannelSpec::optical_intensity(1, 2.0, 0.8), 0);
  EXPECT_EQ(oi.generator.output_activation, OutputActivation::sigmoid_scaled);
  EXPECT_EQ(oi.generator.output_scale, 2.0);
  NlpnParams p;
  EXPECT_EQ(make_ndt(NdtMode::through_channel, 50, {100, 100}, ChannelSpec::nlpn_channel(1e-5, p), 0)
                .generator.output_width(),
            2);
}

TEST(NdtGenerate, DirectConstantGenerator) {
  NdtConfig ndt = make_ndt(NdtMode::direct, 6, {8, 8}, ChannelSpec::awgn_average_power(1, 1), 3);
  ndt.generator.weights.back().setZero();
  ndt.generator.biases.back() << 0.75;
  const NdtSample s = ndt_generate(ndt, 20, CounterRng(1));
  EXPECT_TRUE((s.y.array() == 0.75).all());
}

TEST(NdtGenerate, ThroughChannelRenormalizes) {
  const auto ch = ChannelSpec::awgn_average_power(1e-30, 1.0);
  const CounterRng rng(9);
  const NdtConfig ndt = two_point_generator(NdtMode::through_channel, ch, rng, 1.0, 3.0);
  const NdtSample s = ndt_generate(ndt, 2, rng);
  EXPECT_NEAR(s.tape.raw(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s.tape.raw(1, 0), 3.0, 1e-12);
  EXPECT_NEAR(s.y(0, 0), 1.0 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(s.y(1, 0), 3.0 / std::sqrt(5.0), 1e-12);
}

TEST(NdtGenerate, AmplitudeChannelInputsStayInside) {
  const auto ch = ChannelSpec::awgn_amplitude(0.5, 1.0);
  NdtConfig ndt = make_ndt(NdtMode::through_channel, 10, {16, 16}, ch, 4);
  for (auto& w : ndt.generator.weights) w *= 20.0;  // saturate the tanh
  const NdtSample s = ndt_generate(ndt, 500, CounterRng(2));
  EXPECT_FALSE(s.tape.renormalized);
  EXPECT_LT(s.tape.channel_input.cwiseAbs().maxCoeff(), 1.0);
}

TEST(NdtGenerate, OpticalIntensityInputsInAlphabet) {
  const auto ch = ChannelSpec::optical_intensity(0.1, 1.0, 0.4);
  NdtConfig ndt = make_ndt(NdtMode::through_channel, 10, {16, 16}, ch, 5);
  const NdtSample s = ndt_generate(ndt, 500, CounterRng(3));
  EXPECT_TRUE(s.tape.renormalized);
  EXPECT_GE(s.tape.channel_input.minCoeff(), 0.0);
  EXPECT_LE(s.tape.channel_input.maxCoeff(), 1.0);
}

TEST(NdtGenerate, AverageCostAfterRenormalization) {
  const auto ch = ChannelSpec::awgn_average_power(1.0, 3.16);
  const NdtConfig ndt = make_ndt(NdtMode::through_channel, 50, {100, 100}, ch, 6);
  const NdtSample s = ndt_generate(ndt, 2000, CounterRng(4));
  EXPECT_NEAR(mean_cost(s.tape.channel_input, CostTag::square), 3.16, 1e-12 * 3.16);
}

TEST(NdtGenerate, DeterministicBothModes) {
  const auto ch = ChannelSpec::awgn_average_power(1.0, 1.0);
  for (NdtMode m : {NdtMode::through_channel, NdtMode::direct}) {
    const NdtConfig ndt = make_ndt(m, 8, {16}, ch, 7);
    const NdtSample a = ndt_generate(ndt, 100, CounterRng(5));
    const NdtSample b = ndt_generate(ndt, 100, CounterRng(5));
    EXPECT_TRUE(a.y == b.y);
    EXPECT_TRUE(ndt_sample(ndt, 100, CounterRng(5)) == a.y);
    EXPECT_FALSE(ndt_sample(ndt, 100, CounterRng(6)) == a.y);
  }
}

TEST(NdtBackward, DirectModeIsGeneratorBackward) {
  const NdtConfig ndt = make_ndt(NdtMode::direct, 4, {8}, ChannelSpec::awgn_average_power(1, 1), 8);
  const NdtSample s = ndt_generate(ndt, 16, CounterRng(6));
  CounterRng rng(7);
  const Matrix g = gradcheck::random_matrix(16, 1, rng);
  const MlpGradients a = ndt_backward(ndt, s.tape, g);
  const MlpGradients b =
      mlp_backward(ndt.generator, mlp_forward(ndt.generator, s.tape.latent).tape, g, BackwardTargets::parameters)
          .gradients;
  for (std::size_t k = 0; k < a.weights.size(); ++k) {
    EXPECT_TRUE(a.weights[k] == b.weights[k]);
    EXPECT_TRUE(a.biases[k] == b.biases[k]);
  }
}

TEST(NdtBackward, ChainMatchesFiniteDifferences) {
  for (const ChannelSpec& ch : {ChannelSpec::awgn_average_power(0.5, 1.0), ChannelSpec::awgn_amplitude(0.5, 1.0),
                                ChannelSpec::optical_intensity(0.5, 10.0, 0.4)}) {
    const NdtConfig ndt = make_ndt(NdtMode::through_channel, 3, {6, 5}, ch, 9);
    const gradcheck::Report r = gradcheck::ndt_chain(ndt, 8, 10);
    EXPECT_TRUE(r.passed()) << to_string(ch.family) << " " << r.max_rel_error;
  }
}

TEST(NdtBackward, NlpnChainMatchesFiniteDifferences) {
  NlpnParams p;
  p.steps = 50;
  p.launch_power_w = dbm_to_watts(-10.0);
  const auto ch = ChannelSpec::nlpn_channel(dbm_to_watts(-21.3), p);
  const NdtConfig ndt = make_ndt(NdtMode::through_channel, 3, {6, 5}, ch, 11);
  const gradcheck::Report r = gradcheck::ndt_chain(ndt, 6, 12);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(NdtBackward, TapeMismatch) {
  const auto ch = ChannelSpec::awgn_average_power(1, 1);
  const NdtConfig a = make_ndt(NdtMode::through_channel, 4, {8}, ch, 1);
  const NdtConfig b = make_ndt(NdtMode::direct, 4, {8}, ch, 1);
  const NdtSample s = ndt_generate(a, 10, CounterRng(0));
  EXPECT_THROW(ndt_backward(b, s.tape, Matrix::Zero(10, 1)), TapeMismatch);
  EXPECT_THROW(ndt_backward(a, s.tape, Matrix::Zero(9, 1)), TapeMismatch);
}
