#pragma once

// Central finite-difference checks for every hand-written backward pass.
// The reference derivatives only ever call forward maps.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dualcap/channels.hpp"
#include "dualcap/divergence.hpp"
#include "dualcap/ndt.hpp"
#include "dualcap/nn.hpp"
#include "dualcap/rng.hpp"

namespace dualcap::gradcheck {

struct Report {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  [[nodiscard]] bool passed() const { return checked > 0 && max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// (f(x + h) - f(x - h)) / 2h for the scalar `slot`, restored afterwards.
inline double central_difference(const std::function<double()>& f, double& slot, double h) {
  const double saved = slot;
  slot = saved + h;
  const double up = f();
  slot = saved - h;
  const double down = f();
  slot = saved;
  return (up - down) / (2.0 * h);
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, CounterRng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.next_normal();
  return m;
}

/// Forward-mode tangent J v of the noise-frozen NLPN map, independent of
/// channel_backward; used for the dot-product adjoint test.
inline Matrix nlpn_tangent(const ChannelSpec& spec, const NoiseRecord& rec, const Matrix& v) {
  check_record(spec, rec);
  const double kappa = spec.nlpn.nonlinearity * spec.nlpn.distance_km / spec.nlpn.steps;
  const double rp = std::sqrt(spec.nlpn.launch_power_w);
  Matrix out(v.rows(), 2);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    double a = rp * rec.input(r, 0), b = rp * rec.input(r, 1);
    double ta = rp * v(r, 0), tb = rp * v(r, 1);
    for (int k = 0; k < spec.nlpn.steps; ++k) {
      const double phi = kappa * (a * a + b * b);
      const double dphi = 2.0 * kappa * (a * ta + b * tb);
      const double c = std::cos(phi), s = std::sin(phi);
      const double na = a * c - b * s;
      const double nb = a * s + b * c;
      const double nta = ta * c - tb * s - nb * dphi;
      const double ntb = ta * s + tb * c + na * dphi;
      a = na + rec.noise(r, 2 * k);
      b = nb + rec.noise(r, 2 * k + 1);
      ta = nta;
      tb = ntb;
    }
    out(r, 0) = ta / rp;
    out(r, 1) = tb / rp;
  }
  return out;
}

/// Random network and batch; loss <G, output> with a random upstream G.
/// Checks every weight, bias and input entry.
inline Report mlp(const std::vector<int>& sizes, OutputActivation act, std::uint64_t seed, Eigen::Index batch,
                  double h = 1e-5, double tolerance = 1e-5) {
  CounterRng rng(seed, {0x6C});
  MlpParams p = init_mlp(sizes, act, seed, act == OutputActivation::linear ? 1.0 : 1.5);
  for (auto& b : p.biases) b = random_matrix(1, b.size(), rng, 0.1);
  Matrix x = random_matrix(batch, sizes.front(), rng);
  const Matrix g = random_matrix(batch, sizes.back(), rng);

  const BackwardPass bp = mlp_backward(p, mlp_forward(p, x).tape, g);
  auto loss = [&] { return (mlp_eval(p, x).array() * g.array()).sum(); };

  Report r{"mlp", 0, 0.0, tolerance};
  auto check = [&](double analytic, double& slot) {
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, central_difference(loss, slot, h)));
    ++r.checked;
  };
  for (std::size_t k = 0; k < p.layer_count(); ++k) {
    for (Eigen::Index i = 0; i < p.weights[k].size(); ++i) check(bp.gradients.weights[k].data()[i], p.weights[k].data()[i]);
    for (Eigen::Index i = 0; i < p.biases[k].size(); ++i) check(bp.gradients.biases[k](i), p.biases[k](i));
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) check(bp.input_gradient.data()[i], x.data()[i]);
  return r;
}

/// Full Jacobian of the batch renormalization, including cross-sample terms.
inline Report renormalization(const Matrix& s0, CostTag tag, double power, double h = 1e-6,
                              double tolerance = 1e-6) {
  Matrix s = s0;
  Report r{"renormalization", 0, 0.0, tolerance};
  for (Eigen::Index out = 0; out < s.size(); ++out) {
    Matrix seed = Matrix::Zero(s.rows(), s.cols());
    seed.data()[out] = 1.0;
    const Matrix row = renormalize_backward(s, tag, power, seed);  // d out / d s
    auto f = [&] { return renormalize(s, tag, power).data()[out]; };
    for (Eigen::Index in = 0; in < s.size(); ++in) {
      const double numeric = central_difference(f, s.data()[in], h);
      r.max_rel_error = std::max(r.max_rel_error, relative_error(row.data()[in], numeric, 1e-9));
      ++r.checked;
    }
  }
  return r;
}

/// Jacobian-transpose of the noise-frozen channel against finite differences of the replayed forward map.
inline Report channel_jacobian(const ChannelSpec& spec, const Matrix& x0, std::uint64_t seed, double h = 1e-6,
                               double tolerance = 1e-6) {
  CounterRng rng(seed, {0xC4});
  ChannelOutput co = channel_sample(spec, x0, rng);
  NoiseRecord rec = co.record;
  const Matrix g = random_matrix(x0.rows(), x0.cols(), rng);
  const Matrix dx = channel_backward(spec, rec, g);
  auto loss = [&] { return (channel_replay(spec, rec).array() * g.array()).sum(); };
  Report r{"channel", 0, 0.0, tolerance};
  for (Eigen::Index i = 0; i < rec.input.size(); ++i) {
    const double numeric = central_difference(loss, rec.input.data()[i], h);
    r.max_rel_error = std::max(r.max_rel_error, relative_error(dx.data()[i], numeric));
    ++r.checked;
  }
  return r;
}

/// Generator -> renormalization -> channel (frozen noise) against finite
/// differences in every generator parameter. The loss is <G, ytilde>.
inline Report ndt_chain(NdtConfig ndt, Eigen::Index batch, std::uint64_t seed, double h = 1e-5,
                        double tolerance = 1e-4) {
  const CounterRng gen_rng(seed, {0xA7});
  CounterRng rng(seed, {0xA8});
  const NdtSample sample = ndt_generate(ndt, batch, gen_rng);
  const Matrix g = random_matrix(sample.y.rows(), sample.y.cols(), rng);
  const MlpGradients grads = ndt_backward(ndt, sample.tape, g);
  // ndt_sample replays the same latent and noise draws for the same rng.
  auto loss = [&] { return (ndt_sample(ndt, batch, gen_rng).array() * g.array()).sum(); };
  Report r{"ndt_chain", 0, 0.0, tolerance};
  for (std::size_t k = 0; k < ndt.generator.layer_count(); ++k) {
    for (Eigen::Index i = 0; i < ndt.generator.weights[k].size(); ++i) {
      const double numeric = central_difference(loss, ndt.generator.weights[k].data()[i], h);
      r.max_rel_error = std::max(r.max_rel_error, relative_error(grads.weights[k].data()[i], numeric));
      ++r.checked;
    }
    for (Eigen::Index i = 0; i < ndt.generator.biases[k].size(); ++i) {
      const double numeric = central_difference(loss, ndt.generator.biases[k](i), h);
      r.max_rel_error = std::max(r.max_rel_error, relative_error(grads.biases[k](i), numeric));
      ++r.checked;
    }
  }
  return r;
}

/// Pooled DV loss gradient in theta against finite differences.
inline Report dv_loss(const StatNet& net0, std::span<const InputBatch> batches, double h = 1e-5,
                      double tolerance = 1e-4) {
  StatNet net = net0;
  const AvgLoss l = avg_dv_loss(net, batches, true);
  auto loss = [&] { return avg_dv_loss(net, batches, false).loss; };
  Report r{"dv_loss", 0, 0.0, tolerance};
  for (std::size_t k = 0; k < net.net.layer_count(); ++k) {
    for (Eigen::Index i = 0; i < net.net.weights[k].size(); ++i) {
      const double numeric = central_difference(loss, net.net.weights[k].data()[i], h);
      r.max_rel_error = std::max(r.max_rel_error, relative_error(l.gradients.weights[k].data()[i], numeric));
      ++r.checked;
    }
    for (Eigen::Index i = 0; i < net.net.biases[k].size(); ++i) {
      const double numeric = central_difference(loss, net.net.biases[k](i), h);
      r.max_rel_error = std::max(r.max_rel_error, relative_error(l.gradients.biases[k](i), numeric));
      ++r.checked;
    }
  }
  return r;
}

/// Every check the library's backward passes are held to, with the tolerances
/// they are specified at.
inline std::vector<Report> standard_suite(std::uint64_t seed = 0) {
  std::vector<Report> out;
  auto named = [&](Report r, std::string name) {
    r.name = std::move(name);
    out.push_back(std::move(r));
  };
  named(mlp({2, 8, 1}, OutputActivation::linear, seed + 17, 4, 1e-5, 1e-5), "mlp [2,8,1]");
  named(mlp({2, 100, 100, 1}, OutputActivation::linear, seed + 1, 3, 1e-5, 1e-4), "mlp [2,100,100,1] linear");
  named(mlp({50, 100, 100, 1}, OutputActivation::tanh, seed + 2, 3, 1e-5, 1e-4), "mlp [50,100,100,1] tanh");
  named(mlp({50, 100, 100, 1}, OutputActivation::sigmoid_scaled, seed + 3, 3, 1e-5, 1e-4),
        "mlp [50,100,100,1] sigmoid");
  named(mlp({50, 150, 150, 2}, OutputActivation::linear, seed + 4, 2, 1e-5, 1e-4), "mlp [50,150,150,2] linear");
  named(mlp({4, 150, 150, 1}, OutputActivation::linear, seed + 5, 2, 1e-5, 1e-4), "mlp [4,150,150,1] linear");

  Matrix pair(2, 1);
  pair << 1.0, 3.0;
  named(renormalization(pair, CostTag::square, 1.0), "renormalization {1,3} square");
  CounterRng rng(seed, {0x4E});
  named(renormalization(random_matrix(6, 1, rng).cwiseAbs(), CostTag::identity, 1.0), "renormalization identity");
  named(renormalization(random_matrix(5, 2, rng), CostTag::square_magnitude, 0.7), "renormalization complex");

  NlpnParams np;
  np.launch_power_w = dbm_to_watts(-10.0);
  const ChannelSpec nlpn = ChannelSpec::nlpn_channel(dbm_to_watts(-21.3), np);
  named(channel_jacobian(nlpn, random_matrix(4, 2, rng), seed + 6), "nlpn frozen-noise jacobian");
  np.steps = 1;
  named(channel_jacobian(ChannelSpec::nlpn_channel(1e-30, np), random_matrix(1, 2, rng), seed + 7),
        "nlpn K=1 jacobian");

  named(ndt_chain(make_ndt(NdtMode::through_channel, 3, {6, 6}, ChannelSpec::awgn_average_power(0.5), seed + 8), 5,
                  seed + 9),
        "ndt chain awgn");
  named(ndt_chain(make_ndt(NdtMode::through_channel, 3, {6}, ChannelSpec::optical_intensity(0.3, 2.5, 1.0),
                           seed + 10),
                  5, seed + 11),
        "ndt chain optical intensity");
  np.steps = 50;
  named(ndt_chain(make_ndt(NdtMode::through_channel, 3, {6}, nlpn, seed + 12), 4, seed + 13), "ndt chain nlpn");

  const StatNet net = make_statnet(1, 1, {7, 7}, seed + 14);
  std::vector<InputBatch> batches;
  for (double x : {-0.5, 0.8}) {
    InputBatch ib;
    ib.x = RowVector::Constant(1, x);
    ib.y = random_matrix(6, 1, rng).array() + x;
    ib.ref = random_matrix(6, 1, rng, 1.4);
    batches.push_back(std::move(ib));
  }
  named(dv_loss(net, batches), "pooled dv loss");
  return out;
}

}  // namespace dualcap::gradcheck
