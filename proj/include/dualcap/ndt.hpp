#pragma once

// Neural distribution transformer: maps latent Gaussian noise to reference
// samples on the channel output alphabet.
//
//   through_channel: z -> generator -> batch renormalization -> channel -> ytilde
//   direct:          z -> generator -> ytilde
//
// The through-channel variant only ever emits outputs of admissible inputs, and
// needs the channel's noise-frozen backward pass to be trained.

#include <algorithm>
#include <optional>

#include "dualcap/channels.hpp"
#include "dualcap/errors.hpp"
#include "dualcap/nn.hpp"
#include "dualcap/rng.hpp"

namespace dualcap {

enum class NdtMode : std::uint8_t { through_channel, direct };

inline std::string_view to_string(NdtMode m) { return m == NdtMode::through_channel ? "A" : "B"; }

struct NdtConfig {
  NdtMode mode = NdtMode::through_channel;
  int latent_dim = 50;
  MlpParams generator;
  ChannelSpec channel;
  Precision precision = Precision::f64;

  void validate() const {
    generator.validate();
    channel.validate();
    detail::require(latent_dim >= 1 && generator.input_width() == latent_dim,
                    "ndt: generator input width must equal the latent dimension");
    detail::require(generator.output_width() == channel.dim(),
                    "ndt: generator output width must equal the channel dimension");
  }
};

/// Output activation matching the channel's input alphabet: tanh(A) for
/// amplitude-limited AWGN, A*sigmoid for optical intensity, linear otherwise.
inline NdtConfig make_ndt(NdtMode mode, int latent_dim, const std::vector<int>& hidden, const ChannelSpec& channel,
                          std::uint64_t seed, Precision precision = Precision::f64) {
  std::vector<int> sizes{latent_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(channel.dim());
  OutputActivation act = OutputActivation::linear;
  double scale = 1.0;
  if (channel.family == ChannelFamily::awgn_amplitude) {
    act = OutputActivation::tanh;
    scale = *channel.amplitude_limit;
  } else if (channel.family == ChannelFamily::optical_intensity) {
    act = OutputActivation::sigmoid_scaled;
    scale = *channel.amplitude_limit;
  }
  NdtConfig cfg{mode, latent_dim, init_mlp(sizes, act, seed, scale), channel, precision};
  cfg.validate();
  return cfg;
}

inline Matrix sample_latent(Eigen::Index batch, int latent_dim, CounterRng& rng) {
  detail::require(batch >= 1 && latent_dim >= 1, "sample_latent: sizes must be positive");
  Matrix z(batch, latent_dim);
  rng.fill_normal(z.data(), static_cast<std::size_t>(z.size()));  // row-major: row by row
  return z;
}

// ---- batch renormalization ------------------------------------------------

/// c^{-1}(mean_i c(s_i) / P): the common divisor applied to the whole batch.
inline double renormalize_divisor(const Matrix& s, CostTag tag, double power) {
  detail::require(tag != CostTag::none, "renormalize: channel has no cost constraint");
  detail::require(power > 0.0, "renormalize: constraint level must be positive");
  detail::require(s.rows() >= 1, "renormalize: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) total += cost_value(tag, s.row(i).data(), static_cast<int>(s.cols()));
  const double mean_cost = total / static_cast<double>(s.rows());
  if (!(mean_cost > 0.0) || !std::isfinite(mean_cost))
    throw DivergenceError("renormalize: degenerate generator output (batch mean cost is not positive)");
  return cost_inverse(tag, mean_cost / power);
}

/// s_i / c^{-1}(mean_j c(s_j) / P); afterwards the batch mean cost equals P.
inline Matrix renormalize(const Matrix& s, CostTag tag, double power) {
  return s / renormalize_divisor(s, tag, power);
}

/// Vector-Jacobian product of renormalize(). The divisor depends on every row,
/// so each input row receives a contribution from every output row.
inline Matrix renormalize_backward(const Matrix& s, CostTag tag, double power, const Matrix& d_out) {
  detail::require(d_out.rows() == s.rows() && d_out.cols() == s.cols(), "renormalize_backward: shape mismatch");
  const double d = renormalize_divisor(s, tag, power);
  const double n = static_cast<double>(s.rows());
  // sum_i <g_i, s_i>
  const double coupling = (d_out.array() * s.array()).sum();
  Matrix ds = d_out / d;
  switch (tag) {
    case CostTag::square:
    case CostTag::square_magnitude: {
      // d = sqrt(m / P), dd/dm = 1 / (2 P d), dc/ds = 2 s
      const double k = coupling / (d * d) / (2.0 * power * d) / n;
      ds -= (2.0 * k) * s;
      break;
    }
    case CostTag::identity: {
      // d = m / P, dd/dm = 1 / P, dc/ds = 1
      const double k = coupling / (d * d) / power / n;
      ds.array() -= k;
      break;
    }
    case CostTag::none:
      break;
  }
  return ds;
}

// ---- generation -----------------------------------------------------------

struct NdtTape {
  NdtMode mode = NdtMode::direct;
  Matrix latent;         // z; the generator pass is recomputed from it on the way back
  Matrix raw;            // generator output s
  Matrix channel_input;  // after renormalization and clamping (through-channel only)
  Matrix clamp_mask;     // 1 where the entry passed through unclamped
  bool renormalized = false;
  NoiseRecord noise;
};

struct NdtSample {
  Matrix y;
  NdtTape tape;
};

namespace detail {

// Renormalization may push an entry past a peak-amplitude limit; such entries
// are clamped back onto the alphabet.
inline void clamp_to_alphabet(const ChannelSpec& ch, Matrix& x, Matrix& mask) {
  mask = Matrix::Ones(x.rows(), x.cols());
  if (!ch.amplitude_limit) return;
  const double hi = *ch.amplitude_limit;
  const double lo = ch.family == ChannelFamily::optical_intensity ? 0.0 : -hi;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double& v = x.data()[i];
    if (v > hi || v < lo) {
      v = std::clamp(v, lo, hi);
      mask.data()[i] = 0.0;
    }
  }
}

inline NdtSample ndt_run(const NdtConfig& ndt, Eigen::Index batch, const CounterRng& rng, bool record) {
  CounterRng latent_rng = rng.substream(0);
  CounterRng noise_rng = rng.substream(1);
  Matrix z = sample_latent(batch, ndt.latent_dim, latent_rng);
  NdtSample out;
  out.tape.mode = ndt.mode;
  Matrix s = mlp_eval(ndt.generator, z, ndt.precision);
  if (record) out.tape.latent = std::move(z);
  if (!s.allFinite()) throw DivergenceError("ndt: non-finite generator output");
  if (ndt.mode == NdtMode::direct) {
    out.y = s;
    if (record) out.tape.raw = std::move(s);
    return out;
  }
  const ChannelSpec& ch = ndt.channel;
  Matrix x;
  Matrix mask;
  out.tape.renormalized = ch.has_cost();
  x = ch.has_cost() ? renormalize(s, ch.cost, ch.constraint_level) : s;
  clamp_to_alphabet(ch, x, mask);
  ChannelOutput co = channel_sample(ch, x, noise_rng);
  out.y = std::move(co.y);
  if (record) {
    out.tape.raw = std::move(s);
    out.tape.channel_input = std::move(x);
    out.tape.clamp_mask = std::move(mask);
    out.tape.noise = std::move(co.record);
  }
  return out;
}

}  // namespace detail

/// Reference batch plus everything needed to differentiate it. The latent
/// draw uses substream 0 of `rng`, channel noise substream 1.
inline NdtSample ndt_generate(const NdtConfig& ndt, Eigen::Index batch, const CounterRng& rng) {
  return detail::ndt_run(ndt, batch, rng, true);
}

/// Same samples as ndt_generate() for the same `rng`, without a tape.
inline Matrix ndt_sample(const NdtConfig& ndt, Eigen::Index batch, const CounterRng& rng) {
  return detail::ndt_run(ndt, batch, rng, false).y;
}

/// Gradient of a loss with respect to the generator parameters, given dL/dytilde.
inline MlpGradients ndt_backward(const NdtConfig& ndt, const NdtTape& tape, const Matrix& d_y) {
  if (tape.mode != ndt.mode || tape.raw.rows() != d_y.rows() || tape.raw.cols() != d_y.cols() ||
      tape.latent.rows() != d_y.rows() || tape.latent.cols() != ndt.latent_dim)
    throw TapeMismatch("ndt_backward: tape does not match this generator or gradient");
  Matrix d_s;
  if (ndt.mode == NdtMode::direct) {
    d_s = d_y;
  } else {
    Matrix d_x = channel_backward(ndt.channel, tape.noise, d_y);
    d_x.array() *= tape.clamp_mask.array();
    d_s = tape.renormalized ? renormalize_backward(tape.raw, ndt.channel.cost, ndt.channel.constraint_level, d_x)
                            : std::move(d_x);
  }
  return mlp_gradient(ndt.generator, tape.latent, d_s, BackwardTargets::parameters, ndt.precision).gradients;
}

}  // namespace dualcap
