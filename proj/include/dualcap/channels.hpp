#pragma once

// Memoryless channel simulators. Complex channels carry (re, im) as two real
// columns. Each draw records its noise so the forward map can be replayed
// bit-exactly and differentiated with the noise held fixed.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "dualcap/errors.hpp"
#include "dualcap/nn.hpp"
#include "dualcap/rng.hpp"

namespace dualcap {

enum class ChannelFamily : std::uint8_t { awgn_avg_power, awgn_amplitude, optical_intensity, nlpn };
enum class CostTag : std::uint8_t { square, identity, square_magnitude, none };

inline std::string_view to_string(ChannelFamily f) {
  switch (f) {
    case ChannelFamily::awgn_avg_power: return "awgn_avg_power";
    case ChannelFamily::awgn_amplitude: return "awgn_amplitude";
    case ChannelFamily::optical_intensity: return "optical_intensity";
    case ChannelFamily::nlpn: return "nlpn";
  }
  return "?";
}

inline std::string_view to_string(CostTag c) {
  switch (c) {
    case CostTag::square: return "square";
    case CostTag::identity: return "identity";
    case CostTag::square_magnitude: return "square_magnitude";
    case CostTag::none: return "none";
  }
  return "?";
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double v) { return 10.0 * std::log10(v); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

/// Split-step parameters for the nonlinear phase-noise channel.
struct NlpnParams {
  int steps = 50;
  double nonlinearity = 1.27;   // rad / km / W
  double distance_km = 5000.0;
  double launch_power_w = 1.0;  // inputs are normalized by sqrt(launch power)
};

struct ChannelSpec {
  ChannelFamily family = ChannelFamily::awgn_avg_power;
  double noise_variance = 1.0;  // total noise power; watts for nlpn
  std::optional<double> amplitude_limit;
  CostTag cost = CostTag::square;
  double constraint_level = 1.0;
  NlpnParams nlpn;

  [[nodiscard]] int dim() const { return family == ChannelFamily::nlpn ? 2 : 1; }
  [[nodiscard]] bool has_cost() const { return cost != CostTag::none; }

  void validate() const {
    detail::require(noise_variance > 0.0 && std::isfinite(noise_variance),
                    "channel: noise variance must be positive");
    if (amplitude_limit) detail::require(*amplitude_limit > 0.0, "channel: amplitude limit must be positive");
    if (has_cost()) detail::require(constraint_level > 0.0, "channel: constraint level must be positive");
    switch (family) {
      case ChannelFamily::awgn_avg_power:
        detail::require(cost == CostTag::square, "channel: average-power AWGN uses the square cost");
        break;
      case ChannelFamily::awgn_amplitude:
        detail::require(amplitude_limit.has_value(), "channel: amplitude-limited AWGN needs an amplitude");
        detail::require(cost == CostTag::none, "channel: amplitude-limited AWGN has no cost constraint");
        break;
      case ChannelFamily::optical_intensity:
        detail::require(amplitude_limit.has_value(), "channel: optical intensity needs a peak amplitude");
        detail::require(cost == CostTag::identity, "channel: optical intensity uses the identity cost");
        break;
      case ChannelFamily::nlpn:
        detail::require(cost == CostTag::square_magnitude, "channel: nlpn uses the squared-magnitude cost");
        detail::require(nlpn.steps >= 1, "channel: nlpn needs at least one step");
        detail::require(nlpn.launch_power_w > 0.0, "channel: nlpn launch power must be positive");
        detail::require(std::isfinite(nlpn.nonlinearity) && nlpn.distance_km > 0.0,
                        "channel: bad nlpn fiber parameters");
        break;
    }
  }

  static ChannelSpec awgn_average_power(double noise_variance, double power = 1.0) {
    ChannelSpec s;
    s.family = ChannelFamily::awgn_avg_power;
    s.noise_variance = noise_variance;
    s.cost = CostTag::square;
    s.constraint_level = power;
    s.validate();
    return s;
  }

  static ChannelSpec awgn_amplitude(double noise_variance, double amplitude = 1.0) {
    ChannelSpec s;
    s.family = ChannelFamily::awgn_amplitude;
    s.noise_variance = noise_variance;
    s.amplitude_limit = amplitude;
    s.cost = CostTag::none;
    s.validate();
    return s;
  }

  static ChannelSpec optical_intensity(double noise_variance, double amplitude, double power) {
    ChannelSpec s;
    s.family = ChannelFamily::optical_intensity;
    s.noise_variance = noise_variance;
    s.amplitude_limit = amplitude;
    s.cost = CostTag::identity;
    s.constraint_level = power;
    s.validate();
    return s;
  }

  /// Renormalized NLPN channel: unit average cost on x / sqrt(launch power).
  static ChannelSpec nlpn_channel(double noise_variance_w, NlpnParams params) {
    ChannelSpec s;
    s.family = ChannelFamily::nlpn;
    s.noise_variance = noise_variance_w;
    s.cost = CostTag::square_magnitude;
    s.constraint_level = 1.0;
    s.nlpn = params;
    s.validate();
    return s;
  }
};

// ---- costs ----------------------------------------------------------------

inline double cost_value(CostTag tag, const double* x, int dim) {
  switch (tag) {
    case CostTag::square: return x[0] * x[0];
    case CostTag::identity: return x[0];
    case CostTag::square_magnitude: {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) s += x[i] * x[i];
      return s;
    }
    case CostTag::none: break;
  }
  throw std::invalid_argument("cost requested for an unconstrained channel");
}

inline double cost_inverse(CostTag tag, double value) {
  detail::require(value >= 0.0, "cost_inverse: value must be nonnegative");
  switch (tag) {
    case CostTag::square:
    case CostTag::square_magnitude: return std::sqrt(value);
    case CostTag::identity: return value;
    case CostTag::none: break;
  }
  throw std::invalid_argument("cost_inverse: unconstrained channel");
}

inline double cost_inverse(const ChannelSpec& spec, double value) { return cost_inverse(spec.cost, value); }

/// Cost of one input point (a row of `dim` reals).
inline double channel_cost(const ChannelSpec& spec, const RowVector& x) {
  if (!spec.has_cost()) throw std::invalid_argument("channel_cost: channel has no cost constraint");
  detail::require(x.size() == spec.dim(), "channel_cost: input dimension mismatch");
  return cost_value(spec.cost, x.data(), spec.dim());
}

inline Eigen::VectorXd channel_costs(const ChannelSpec& spec, const Matrix& x) {
  if (!spec.has_cost()) throw std::invalid_argument("channel_cost: channel has no cost constraint");
  detail::require(x.cols() == spec.dim(), "channel_cost: input dimension mismatch");
  Eigen::VectorXd c(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) c(i) = cost_value(spec.cost, x.row(i).data(), spec.dim());
  return c;
}

// ---- sampling -------------------------------------------------------------

struct NoiseRecord {
  ChannelFamily family = ChannelFamily::awgn_avg_power;
  Matrix input;
  Matrix noise;  // B x 1 for scalar channels; B x 2K (re, im per step) for nlpn
};

struct ChannelOutput {
  Matrix y;
  NoiseRecord record;
};

inline void check_admissible(const ChannelSpec& spec, const Matrix& x) {
  if (x.cols() != spec.dim())
    throw std::invalid_argument("channel: expected " + std::to_string(spec.dim()) + " input column(s), got " +
                                std::to_string(x.cols()));
  if (!x.allFinite()) throw AlphabetError("channel: non-finite input");
  switch (spec.family) {
    case ChannelFamily::awgn_amplitude:
      if (x.size() > 0 && x.cwiseAbs().maxCoeff() > *spec.amplitude_limit)
        throw AlphabetError("channel: input exceeds the amplitude limit");
      break;
    case ChannelFamily::optical_intensity:
      if (x.size() > 0 && (x.minCoeff() < 0.0 || x.maxCoeff() > *spec.amplitude_limit))
        throw AlphabetError("channel: optical intensity input outside [0, A]");
      break;
    default:
      break;
  }
}

namespace detail {

inline Matrix nlpn_propagate(const ChannelSpec& spec, const Matrix& x, const Matrix& noise) {
  const int steps = spec.nlpn.steps;
  const double kappa = spec.nlpn.nonlinearity * spec.nlpn.distance_km / steps;
  const double root_p = std::sqrt(spec.nlpn.launch_power_w);
  Matrix y(x.rows(), 2);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double a = root_p * x(r, 0);
    double b = root_p * x(r, 1);
    for (int k = 0; k < steps; ++k) {
      const double phase = kappa * (a * a + b * b);
      const double c = std::cos(phase);
      const double s = std::sin(phase);
      const double u = a * c - b * s;
      const double v = a * s + b * c;
      a = u + noise(r, 2 * k);
      b = v + noise(r, 2 * k + 1);
    }
    y(r, 0) = a / root_p;
    y(r, 1) = b / root_p;
  }
  return y;
}

}  // namespace detail

/// Draws one output per input row. Scalar families: y = x + z with z ~ N(0, sigma^2).
/// NLPN: K steps of X <- X exp(j kappa |X|^2) + N, N ~ CN(0, sigma^2 / K), on the
/// physical scale sqrt(P) * x.
inline ChannelOutput channel_sample(const ChannelSpec& spec, const Matrix& x, CounterRng& rng) {
  check_admissible(spec, x);
  ChannelOutput out;
  out.record.family = spec.family;
  out.record.input = x;
  if (spec.family == ChannelFamily::nlpn) {
    const int steps = spec.nlpn.steps;
    const double sd = std::sqrt(spec.noise_variance / (2.0 * steps));
    Matrix noise(x.rows(), 2 * steps);
    rng.fill_normal(noise.data(), static_cast<std::size_t>(noise.size()));
    noise *= sd;
    out.y = detail::nlpn_propagate(spec, x, noise);
    out.record.noise = std::move(noise);
  } else {
    const double sd = std::sqrt(spec.noise_variance);
    Matrix noise(x.rows(), 1);
    rng.fill_normal(noise.data(), static_cast<std::size_t>(noise.size()));
    noise *= sd;
    out.y = x + noise;
    out.record.noise = std::move(noise);
  }
  return out;
}

inline void check_record(const ChannelSpec& spec, const NoiseRecord& record) {
  if (record.family != spec.family) throw TapeMismatch("channel: noise record is from a different family");
  const Eigen::Index noise_cols = spec.family == ChannelFamily::nlpn ? 2 * spec.nlpn.steps : 1;
  if (record.input.cols() != spec.dim() || record.noise.cols() != noise_cols ||
      record.noise.rows() != record.input.rows())
    throw TapeMismatch("channel: noise record shape does not match the channel");
}

/// Forward map with the recorded noise held fixed.
inline Matrix channel_replay(const ChannelSpec& spec, const NoiseRecord& record) {
  check_record(spec, record);
  if (spec.family == ChannelFamily::nlpn) return detail::nlpn_propagate(spec, record.input, record.noise);
  return record.input + record.noise;
}

/// Jacobian-transpose product of the noise-frozen forward map.
inline Matrix channel_backward(const ChannelSpec& spec, const NoiseRecord& record, const Matrix& dy) {
  check_record(spec, record);
  if (dy.rows() != record.input.rows() || dy.cols() != spec.dim())
    throw TapeMismatch("channel_backward: gradient shape does not match the record");
  if (spec.family != ChannelFamily::nlpn) return dy;

  const int steps = spec.nlpn.steps;
  const double kappa = spec.nlpn.nonlinearity * spec.nlpn.distance_km / steps;
  const double root_p = std::sqrt(spec.nlpn.launch_power_w);
  Matrix dx(dy.rows(), 2);
  std::vector<double> traj(2 * static_cast<std::size_t>(steps));
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    double a = root_p * record.input(r, 0);
    double b = root_p * record.input(r, 1);
    for (int k = 0; k < steps; ++k) {
      traj[2 * k] = a;
      traj[2 * k + 1] = b;
      const double phase = kappa * (a * a + b * b);
      const double c = std::cos(phase);
      const double s = std::sin(phase);
      const double u = a * c - b * s;
      const double v = a * s + b * c;
      a = u + record.noise(r, 2 * k);
      b = v + record.noise(r, 2 * k + 1);
    }
    // Output is X_K / sqrt(P); input is sqrt(P) x.
    double ga = dy(r, 0) / root_p;
    double gb = dy(r, 1) / root_p;
    for (int k = steps; k-- > 0;) {
      const double xa = traj[2 * k];
      const double xb = traj[2 * k + 1];
      const double phase = kappa * (xa * xa + xb * xb);
      const double c = std::cos(phase);
      const double s = std::sin(phase);
      const double u = xa * c - xb * s;
      const double v = xa * s + xb * c;
      const double du_da = c - 2.0 * kappa * xa * v;
      const double du_db = -s - 2.0 * kappa * xb * v;
      const double dv_da = s + 2.0 * kappa * xa * u;
      const double dv_db = c + 2.0 * kappa * xb * u;
      const double na = ga * du_da + gb * dv_da;
      const double nb = ga * du_db + gb * dv_db;
      ga = na;
      gb = nb;
    }
    dx(r, 0) = root_p * ga;
    dx(r, 1) = root_p * gb;
  }
  return dx;
}

}  // namespace dualcap
