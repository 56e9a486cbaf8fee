#pragma once

// Reference values: closed-form Gaussian quantities, output discretization of
// additive-Gaussian channels, and cost-constrained Blahut-Arimoto.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "dualcap/channels.hpp"
#include "dualcap/errors.hpp"

namespace dualcap {

/// KL( N(mu1, var1) || N(mu2, var2) ) in nats.
inline double gaussian_kl(double mu1, double var1, double mu2, double var2) {
  detail::require(var1 > 0.0 && var2 > 0.0, "gaussian_kl: variances must be positive");
  return 0.5 * std::log(var2 / var1) + (var1 + (mu1 - mu2) * (mu1 - mu2)) / (2.0 * var2) - 0.5;
}

/// 0.5 log2(1 + snr), bits per channel use.
inline double awgn_capacity(double snr) {
  detail::require(snr >= 0.0, "awgn_capacity: snr must be nonnegative");
  return 0.5 * std::log2(1.0 + snr);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

struct DiscreteChannelMatrix {
  std::vector<double> inputs;        // N_d input points
  std::vector<double> output_centers;  // N_o bin centers (empty for abstract channels)
  std::vector<std::vector<double>> transition;  // W[j][k] = P(bin k | input j)
  std::vector<double> costs;         // per-input cost; empty when unconstrained

  [[nodiscard]] std::size_t input_count() const { return transition.size(); }
  [[nodiscard]] std::size_t output_count() const { return transition.empty() ? 0 : transition.front().size(); }

  void validate() const {
    detail::require(!transition.empty(), "channel matrix: no inputs");
    const std::size_t n_o = transition.front().size();
    detail::require(n_o >= 1, "channel matrix: no outputs");
    detail::require(costs.empty() || costs.size() == transition.size(), "channel matrix: cost vector size mismatch");
    for (const auto& row : transition) {
      detail::require(row.size() == n_o, "channel matrix: ragged rows");
      double s = 0.0;
      for (double w : row) {
        detail::require(w >= 0.0, "channel matrix: negative transition probability");
        s += w;
      }
      detail::require(std::abs(s - 1.0) <= 1e-9, "channel matrix: row does not sum to one");
    }
  }
};

/// Uniform output bins over [lo, hi]; the two outermost bins absorb the tails,
/// and the last bin takes whatever the others leave so each row sums to one.
inline DiscreteChannelMatrix discretize_channel(const ChannelSpec& spec, const std::vector<double>& input_grid,
                                                double lo, double hi, int bins) {
  detail::require(spec.family == ChannelFamily::awgn_avg_power || spec.family == ChannelFamily::awgn_amplitude ||
                      spec.family == ChannelFamily::optical_intensity,
                  "discretize_channel: only additive Gaussian scalar channels are supported");
  detail::require(bins >= 8, "discretize_channel: need at least 8 output bins");
  detail::require(lo < hi && !input_grid.empty(), "discretize_channel: bad output range or empty grid");
  const double sigma = std::sqrt(spec.noise_variance);
  const double width = (hi - lo) / bins;

  DiscreteChannelMatrix m;
  m.inputs = input_grid;
  for (int k = 0; k < bins; ++k) m.output_centers.push_back(lo + (k + 0.5) * width);
  for (double x : input_grid) {
    std::vector<double> row(static_cast<std::size_t>(bins));
    double prev = 0.0;  // CDF at the left edge of bin k, with the left tail folded in
    double total = 0.0;
    for (int k = 0; k + 1 < bins; ++k) {
      const double edge = lo + (k + 1) * width;
      const double cdf = normal_cdf((edge - x) / sigma);
      row[static_cast<std::size_t>(k)] = cdf - prev;
      total += cdf - prev;
      prev = cdf;
    }
    row.back() = 1.0 - total;
    m.transition.push_back(std::move(row));
  }
  if (spec.has_cost())
    for (double x : input_grid) m.costs.push_back(cost_value(spec.cost, &x, 1));
  return m;
}

/// Discretization with the default output range: 6 sigma beyond the grid extremes.
inline DiscreteChannelMatrix discretize_channel(const ChannelSpec& spec, const std::vector<double>& input_grid,
                                                int bins = 512) {
  detail::require(!input_grid.empty(), "discretize_channel: empty grid");
  const auto [mn, mx] = std::minmax_element(input_grid.begin(), input_grid.end());
  const double six_sigma = 6.0 * std::sqrt(spec.noise_variance);
  return discretize_channel(spec, input_grid, *mn - six_sigma, *mx + six_sigma, bins);
}

struct BlahutArimotoOptions {
  double gamma = 0.0;                    // cost multiplier (used when target_cost is empty)
  std::optional<double> target_cost;     // solve for the multiplier that meets this mean cost
  double tol = 1e-9;                     // stop when the objective gains less than this (bits)
  int max_iters = 100000;
  double cost_tol = 1e-4;                // |mean cost - target| at the returned multiplier
};

struct BlahutArimotoResult {
  double capacity_bits = 0.0;       // I(X;Y) at the returned input distribution
  std::vector<double> input_distribution;
  double gamma = 0.0;
  double mean_cost = 0.0;
  int iterations = 0;
  std::vector<double> objective_trace;  // I - gamma E[c] (bits) after each update
};

namespace detail {

// Per-input divergence D(W_j || q) in bits, q = p W. `neg_entropy[j]` is
// sum_k W_jk log2 W_jk, which does not change across iterations.
inline std::vector<double> ba_divergences(const DiscreteChannelMatrix& m, const std::vector<double>& neg_entropy,
                                          const std::vector<double>& p) {
  const std::size_t n_o = m.output_count();
  std::vector<double> log_q(n_o, 0.0);
  for (std::size_t j = 0; j < m.input_count(); ++j)
    for (std::size_t k = 0; k < n_o; ++k) log_q[k] += p[j] * m.transition[j][k];
  for (double& v : log_q) v = v > 0.0 ? std::log2(v) : 0.0;
  std::vector<double> d(m.input_count(), 0.0);
  for (std::size_t j = 0; j < m.input_count(); ++j) {
    double cross = 0.0;
    for (std::size_t k = 0; k < n_o; ++k) cross += m.transition[j][k] * log_q[k];
    d[j] = neg_entropy[j] - cross;
  }
  return d;
}

inline std::vector<double> ba_neg_entropies(const DiscreteChannelMatrix& m) {
  std::vector<double> h(m.input_count(), 0.0);
  for (std::size_t j = 0; j < m.input_count(); ++j)
    for (double w : m.transition[j])
      if (w > 0.0) h[j] += w * std::log2(w);
  return h;
}

inline BlahutArimotoResult ba_fixed_gamma(const DiscreteChannelMatrix& m, double gamma, double tol, int max_iters) {
  const std::size_t n = m.input_count();
  const bool has_cost = !m.costs.empty();
  std::vector<double> p(n, 1.0 / static_cast<double>(n));
  BlahutArimotoResult res;
  res.gamma = gamma;
  auto objective = [&](const std::vector<double>& d) {
    double obj = 0.0;
    for (std::size_t j = 0; j < n; ++j) obj += p[j] * (d[j] - (has_cost ? gamma * m.costs[j] : 0.0));
    return obj;
  };
  const std::vector<double> neg_entropy = ba_neg_entropies(m);
  std::vector<double> d = ba_divergences(m, neg_entropy, p);
  double prev = objective(d);
  bool converged = false;
  for (int it = 1; it <= max_iters; ++it) {
    // p_j <- p_j 2^{D_j - gamma c_j} / normalizer   (gamma is in bits per unit cost)
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] *= std::exp2(d[j] - (has_cost ? gamma * m.costs[j] : 0.0));
      z += p[j];
    }
    for (double& v : p) v /= z;
    d = ba_divergences(m, neg_entropy, p);
    const double obj = objective(d);
    res.objective_trace.push_back(obj);
    res.iterations = it;
    if (obj - prev < tol) {
      converged = true;
      break;
    }
    prev = obj;
  }
  if (!converged) throw std::runtime_error("blahut_arimoto: no convergence within max_iters");
  double mi = 0.0;
  double mean_cost = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    mi += p[j] * d[j];
    if (has_cost) mean_cost += p[j] * m.costs[j];
  }
  res.capacity_bits = mi;
  res.mean_cost = mean_cost;
  res.input_distribution = std::move(p);
  return res;
}

}  // namespace detail

/// Blahut-Arimoto with exponential cost weighting. With a target cost the
/// multiplier is found by bisection (mean cost decreases in gamma); if the
/// unconstrained optimum already meets the target, gamma stays 0.
inline BlahutArimotoResult blahut_arimoto(const DiscreteChannelMatrix& m, const BlahutArimotoOptions& opt = {}) {
  m.validate();
  detail::require(opt.tol > 0.0 && opt.max_iters >= 1, "blahut_arimoto: bad tolerance or iteration limit");
  detail::require(opt.gamma >= 0.0, "blahut_arimoto: gamma must be nonnegative");
  if (!opt.target_cost) return detail::ba_fixed_gamma(m, opt.gamma, opt.tol, opt.max_iters);

  detail::require(!m.costs.empty(), "blahut_arimoto: target cost given for a channel without costs");
  const double target = *opt.target_cost;
  BlahutArimotoResult at_zero = detail::ba_fixed_gamma(m, 0.0, opt.tol, opt.max_iters);
  if (at_zero.mean_cost <= target + opt.cost_tol) return at_zero;

  double lo = 0.0;
  double hi = 1.0;
  BlahutArimotoResult best = detail::ba_fixed_gamma(m, hi, opt.tol, opt.max_iters);
  for (int i = 0; best.mean_cost > target && i < 60; ++i) {
    lo = hi;
    hi *= 2.0;
    best = detail::ba_fixed_gamma(m, hi, opt.tol, opt.max_iters);
  }
  for (int i = 0; i < 200 && std::abs(best.mean_cost - target) > opt.cost_tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    best = detail::ba_fixed_gamma(m, mid, opt.tol, opt.max_iters);
    (best.mean_cost > target ? lo : hi) = mid;
  }
  if (std::abs(best.mean_cost - target) > opt.cost_tol)
    throw std::runtime_error("blahut_arimoto: could not meet the target cost");
  return best;
}

}  // namespace dualcap
