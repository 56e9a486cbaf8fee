#pragma once

// Dual capacity estimation.
//
// For a multiplier gamma the estimator alternates between
//   * one ascent step of the statistics network on the pooled DV objective, and
//   * one descent step of the reference generator on
//       F(gamma) = max_j [ D(x_j) - gamma c(x_j) ],
// and reports F(gamma) + gamma P. The outer minimization over gamma is a
// golden-section search.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "dualcap/channels.hpp"
#include "dualcap/divergence.hpp"
#include "dualcap/errors.hpp"
#include "dualcap/ndt.hpp"
#include "dualcap/nn.hpp"
#include "dualcap/rng.hpp"

namespace dualcap {

// ---- grids ----------------------------------------------------------------

/// n evenly spaced points on [lo, hi] as an n x 1 grid.
inline Matrix uniform_grid(double lo, double hi, int n) {
  detail::require(n >= 1 && lo <= hi, "uniform_grid: bad range");
  Matrix g(n, 1);
  for (int i = 0; i < n; ++i) g(i, 0) = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return g;
}

/// n x n product grid on [lo, hi]^2, rows (re, im), real part varying slowest.
inline Matrix uniform_grid_2d(double lo, double hi, int n) {
  const Matrix axis = uniform_grid(lo, hi, n);
  Matrix g(static_cast<Eigen::Index>(n) * n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      g(i * n + j, 0) = axis(i, 0);
      g(i * n + j, 1) = axis(j, 0);
    }
  return g;
}

// ---- configuration --------------------------------------------------------

struct ExperimentConfig {
  ChannelSpec channel;
  std::int64_t iterations = 500;
  Eigen::Index batch_size = 20000;
  Eigen::Index eval_batch_size = 0;  // 0: same as batch_size
  double learning_rate = 1e-3;
  double gamma = 0.0;
  Matrix train_grid;
  Matrix eval_grid;
  std::int64_t pretrain_iterations = 200;
  NdtMode ndt_mode = NdtMode::through_channel;
  int latent_dim = 50;
  std::vector<int> ndt_hidden{100, 100};
  std::vector<int> statnet_hidden{100, 100};
  Precision precision = Precision::f64;  // activations of both networks
  std::uint64_t seed = 0;

  [[nodiscard]] bool shared_grid() const {
    return train_grid.rows() == eval_grid.rows() && train_grid.cols() == eval_grid.cols() &&
           train_grid == eval_grid;
  }
  [[nodiscard]] Eigen::Index final_batch_size() const { return eval_batch_size > 0 ? eval_batch_size : batch_size; }

  void validate() const {
    channel.validate();
    detail::require(iterations >= 0, "config: iterations must be nonnegative");
    detail::require(pretrain_iterations >= 0, "config: pretrain iterations must be nonnegative");
    detail::require(batch_size >= 2, "config: batch size must be at least 2");
    detail::require(eval_batch_size == 0 || eval_batch_size >= 2, "config: evaluation batch size must be at least 2");
    detail::require(learning_rate > 0.0, "config: learning rate must be positive");
    detail::require(gamma >= 0.0, "config: gamma must be nonnegative");
    detail::require(channel.has_cost() || gamma == 0.0, "config: gamma must be 0 without a cost constraint");
    detail::require(latent_dim >= 1, "config: latent dimension must be positive");
    for (const Matrix* g : {&train_grid, &eval_grid}) {
      detail::require(g->rows() >= 1, "config: input grids must be nonempty");
      detail::require(g->cols() == channel.dim(), "config: grid dimension does not match the channel");
      check_admissible(channel, *g);
    }
  }
};

// ---- dual objective -------------------------------------------------------

struct FHatEval {
  double f_hat = 0.0;
  std::vector<double> values;  // D(x_j) - gamma c(x_j)
  std::vector<DivergenceEstimate> estimates;
  std::size_t argmax = 0;
};

inline Eigen::VectorXd grid_costs(const ChannelSpec& channel, const Matrix& grid) {
  return channel.has_cost() ? channel_costs(channel, grid) : Eigen::VectorXd::Zero(grid.rows());
}

/// max_j [D(x_j) - gamma c(x_j)] over already-drawn batches; ties go to the lowest index.
inline FHatEval evaluate_dual_objective(const StatNet& statnet, std::span<const InputBatch> batches,
                                        const Eigen::VectorXd& costs, double gamma) {
  detail::require(static_cast<Eigen::Index>(batches.size()) == costs.size(), "f_hat: one cost per input required");
  detail::require(gamma >= 0.0, "f_hat: gamma must be nonnegative");
  FHatEval out;
  out.estimates = per_input_estimates(statnet, batches);
  out.values.resize(out.estimates.size());
  for (std::size_t j = 0; j < out.estimates.size(); ++j) {
    out.values[j] = out.estimates[j].value - gamma * costs(static_cast<Eigen::Index>(j));
    if (!std::isfinite(out.values[j])) throw DivergenceError("f_hat: non-finite estimate");
    if (j == 0 || out.values[j] > out.values[out.argmax]) out.argmax = j;
  }
  out.f_hat = out.values[out.argmax];
  return out;
}

/// Draws fresh channel and reference batches for every point of `grid` and evaluates the objective.
inline FHatEval f_hat_eval(const StatNet& statnet, const NdtConfig& ndt, const ChannelSpec& channel,
                           const Matrix& grid, double gamma, Eigen::Index batch_size, const CounterRng& rng) {
  const ReferenceSampler ref = [&ndt](Eigen::Index count, CounterRng& r) { return ndt_sample(ndt, count, r); };
  const auto batches = draw_input_batches(channel, ref, grid, batch_size, rng);
  return evaluate_dual_objective(statnet, batches, grid_costs(channel, grid), gamma);
}

/// dF/dytilde for the maximizing input's reference batch: -softmax(T) * dT/dy.
inline Matrix f_hat_reference_gradient(const StatNet& statnet, const RowVector& x, const Matrix& ref) {
  const Matrix joint = joint_input(ref, x);
  const Matrix t_all = statnet_eval(statnet, joint);
  const auto t = t_all.col(0);
  Eigen::VectorXd w = (t.array() - t.maxCoeff()).exp();
  w /= w.sum();
  const Matrix dt = -w;
  const Matrix g = statnet_gradient(statnet, joint, dt, BackwardTargets::input).input_gradient;
  return g.leftCols(statnet.y_dim);
}

// ---- alternating training -------------------------------------------------

struct TraceRow {
  std::int64_t iteration = 0;
  bool pretrain = false;
  double loss_theta = 0.0;
  double f_hat = std::numeric_limits<double>::quiet_NaN();
  std::int64_t argmax = -1;
};

struct DualBoundEstimate {
  double gamma = 0.0;
  double f_hat = 0.0;          // nats
  double constraint_level = 0.0;
  double bound = 0.0;          // f_hat + gamma * P, nats
  std::size_t argmax = 0;
  RowVector x_star;
  std::vector<double> per_input_values;
  std::vector<DivergenceEstimate> per_input;
  std::vector<TraceRow> trace;
  StatNet statnet;        // networks the estimate was evaluated with
  MlpParams generator;

  [[nodiscard]] double bound_bits() const { return bound / std::numbers::ln2; }
};

/// Training state for one configuration. Copies are independent snapshots,
/// which is how probes at different multipliers share a pretrained start.
class AlternatingEstimator {
 public:
  explicit AlternatingEstimator(ExperimentConfig config)
      : config_(validated(std::move(config))),
        trainer_(make_statnet(config_.channel.dim(), config_.channel.dim(), config_.statnet_hidden,
                              splitmix64_mix(config_.seed ^ kStatNetInitTag), config_.precision),
                 config_.learning_rate),
        ndt_(make_ndt(config_.ndt_mode, config_.latent_dim, config_.ndt_hidden, config_.channel,
                      splitmix64_mix(config_.seed ^ kNdtInitTag), config_.precision)),
        ndt_adam_(AdamState::for_params(ndt_.generator)) {
    eval_costs_ = grid_costs(config_.channel, config_.eval_grid);
  }

  /// Statistics-network updates only, against the current reference generator.
  void pretrain() { pretrain(config_.pretrain_iterations); }

  void pretrain(std::int64_t iterations) {
    const CounterRng root = CounterRng(config_.seed).substream(kPretrainTag);
    for (std::int64_t it = 0; it < iterations; ++it) {
      const auto batches = draw_input_batches(config_.channel, reference_sampler(), config_.train_grid,
                                              config_.batch_size, root.substream(static_cast<std::uint64_t>(it)));
      const double loss = trainer_.step(batches);
      trace_.push_back({it + 1, true, loss, std::numeric_limits<double>::quiet_NaN(), -1});
    }
  }

  /// One round of: statnet ascent on the pooled loss, generator descent on F(gamma).
  void alternate_once(std::int64_t iteration, double gamma) {
    const CounterRng it_rng = CounterRng(config_.seed).substream(kAlternateTag).substream(
        static_cast<std::uint64_t>(iteration));
    const CounterRng train_rng = it_rng.substream(0);
    const auto train_batches =
        draw_input_batches(config_.channel, reference_sampler(), config_.train_grid, config_.batch_size, train_rng);
    const double loss = trainer_.step(train_batches);

    // With identical grids the training draws are reused; the generator has not moved since.
    const bool reuse = config_.shared_grid();
    const CounterRng eval_rng = reuse ? train_rng : it_rng.substream(1);
    std::vector<InputBatch> fresh;
    if (!reuse)
      fresh = draw_input_batches(config_.channel, reference_sampler(), config_.eval_grid, config_.batch_size,
                                 eval_rng);
    const std::span<const InputBatch> eval_batches = reuse ? std::span<const InputBatch>(train_batches)
                                                           : std::span<const InputBatch>(fresh);
    const FHatEval fe = evaluate_dual_objective(trainer_.statnet(), eval_batches, eval_costs_, gamma);

    // Only the maximizing input's term carries gradient; regenerate its
    // reference batch from the same substream, this time with a tape.
    const std::size_t j = fe.argmax;
    const NdtSample gen =
        ndt_generate(ndt_, config_.batch_size, eval_rng.substream(2 * static_cast<std::uint64_t>(j) + 1));
    const Matrix d_ref = f_hat_reference_gradient(trainer_.statnet(), eval_batches[j].x, gen.y);
    const MlpGradients g = ndt_backward(ndt_, gen.tape, d_ref);
    adam_step(ndt_.generator, g, ndt_adam_, config_.learning_rate);

    trace_.push_back({iteration + 1, false, loss, fe.f_hat, static_cast<std::int64_t>(j)});
  }

  /// M alternations at `gamma` followed by a fresh evaluation batch.
  DualBoundEstimate run(double gamma) {
    detail::require(gamma >= 0.0, "run: gamma must be nonnegative");
    detail::require(config_.channel.has_cost() || gamma == 0.0, "run: gamma must be 0 without a cost constraint");
    for (std::int64_t it = 0; it < config_.iterations; ++it) alternate_once(it, gamma);
    return evaluate(gamma);
  }

  /// Final estimate from a fresh batch; does not touch the training state.
  [[nodiscard]] DualBoundEstimate evaluate(double gamma) const {
    const CounterRng rng = CounterRng(config_.seed).substream(kFinalTag);
    const FHatEval fe = f_hat_eval(trainer_.statnet(), ndt_, config_.channel, config_.eval_grid, gamma,
                                   config_.final_batch_size(), rng);
    DualBoundEstimate est;
    est.gamma = gamma;
    est.f_hat = fe.f_hat;
    est.constraint_level = config_.channel.has_cost() ? config_.channel.constraint_level : 0.0;
    est.bound = est.f_hat + gamma * est.constraint_level;
    est.argmax = fe.argmax;
    est.x_star = config_.eval_grid.row(static_cast<Eigen::Index>(fe.argmax));
    est.per_input_values = fe.values;
    est.per_input = fe.estimates;
    est.trace = trace_;
    est.statnet = trainer_.statnet();
    est.generator = ndt_.generator;
    return est;
  }

  [[nodiscard]] const ExperimentConfig& config() const { return config_; }
  [[nodiscard]] const StatNet& statnet() const { return trainer_.statnet(); }
  [[nodiscard]] const NdtConfig& ndt() const { return ndt_; }
  [[nodiscard]] const std::vector<TraceRow>& trace() const { return trace_; }

  [[nodiscard]] ReferenceSampler reference_sampler() const {
    return [this](Eigen::Index count, CounterRng& r) { return ndt_sample(ndt_, count, r); };
  }

 private:
  static ExperimentConfig validated(ExperimentConfig c) {
    c.validate();
    return c;
  }

  static constexpr std::uint64_t kStatNetInitTag = 0x5747A7ULL;
  static constexpr std::uint64_t kNdtInitTag = 0x0D7ULL;
  static constexpr std::uint64_t kPretrainTag = 1;
  static constexpr std::uint64_t kAlternateTag = 2;
  static constexpr std::uint64_t kFinalTag = 3;

  ExperimentConfig config_;
  StatNetTrainer trainer_;
  NdtConfig ndt_;
  AdamState ndt_adam_;
  Eigen::VectorXd eval_costs_;
  std::vector<TraceRow> trace_;
};

/// Pretraining, M alternations at config.gamma, then a fresh-batch evaluation.
inline DualBoundEstimate run_alternating(const ExperimentConfig& config) {
  AlternatingEstimator est(config);
  est.pretrain();
  return est.run(config.gamma);
}

// ---- outer search ---------------------------------------------------------

inline constexpr double kGoldenRatioConjugate = 0.6180339887498948482;  // (sqrt(5) - 1) / 2

struct GoldenSectionResult {
  double argmin = 0.0;
  double value = 0.0;
  bool converged = false;  // false when max_evals ran out first
  int evaluations = 0;
  std::vector<std::pair<double, double>> probes;  // (point, value) in evaluation order
  std::vector<double> bracket_widths;             // width before each contraction, then final
};

/// Golden-section minimization of a unimodal objective on [lo, hi]. Returns the
/// midpoint of the final bracket and its objective value.
template <typename Objective>
GoldenSectionResult golden_section_min(Objective&& objective, double lo, double hi, double tol, int max_evals) {
  detail::require(lo < hi, "golden_section_min: need lo < hi");
  detail::require(tol > 0.0, "golden_section_min: tol must be positive");
  detail::require(max_evals >= 3, "golden_section_min: need at least three evaluations");
  constexpr double r = kGoldenRatioConjugate;
  GoldenSectionResult res;
  auto eval = [&](double x) {
    const double v = objective(x);
    res.probes.emplace_back(x, v);
    ++res.evaluations;
    return v;
  };
  double a = lo;
  double b = hi;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  res.bracket_widths.push_back(b - a);
  res.converged = true;
  while (b - a > tol) {
    const bool keep_left = fc < fd;
    if (keep_left) {
      b = d;
      d = c;
      fd = fc;
    } else {
      a = c;
      c = d;
      fc = fd;
    }
    res.bracket_widths.push_back(b - a);
    if (b - a <= tol) break;
    if (res.evaluations + 2 > max_evals) {  // keep one evaluation for the midpoint
      res.converged = false;
      break;
    }
    if (keep_left) {
      c = b - r * (b - a);
      fc = eval(c);
    } else {
      d = a + r * (b - a);
      fd = eval(d);
    }
  }
  res.argmin = 0.5 * (a + b);
  res.value = eval(res.argmin);
  return res;
}

/// Search bracket [0, 2 C / P] with C the Gaussian-input capacity (nats) at the
/// configured signal-to-noise ratio.
inline std::pair<double, double> default_gamma_bracket(const ChannelSpec& ch) {
  detail::require(ch.has_cost(), "gamma bracket: channel has no cost constraint");
  double c_rough = 0.0;
  switch (ch.family) {
    case ChannelFamily::awgn_avg_power:
      c_rough = 0.5 * std::log1p(ch.constraint_level / ch.noise_variance);
      break;
    case ChannelFamily::optical_intensity:
      // E[X^2] <= A E[X] <= A P
      c_rough = 0.5 * std::log1p(*ch.amplitude_limit * ch.constraint_level / ch.noise_variance);
      break;
    case ChannelFamily::nlpn:
      c_rough = std::log1p(ch.nlpn.launch_power_w / ch.noise_variance);
      break;
    case ChannelFamily::awgn_amplitude:
      break;
  }
  return {0.0, 2.0 * c_rough / ch.constraint_level};
}

struct DualBoundSearch {
  DualBoundEstimate best;
  std::vector<DualBoundEstimate> probes;  // evaluation order
  std::optional<GoldenSectionResult> search;
};

/// Minimizes F(gamma) + gamma P over gamma. Every probe starts from the same
/// pretrained statistics network and initial generator. Channels without a
/// cost constraint get a single run at gamma = 0.
inline DualBoundSearch dual_bound(const ExperimentConfig& config, std::optional<std::pair<double, double>> bracket,
                                  double tol, int max_evals = 40) {
  AlternatingEstimator base(config);
  base.pretrain();
  DualBoundSearch out;
  if (!config.channel.has_cost()) {
    AlternatingEstimator probe = base;
    out.best = probe.run(0.0);
    out.probes.push_back(out.best);
    return out;
  }
  const auto [lo, hi] = bracket ? *bracket : default_gamma_bracket(config.channel);
  auto objective = [&](double gamma) {
    AlternatingEstimator probe = base;
    out.probes.push_back(probe.run(gamma));
    return out.probes.back().bound;
  };
  out.search = golden_section_min(objective, lo, hi, tol, max_evals);
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.probes.size(); ++i)
    if (out.probes[i].bound < out.probes[best].bound) best = i;
  out.best = out.probes[best];
  return out;
}

}  // namespace dualcap
