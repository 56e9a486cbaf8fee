#pragma once

// Input-conditioned Donsker-Varadhan divergence estimation.
//
// The statistics network T(y, x) sees the channel output and the channel input
// side by side in one row. For a fixed x,
//
//   D(x) = mean_i T(y_i, x) - log mean_i exp T(ytilde_i, x)
//
// with y_i drawn from the channel at x and ytilde_i from the reference law.
// Training pools the exponential term over all training inputs before taking
// the logarithm (arithmetic rather than geometric mean across inputs).

#include <chrono>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "dualcap/channels.hpp"
#include "dualcap/errors.hpp"
#include "dualcap/nn.hpp"
#include "dualcap/rng.hpp"

namespace dualcap {

struct StatNet {
  MlpParams net;
  int y_dim = 1;
  int x_dim = 1;
  Precision precision = Precision::f64;

  void validate() const {
    net.validate();
    detail::require(net.input_width() == y_dim + x_dim, "statnet: input width must equal dim(y) + dim(x)");
    detail::require(net.output_width() == 1 && net.output_activation == OutputActivation::linear,
                    "statnet: output must be a single linear unit");
  }
};

inline StatNet make_statnet(int y_dim, int x_dim, const std::vector<int>& hidden, std::uint64_t seed,
                            Precision precision = Precision::f64) {
  std::vector<int> sizes{y_dim + x_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  StatNet s{init_mlp(sizes, OutputActivation::linear, seed), y_dim, x_dim, precision};
  s.validate();
  return s;
}

inline Matrix statnet_eval(const StatNet& statnet, const Matrix& input) {
  return mlp_eval(statnet.net, input, statnet.precision);
}

inline BackwardPass statnet_gradient(const StatNet& statnet, const Matrix& input, const Matrix& d_out,
                                     BackwardTargets targets, Matrix* outputs = nullptr) {
  return mlp_gradient(statnet.net, input, d_out, targets, statnet.precision, outputs);
}

/// Rows [y_i, x] for every sample y_i.
inline Matrix joint_input(const Matrix& y, const RowVector& x) {
  Matrix j(y.rows(), y.cols() + x.size());
  j.leftCols(y.cols()) = y;
  j.rightCols(x.size()) = x.replicate(y.rows(), 1);
  return j;
}

/// log(mean(exp(v))) with the maximum shifted out.
inline double log_mean_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  detail::require(v.size() > 0, "log_mean_exp: empty input");
  if (!v.allFinite()) throw DivergenceError("log_mean_exp: non-finite network output");
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum() / static_cast<double>(v.size()));
}

struct DivergenceEstimate {
  RowVector x;
  double value = 0.0;  // nats; always term_positive - term_log
  std::size_t batch_size = 0;
  double term_positive = 0.0;
  double term_log = 0.0;
};

namespace detail {

inline DivergenceEstimate estimate_from_outputs(const RowVector& x, const Eigen::Ref<const Eigen::VectorXd>& t_pos,
                                                const Eigen::Ref<const Eigen::VectorXd>& t_ref) {
  if (!t_pos.allFinite() || !t_ref.allFinite()) throw DivergenceError("dv_estimate: non-finite network outputs");
  DivergenceEstimate e;
  e.x = x;
  e.batch_size = static_cast<std::size_t>(t_pos.size());
  e.term_positive = t_pos.mean();
  e.term_log = log_mean_exp(t_ref);
  e.value = e.term_positive - e.term_log;
  return e;
}

}  // namespace detail

inline DivergenceEstimate dv_estimate(const StatNet& statnet, const RowVector& x, const Matrix& y_samples,
                                      const Matrix& ref_samples) {
  detail::require(y_samples.rows() >= 1 && ref_samples.rows() >= 1, "dv_estimate: empty sample set");
  detail::require(x.size() == statnet.x_dim && y_samples.cols() == statnet.y_dim &&
                      ref_samples.cols() == statnet.y_dim,
                  "dv_estimate: sample dimension mismatch");
  const Matrix t_pos = statnet_eval(statnet, joint_input(y_samples, x));
  const Matrix t_ref = statnet_eval(statnet, joint_input(ref_samples, x));
  return detail::estimate_from_outputs(x, t_pos.col(0), t_ref.col(0));
}

/// Channel and reference samples for one training input.
struct InputBatch {
  RowVector x;
  Matrix y;
  Matrix ref;
};

namespace detail {

inline Eigen::Index check_batches(const StatNet& statnet, std::span<const InputBatch> batches) {
  require(!batches.empty(), "dv loss: no input batches");
  const Eigen::Index b = batches.front().y.rows();
  require(b >= 1, "dv loss: empty sample set");
  for (const auto& ib : batches) {
    require(ib.y.rows() == b && ib.ref.rows() == b, "dv loss: inconsistent batch sizes across inputs");
    require(ib.x.size() == statnet.x_dim && ib.y.cols() == statnet.y_dim && ib.ref.cols() == statnet.y_dim,
            "dv loss: sample dimension mismatch");
  }
  return b;
}

// All channel rows first (input-major), then all reference rows.
inline Matrix stack_joint_inputs(const StatNet& statnet, std::span<const InputBatch> batches, Eigen::Index b) {
  const auto n = static_cast<Eigen::Index>(batches.size());
  Matrix all(2 * n * b, statnet.y_dim + statnet.x_dim);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& ib = batches[static_cast<std::size_t>(j)];
    all.middleRows(j * b, b) = joint_input(ib.y, ib.x);
    all.middleRows((n + j) * b, b) = joint_input(ib.ref, ib.x);
  }
  return all;
}

}  // namespace detail

struct AvgLoss {
  double loss = 0.0;
  MlpGradients gradients;  // dL/dtheta; empty when not requested
};

/// L = -mean_{i,j} T(y_ij, x_j) + log mean_{i,j} exp T(ytilde_ij, x_j), pooled over all inputs.
inline AvgLoss avg_dv_loss(const StatNet& statnet, std::span<const InputBatch> batches, bool with_gradient = true) {
  const Eigen::Index b = detail::check_batches(statnet, batches);
  const Eigen::Index half = static_cast<Eigen::Index>(batches.size()) * b;
  const Matrix all = detail::stack_joint_inputs(statnet, batches, b);
  // The reference outputs fix the log-mean-exp weights. The channel rows only
  // need one forward pass, which the gradient pass provides.
  const Matrix t_ref_m = statnet_eval(statnet, all.bottomRows(half));
  const auto t_ref = t_ref_m.col(0);
  if (!t_ref.allFinite()) throw DivergenceError("dv loss: non-finite network outputs");
  AvgLoss out;
  if (!with_gradient) {
    const Matrix t_pos = statnet_eval(statnet, all.topRows(half));
    if (!t_pos.allFinite()) throw DivergenceError("dv loss: non-finite network outputs");
    out.loss = -t_pos.col(0).mean() + log_mean_exp(t_ref);
    return out;
  }

  Matrix dt(all.rows(), 1);
  dt.col(0).head(half).setConstant(-1.0 / static_cast<double>(half));
  // d/dT_k log mean exp T = exp(T_k) / sum exp T
  const double m = t_ref.maxCoeff();
  Eigen::VectorXd w = (t_ref.array() - m).exp();
  w /= w.sum();
  dt.col(0).tail(half) = w;
  Matrix t_all;
  out.gradients = statnet_gradient(statnet, all, dt, BackwardTargets::parameters, &t_all).gradients;
  const auto t_pos = t_all.col(0).head(half);
  if (!t_pos.allFinite()) throw DivergenceError("dv loss: non-finite network outputs");
  out.loss = -t_pos.mean() + log_mean_exp(t_ref);
  return out;
}

/// Per-input estimates for several inputs in one batched evaluation.
inline std::vector<DivergenceEstimate> per_input_estimates(const StatNet& statnet,
                                                           std::span<const InputBatch> batches) {
  const Eigen::Index b = detail::check_batches(statnet, batches);
  const auto n = static_cast<Eigen::Index>(batches.size());
  const Matrix t = statnet_eval(statnet, detail::stack_joint_inputs(statnet, batches, b));
  std::vector<DivergenceEstimate> est;
  est.reserve(batches.size());
  for (Eigen::Index j = 0; j < n; ++j)
    est.push_back(detail::estimate_from_outputs(batches[static_cast<std::size_t>(j)].x,
                                                t.col(0).segment(j * b, b), t.col(0).segment((n + j) * b, b)));
  return est;
}

struct LossTracePoint {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double wall_seconds = 0.0;
};

/// Produces `count` reference samples; called once per training input per iteration.
using ReferenceSampler = std::function<Matrix(Eigen::Index count, CounterRng& rng)>;

/// Owns a statistics network and its optimizer state across calls.
class StatNetTrainer {
 public:
  StatNetTrainer(StatNet statnet, double learning_rate)
      : statnet_(std::move(statnet)),
        adam_(AdamState::for_params(statnet_.net)),
        learning_rate_(learning_rate),
        start_(std::chrono::steady_clock::now()) {
    statnet_.validate();
    detail::require(learning_rate > 0.0, "statnet trainer: learning rate must be positive");
  }

  /// One descent step on the pooled loss; returns the loss before the update.
  double step(std::span<const InputBatch> batches) {
    AvgLoss l = avg_dv_loss(statnet_, batches, true);
    if (!std::isfinite(l.loss))
      throw DivergenceError("statnet training diverged at iteration " + std::to_string(iteration_ + 1));
    adam_step(statnet_.net, l.gradients, adam_, learning_rate_);
    ++iteration_;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    trace_.push_back({iteration_, l.loss, wall});
    return l.loss;
  }

  [[nodiscard]] const StatNet& statnet() const { return statnet_; }
  [[nodiscard]] const AdamState& optimizer() const { return adam_; }
  [[nodiscard]] const std::vector<LossTracePoint>& trace() const { return trace_; }
  [[nodiscard]] std::int64_t iterations() const { return iteration_; }

 private:
  StatNet statnet_;
  AdamState adam_;
  double learning_rate_;
  std::int64_t iteration_ = 0;
  std::vector<LossTracePoint> trace_;
  std::chrono::steady_clock::time_point start_;
};

/// Fresh channel and reference batches for every row of `grid`. Iteration `it`
/// uses substream (it), input j draws channel noise from 2j and references from 2j+1.
inline std::vector<InputBatch> draw_input_batches(const ChannelSpec& channel, const ReferenceSampler& ref_sampler,
                                                  const Matrix& grid, Eigen::Index batch_size,
                                                  const CounterRng& iteration_rng) {
  std::vector<InputBatch> batches;
  batches.reserve(static_cast<std::size_t>(grid.rows()));
  for (Eigen::Index j = 0; j < grid.rows(); ++j) {
    InputBatch ib;
    ib.x = grid.row(j);
    CounterRng ch = iteration_rng.substream(2 * static_cast<std::uint64_t>(j));
    CounterRng rf = iteration_rng.substream(2 * static_cast<std::uint64_t>(j) + 1);
    ib.y = channel_sample(channel, ib.x.replicate(batch_size, 1), ch).y;
    ib.ref = ref_sampler(batch_size, rf);
    batches.push_back(std::move(ib));
  }
  return batches;
}

struct StatNetTrainingResult {
  StatNet statnet;
  std::vector<LossTracePoint> trace;
};

/// Runs `iterations` Adam steps on the pooled loss with fresh samples each step.
inline StatNetTrainingResult train_statnet(StatNet statnet, const ChannelSpec& channel,
                                           const ReferenceSampler& ref_sampler, const Matrix& grid,
                                           Eigen::Index batch_size, double learning_rate, std::int64_t iterations,
                                           const CounterRng& rng) {
  detail::require(batch_size >= 2, "train_statnet: batch size must be at least 2");
  detail::require(grid.rows() >= 1 && grid.cols() == statnet.x_dim, "train_statnet: bad input grid");
  StatNetTrainer trainer(std::move(statnet), learning_rate);
  for (std::int64_t it = 0; it < iterations; ++it) {
    const auto batches =
        draw_input_batches(channel, ref_sampler, grid, batch_size, rng.substream(static_cast<std::uint64_t>(it)));
    trainer.step(batches);
  }
  return {trainer.statnet(), trainer.trace()};
}

}  // namespace dualcap
