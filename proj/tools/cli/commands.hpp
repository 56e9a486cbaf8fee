#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cli/config.hpp"
#include "cli/output.hpp"
#include "dualcap/gradcheck.hpp"

namespace dualcap::cli {

struct Oracle {
  std::optional<double> bits;
  std::string kind;  // "awgn_capacity", "blahut_arimoto" or empty
};

/// Discretized channel on `ba.grid_points` inputs spanning the training grid.
inline DiscreteChannelMatrix ba_channel(const RunConfig& rc) {
  const ChannelSpec& ch = rc.experiment.channel;
  if (ch.family == ChannelFamily::nlpn) throw ConfigError("ba: the nlpn channel has no discretized baseline");
  const auto& g = rc.document["grid"]["train"];
  const Matrix grid = uniform_grid(g["lo"].get<double>(), g["hi"].get<double>(), rc.ba.grid_points);
  return discretize_channel(ch, std::vector<double>(grid.data(), grid.data() + grid.size()), rc.ba.bins);
}

inline BlahutArimotoResult run_ba(const RunConfig& rc) {
  BlahutArimotoOptions opt;
  opt.tol = rc.ba.tol;
  if (rc.experiment.channel.has_cost()) opt.target_cost = rc.experiment.channel.constraint_level;
  return blahut_arimoto(ba_channel(rc), opt);
}

inline Oracle oracle_for(const RunConfig& rc) {
  const ChannelSpec& ch = rc.experiment.channel;
  switch (rc.preset) {
    case Preset::awgn_avg: return {awgn_capacity(ch.constraint_level / ch.noise_variance), "awgn_capacity"};
    case Preset::awgn_amp:
    case Preset::oi: return {run_ba(rc).capacity_bits, "blahut_arimoto"};
    default: return {std::nullopt, ""};
  }
}

/// Golden-section search over gamma, or a single run when gamma is fixed
/// or the channel has no cost constraint.
inline DualBoundSearch estimate_bound(const RunConfig& rc) {
  if (!rc.search.gamma) return dual_bound(rc.experiment, rc.search.bracket, rc.search.tol, rc.search.max_evals);
  AlternatingEstimator est(rc.experiment);
  est.pretrain();
  DualBoundSearch out;
  out.best = est.run(*rc.search.gamma);
  out.probes.push_back(out.best);
  return out;
}

struct PointResult {
  double sweep_value = 0.0;
  RunConfig config;
  std::optional<DualBoundSearch> search;
  Oracle oracle;
  std::optional<double> reference;
  std::string status = "ok";
  double wall_seconds = 0.0;
};

inline double current_sweep_value(const RunConfig& rc) {
  const std::string var = sweep_variable(rc.preset);
  return var.empty() ? 0.0 : rc.document["channel"][var].get<double>();
}

inline PointResult run_point(const RunConfig& rc) {
  PointResult p;
  p.config = rc;
  p.sweep_value = current_sweep_value(rc);
  const auto t0 = std::chrono::steady_clock::now();
  p.search = estimate_bound(rc);
  p.oracle = oracle_for(rc);
  p.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return p;
}

/// Everything a command writes, as text.
struct Artifacts {
  std::string manifest;
  std::string trace;
  std::string results;
  std::string timing;
  std::string config;
};

inline void write_artifacts(const Artifacts& a, const std::filesystem::path& dir) {
  write_file(dir / "manifest.txt", a.manifest);
  write_file(dir / "trace.csv", a.trace);
  write_file(dir / "results.csv", a.results);
  write_file(dir / "timing.csv", a.timing);
  write_file(dir / "config.json", a.config);
}

namespace detail {

inline Manifest base_manifest(const std::string& command, const RunConfig& rc) {
  Manifest m;
  const std::string config = rc.document.dump();
  m.set("tool_version", kToolVersion);
  m.set("command", command);
  m.set("preset", rc.document["preset"].get<std::string>());
  m.set("seed", std::to_string(rc.seed()));
  m.set("precision", std::string(to_string(rc.experiment.precision)));
  m.set("config_sha1", git_blob_sha1(config));
  m.set("config", config);
  return m;
}

inline std::vector<std::string> x_cells(const RowVector& x) {
  return {fmt(x(0)), x.size() > 1 ? fmt(x(1)) : std::string()};
}

inline void finish(Artifacts& a, Manifest& m) {
  m.set("results_sha1", git_blob_sha1(a.results));
  m.set("trace_sha1", git_blob_sha1(a.trace));
  a.manifest = m.text();
}

}  // namespace detail

/// Results, trace and manifest for a list of evaluated sweep points.
inline Artifacts bound_artifacts(const std::string& command, const RunConfig& rc,
                                 const std::vector<PointResult>& points) {
  const std::string var = sweep_variable(rc.preset);
  CsvWriter results("results", {"preset", "sweep_variable", "sweep_value", "gamma", "bound_bits", "f_hat_nats",
                                "x_star_0", "x_star_1", "probes", "oracle_bits", "oracle_kind", "reference",
                                "seed", "status"});
  CsvWriter trace("trace", {"sweep_value", "probe", "gamma", "iteration", "phase", "loss_theta", "f_hat",
                            "argmax", "x_star_0", "x_star_1"});
  CsvWriter timing("timing", {"sweep_value", "wall_seconds"});
  Manifest m = detail::base_manifest(command, rc);
  const std::string preset = rc.document["preset"].get<std::string>();
  for (const PointResult& p : points) {
    const std::string sv = fmt(p.sweep_value);
    timing.row({sv, fmt(p.wall_seconds)});
    if (!p.search) {
      results.row({preset, var, sv, "", "", "", "", "", "0", fmt(p.oracle.bits), p.oracle.kind, fmt(p.reference),
                   std::to_string(p.config.seed()), p.status});
      continue;
    }
    const DualBoundEstimate& b = p.search->best;
    const auto xs = detail::x_cells(b.x_star);
    results.row({preset, var, sv, fmt(b.gamma), fmt(b.bound_bits()), fmt(b.f_hat), xs[0], xs[1],
                 std::to_string(p.search->probes.size()), fmt(p.oracle.bits), p.oracle.kind, fmt(p.reference),
                 std::to_string(p.config.seed()), p.status});
    const Matrix& grid = p.config.experiment.eval_grid;
    for (std::size_t k = 0; k < p.search->probes.size(); ++k) {
      const DualBoundEstimate& e = p.search->probes[k];
      for (const TraceRow& t : e.trace) {
        if (t.pretrain && k > 0) continue;  // every probe starts from the same pretraining
        std::vector<std::string> xc{"", ""};
        if (t.argmax >= 0) xc = detail::x_cells(grid.row(t.argmax));
        trace.row({sv, t.pretrain ? "" : std::to_string(k), t.pretrain ? "" : fmt(e.gamma),
                   std::to_string(t.iteration), t.pretrain ? "pretrain" : "alternate", fmt(t.loss_theta),
                   fmt(t.f_hat), t.argmax >= 0 ? std::to_string(t.argmax) : "", xc[0], xc[1]});
      }
    }
    m.set("point " + sv + " statnet_sha1", git_blob_sha1(dump_mlp(b.statnet.net)));
    m.set("point " + sv + " generator_sha1", git_blob_sha1(dump_mlp(b.generator)));
  }
  Artifacts a{"", trace.text(), results.text(), timing.text(), rc.document.dump(2) + "\n"};
  detail::finish(a, m);
  return a;
}

inline std::vector<PointResult> run_estimate(const RunConfig& rc) {
  if (rc.preset == Preset::divergence_demo)
    throw ConfigError("preset: divergence_demo runs through the divergence-demo command");
  return {run_point(rc)};
}

/// One point per sweep value; a failing point is recorded and the sweep goes on.
inline std::vector<PointResult> run_sweep(const RunConfig& rc) {
  if (rc.preset == Preset::divergence_demo) throw ConfigError("sweep: divergence_demo has no sweep variable");
  if (rc.sweep_values.empty()) throw ConfigError("sweep.values: must not be empty");
  std::vector<std::pair<double, double>> reference;
  if (rc.reference_csv) reference = read_reference_csv(*rc.reference_csv);
  std::vector<PointResult> out;
  for (double v : rc.sweep_values) {
    PointResult p;
    try {
      p = run_point(at_sweep_point(rc, v));
    } catch (const std::exception& e) {
      p = PointResult{};
      p.sweep_value = v;
      p.config = rc;
      p.status = std::string("error: ") + e.what();
    }
    if (rc.reference_csv) p.reference = lookup_reference(reference, v);
    out.push_back(std::move(p));
  }
  return out;
}

// ---- divergence demo --------------------------------------------------------

struct DivergencePoint {
  double x = 0.0;
  bool held_out = false;
  double estimate = 0.0;  // nats
  double truth = 0.0;     // closed-form KL, nats
};

struct DivergenceDemoResult {
  std::vector<DivergencePoint> points;
  std::vector<LossTracePoint> trace;
  StatNet statnet;
  double wall_seconds = 0.0;

  [[nodiscard]] double max_error(bool held_out) const {
    double m = 0.0;
    for (const auto& p : points)
      if (p.held_out == held_out) m = std::max(m, std::abs(p.estimate - p.truth));
    return m;
  }
};

/// Trains the statistics network against a fixed Gaussian reference and
/// compares D(x) with the closed form on the training grid and held-out inputs.
inline DivergenceDemoResult run_divergence_demo(const RunConfig& rc) {
  if (rc.preset != Preset::divergence_demo) throw ConfigError("preset: divergence-demo needs the divergence_demo preset");
  const ExperimentConfig& c = rc.experiment;
  const DivergenceDemo& d = rc.divergence;
  const auto t0 = std::chrono::steady_clock::now();
  const double ref_sd = std::sqrt(d.reference_variance);
  const ReferenceSampler reference = [&d, ref_sd](Eigen::Index count, CounterRng& r) {
    Matrix m(count, 1);
    for (Eigen::Index i = 0; i < count; ++i) m(i, 0) = d.reference_mean + ref_sd * r.next_normal();
    return m;
  };
  const CounterRng root(c.seed);
  StatNet net = make_statnet(1, 1, c.statnet_hidden, splitmix64_mix(c.seed ^ 0x5747A7ULL), c.precision);
  StatNetTrainingResult trained =
      train_statnet(std::move(net), c.channel, reference, c.train_grid, c.batch_size, c.learning_rate, c.iterations,
                    root.substream(1));

  Matrix points(c.train_grid.rows() + static_cast<Eigen::Index>(d.held_out.size()), 1);
  points.topRows(c.train_grid.rows()) = c.train_grid;
  for (std::size_t i = 0; i < d.held_out.size(); ++i)
    points(c.train_grid.rows() + static_cast<Eigen::Index>(i), 0) = d.held_out[i];
  const auto batches = draw_input_batches(c.channel, reference, points, c.final_batch_size(), root.substream(2));
  const auto estimates = per_input_estimates(trained.statnet, batches);

  DivergenceDemoResult out;
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    const double x = points(j, 0);
    out.points.push_back({x, j >= c.train_grid.rows(), estimates[static_cast<std::size_t>(j)].value,
                          gaussian_kl(x, c.channel.noise_variance, d.reference_mean, d.reference_variance)});
  }
  out.trace = std::move(trained.trace);
  out.statnet = std::move(trained.statnet);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline Artifacts divergence_artifacts(const RunConfig& rc, const DivergenceDemoResult& r) {
  CsvWriter results("divergence", {"x", "set", "d_hat_nats", "kl_nats", "abs_error"});
  for (const auto& p : r.points)
    results.row({fmt(p.x), p.held_out ? "held_out" : "train", fmt(p.estimate), fmt(p.truth),
                 fmt(std::abs(p.estimate - p.truth))});
  CsvWriter trace("divergence-trace", {"iteration", "loss"});
  for (const auto& t : r.trace) trace.row({std::to_string(t.iteration), fmt(t.loss)});
  CsvWriter timing("timing", {"stage", "wall_seconds"});
  timing.row({"divergence_demo", fmt(r.wall_seconds)});
  Manifest m = detail::base_manifest("divergence-demo", rc);
  m.set("statnet_sha1", git_blob_sha1(dump_mlp(r.statnet.net)));
  Artifacts a{"", trace.text(), results.text(), timing.text(), rc.document.dump(2) + "\n"};
  detail::finish(a, m);
  return a;
}

// ---- Blahut-Arimoto ---------------------------------------------------------

inline Artifacts ba_artifacts(const RunConfig& rc, const BlahutArimotoResult& r, const DiscreteChannelMatrix& m,
                              double wall_seconds) {
  CsvWriter results("ba", {"row", "x", "probability", "capacity_bits", "mean_cost", "gamma_bits"});
  for (std::size_t j = 0; j < m.inputs.size(); ++j)
    results.row({"input", fmt(m.inputs[j]), fmt(r.input_distribution[j]), "", "", ""});
  results.row({"summary", "", "", fmt(r.capacity_bits), fmt(r.mean_cost), fmt(r.gamma)});
  CsvWriter trace("ba-trace", {"iteration", "objective_bits"});
  for (std::size_t i = 0; i < r.objective_trace.size(); ++i)
    trace.row({std::to_string(i + 1), fmt(r.objective_trace[i])});
  CsvWriter timing("timing", {"stage", "wall_seconds"});
  timing.row({"blahut_arimoto", fmt(wall_seconds)});
  Manifest man = detail::base_manifest("ba", rc);
  Artifacts a{"", trace.text(), results.text(), timing.text(), rc.document.dump(2) + "\n"};
  detail::finish(a, man);
  return a;
}

// ---- gradient checks --------------------------------------------------------

inline Artifacts gradcheck_artifacts(const std::vector<gradcheck::Report>& reports, std::uint64_t seed,
                                     double wall_seconds) {
  CsvWriter results("gradcheck", {"check", "entries", "max_rel_error", "tolerance", "passed"});
  for (const auto& r : reports)
    results.row({r.name, std::to_string(r.checked), fmt(r.max_rel_error), fmt(r.tolerance), r.passed() ? "1" : "0"});
  CsvWriter timing("timing", {"stage", "wall_seconds"});
  timing.row({"gradcheck", fmt(wall_seconds)});
  Manifest m;
  m.set("tool_version", kToolVersion);
  m.set("command", "gradcheck");
  m.set("seed", std::to_string(seed));
  Artifacts a{"", CsvWriter("trace", {"check"}).text(), results.text(), timing.text(), "{}\n"};
  detail::finish(a, m);
  return a;
}

}  // namespace dualcap::cli
