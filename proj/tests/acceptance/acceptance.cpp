// Acceptance criteria, one line each: "criterion N PASS|FAIL: details".
// Usage: acceptance <N>... (no arguments runs all seven).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <tuple>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "dualcap/gradcheck.hpp"

using namespace dualcap;
using namespace dualcap::cli;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [failed]");
  }
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

const std::filesystem::path& artifact_root() {
  static const std::filesystem::path root = std::filesystem::current_path() / "acceptance_out";
  return root;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Divergence estimator against the closed-form Gaussian KL.
void divergence_demo(Outcome& o) {
  const RunConfig rc = load_config(json{{"preset", "divergence_demo-desk"}});
  const DivergenceDemoResult r = run_divergence_demo(rc);
  write_artifacts(divergence_artifacts(rc, r), artifact_root() / "c1");
  o.require(r.max_error(false) <= 0.05, "train max |D-KL| " + num(r.max_error(false)) + " <= 0.05 nats");
  o.require(r.max_error(true) <= 0.1, "held-out max |D-KL| " + num(r.max_error(true)) + " <= 0.1 nats");
  o.require(r.wall_seconds <= 180.0, "runtime " + num(r.wall_seconds, 3) + " s <= 180 s");
}

// AWGN average power: bound within 0.1 bit of capacity at 0, 5, 10 dB.
void awgn_average_power(Outcome& o) {
  for (double snr : {0.0, 5.0, 10.0}) {
    const RunConfig rc = load_config(json{{"preset", "awgn_avg-desk"}, {"channel", {{"snr_db", snr}}}});
    const auto points = run_estimate(rc);
    write_artifacts(bound_artifacts("estimate", rc, points), artifact_root() / ("c2_" + num(snr)));
    const PointResult& p = points.front();
    const double bound = p.search->best.bound_bits();
    const double cap = *p.oracle.bits;
    o.require(std::abs(bound - cap) <= 0.1, num(snr) + " dB: bound " + num(bound) + " vs " + num(cap) + " bits");
    o.require(p.wall_seconds <= 900.0, num(snr) + " dB runtime " + num(p.wall_seconds, 3) + " s <= 900 s");
  }
}

// Amplitude-limited AWGN: bound above the discretized BA capacity minus 0.05 bit.
void awgn_amplitude(Outcome& o) {
  for (double snr : {0.0, 6.0}) {
    const RunConfig rc = load_config(json{{"preset", "awgn_amp-desk"}, {"channel", {{"snr_db", snr}}}});
    const auto points = run_estimate(rc);
    write_artifacts(bound_artifacts("estimate", rc, points), artifact_root() / ("c3_" + num(snr)));
    const double bound = points.front().search->best.bound_bits();
    const double ba = *points.front().oracle.bits;
    o.require(bound > ba - 0.05, num(snr) + " dB: bound " + num(bound) + " > BA " + num(ba) + " - 0.05");
  }
}

// Optical intensity at alpha = 0.4: bound within 0.1 bit of the cost-constrained BA capacity.
void optical_intensity(Outcome& o) {
  for (double snr : {6.0, 12.0}) {
    const RunConfig rc = load_config(json{{"preset", "oi-desk"}, {"channel", {{"snr_db", snr}, {"alpha", 0.4}}}});
    const auto points = run_estimate(rc);
    write_artifacts(bound_artifacts("estimate", rc, points), artifact_root() / ("c4_" + num(snr)));
    const double bound = points.front().search->best.bound_bits();
    const double ba = *points.front().oracle.bits;
    o.require(std::abs(bound - ba) <= 0.1, "A/sigma " + num(snr) + " dB: bound " + num(bound) + " vs BA " + num(ba));
  }
}

// NLPN smoke test at -10 dBm plus the channel's analytic checks.
void nlpn_smoke(Outcome& o) {
  const json cfg = {{"preset", "nlpn-desk"},
                    {"channel", {{"launch_power_dbm", -10.0}}},
                    {"search", {{"gamma", 0.93}}}};
  const RunConfig rc = load_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto points = run_estimate(rc);
  const double first = seconds_since(t0);
  const Artifacts a = bound_artifacts("estimate", rc, points);
  const Artifacts b = bound_artifacts("estimate", rc, run_estimate(load_config(cfg)));
  write_artifacts(a, artifact_root() / "c5");
  const double bound = points.front().search->best.bound_bits();
  o.require(std::isfinite(bound) && bound >= 0.0, "bound " + num(bound) + " bits finite and >= 0");
  o.require(a.results == b.results && a.trace == b.trace && a.manifest == b.manifest,
            "rerun byte-identical (" + num(first, 3) + " s per run)");

  // Zero noise: rotation by nonlinearity * L * P |x|^2 with the magnitude preserved.
  NlpnParams np;
  np.launch_power_w = dbm_to_watts(-10.0);
  const ChannelSpec spec = ChannelSpec::nlpn_channel(dbm_to_watts(-21.3), np);
  CounterRng rng(3);
  const Matrix x = gradcheck::random_matrix(64, 2, rng);
  NoiseRecord quiet{spec.family, x, Matrix::Zero(x.rows(), 2 * np.steps)};
  const Matrix y = channel_replay(spec, quiet);
  double mag_err = 0.0, rot_err = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double r2 = x.row(i).squaredNorm();
    const double turn = np.nonlinearity * np.distance_km * np.launch_power_w * r2;
    const double got = std::atan2(y(i, 1), y(i, 0)) - std::atan2(x(i, 1), x(i, 0));
    mag_err = std::max(mag_err, std::abs(y.row(i).norm() - std::sqrt(r2)) / std::sqrt(r2));
    rot_err = std::max(rot_err, std::abs(std::remainder(got - turn, 2.0 * std::numbers::pi)));
  }
  o.require(mag_err <= 1e-12 && rot_err <= 1e-9,
            "zero-noise rotation: magnitude " + num(mag_err, 2) + ", phase " + num(rot_err, 2));

  // Dot-product test <dy, J v> = <J^T dy, v> with a random noise record.
  const ChannelOutput out = channel_sample(spec, x, rng);
  const Matrix dy = gradcheck::random_matrix(64, 2, rng);
  const Matrix v = gradcheck::random_matrix(64, 2, rng);
  const double lhs = (dy.array() * gradcheck::nlpn_tangent(spec, out.record, v).array()).sum();
  const double rhs = (channel_backward(spec, out.record, dy).array() * v.array()).sum();
  const double adj = std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
  o.require(adj <= 1e-9, "adjoint mismatch " + num(adj, 2) + " <= 1e-9");
}

double discretized_capacity(const ChannelSpec& ch, const std::vector<double>& grid, int bins, double target) {
  BlahutArimotoOptions opt;
  opt.target_cost = target;
  return blahut_arimoto(discretize_channel(ch, grid, bins), opt).capacity_bits;
}

// Closed forms and Blahut-Arimoto.
void oracles(Outcome& o) {
  const double kl1 = gaussian_kl(1, 1, 1, 2), kl2 = gaussian_kl(-1, 1, 1, 2);
  o.require(std::abs(kl1 - 0.096574) <= 1e-6 && std::abs(kl2 - 1.096574) <= 1e-6,
            "gaussian_kl " + num(kl1, 7) + " / " + num(kl2, 7));
  o.require(awgn_capacity(3.0) == 1.0, "awgn_capacity(3) == 1");

  DiscreteChannelMatrix bsc;
  bsc.transition = {{0.89, 0.11}, {0.11, 0.89}};
  const BlahutArimotoResult r = blahut_arimoto(bsc);
  const double closed = 1.0 - binary_entropy(0.11);
  o.require(std::abs(r.capacity_bits - closed) <= 1e-5, "BSC(0.11) " + num(r.capacity_bits, 7) + " vs " + num(closed, 7));

  const ChannelSpec awgn = ChannelSpec::awgn_average_power(0.5, 1.0);
  const Matrix g = uniform_grid(-2.5, 2.5, 15);
  const std::vector<double> grid(g.data(), g.data() + g.size());
  bool monotone = true;
  for (double gamma : {0.0, 0.5}) {
    BlahutArimotoOptions opt;
    opt.gamma = gamma;
    const auto tr = blahut_arimoto(discretize_channel(awgn, grid), opt).objective_trace;
    for (std::size_t i = 1; i < tr.size(); ++i) monotone = monotone && tr[i] >= tr[i - 1];
  }
  o.require(monotone, "BA objective non-decreasing every iteration");

  const ChannelSpec oi = ChannelSpec::optical_intensity(0.4, 2.5, 1.0);
  const Matrix go = uniform_grid(0.0, 2.5, 15);
  const std::vector<double> grid_oi(go.data(), go.data() + go.size());
  const double d_awgn = std::abs(discretized_capacity(awgn, grid, 512, 1.0) - discretized_capacity(awgn, grid, 1024, 1.0));
  const double d_oi = std::abs(discretized_capacity(oi, grid_oi, 512, 1.0) - discretized_capacity(oi, grid_oi, 1024, 1.0));
  o.require(d_awgn < 1e-3 && d_oi < 1e-3, "bin doubling changes BA by " + num(d_awgn, 2) + " / " + num(d_oi, 2));
}

// Gradient checks, DV shift invariance, renormalization, golden section, reruns.
void numerical_core(Outcome& o) {
  int failed = 0;
  double worst = 0.0;
  const auto reports = gradcheck::standard_suite(0);
  for (const auto& r : reports) {
    if (!r.passed()) ++failed;
    worst = std::max(worst, r.max_rel_error / r.tolerance);
  }
  o.require(failed == 0, std::to_string(reports.size()) + " finite-difference checks, worst error/tolerance " +
                             num(worst, 2));

  StatNet net = make_statnet(1, 1, {16, 16}, 5);
  CounterRng rng(9);
  Matrix y(500, 1), ref(500, 1);
  for (Eigen::Index i = 0; i < 500; ++i) {
    y(i) = 0.3 + rng.next_normal();
    ref(i) = 1.3 * rng.next_normal();
  }
  const RowVector x = RowVector::Constant(1, 0.3);
  const double before = dv_estimate(net, x, y, ref).value;
  net.net.biases.back()(0) += 7.25;
  const double shift = std::abs(dv_estimate(net, x, y, ref).value - before);
  o.require(shift <= 1e-12, "DV shift invariance " + num(shift, 2));

  double renorm = 0.0;
  for (auto [tag, cols, power] : {std::tuple{CostTag::square, 1, 1.0}, std::tuple{CostTag::identity, 1, 0.4},
                                  std::tuple{CostTag::square_magnitude, 2, 0.37}}) {
    Matrix s(1000, cols);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = tag == CostTag::identity ? rng.next_uniform() : rng.next_normal();
    const Matrix n = renormalize(s, tag, power);
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n.rows(); ++i) mean += cost_value(tag, n.row(i).data(), cols);
    mean /= static_cast<double>(n.rows());
    renorm = std::max(renorm, std::abs(mean - power) / power);
  }
  o.require(renorm <= 1e-12, "renormalized mean cost relative error " + num(renorm, 2));

  const auto gs = golden_section_min([](double t) { return (t - 2) * (t - 2) + 3; }, 0.0, 10.0, 1e-6, 200);
  double ratio = 0.0;
  for (std::size_t i = 1; i < gs.bracket_widths.size(); ++i)
    ratio = std::max(ratio, std::abs(gs.bracket_widths[i] - kGoldenRatioConjugate * gs.bracket_widths[i - 1]));
  ratio /= gs.bracket_widths.front();
  o.require(ratio < 1e-12 && std::abs(gs.argmin - 2.0) <= 1e-6, "golden-section contraction deviation " + num(ratio, 2));

  const json cfg = json::parse(R"({
    "preset": "oi", "seed": 3,
    "training": { "iterations": 5, "batch_size": 128, "pretrain_iterations": 3 },
    "networks": { "latent_dim": 6, "ndt_hidden": [12], "statnet_hidden": [12, 12] },
    "search": { "tol": 0.2 }
  })");
  const RunConfig rc = load_config(cfg);
  const Artifacts a = bound_artifacts("estimate", rc, run_estimate(rc));
  const Artifacts b = bound_artifacts("estimate", rc, run_estimate(rc));
  o.require(a.results == b.results && a.trace == b.trace && a.manifest == b.manifest, "byte-identical reruns");
}

struct Criterion {
  int id;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  keep_heap_resident();
  const std::vector<Criterion> all = {{1, divergence_demo},   {2, awgn_average_power}, {3, awgn_amplitude},
                                      {4, optical_intensity}, {5, nlpn_smoke},          {6, oracles},
                                      {7, numerical_core}};
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  if (wanted.empty())
    for (const auto& c : all) wanted.push_back(c.id);

  bool all_pass = true;
  for (int id : wanted) {
    if (id < 1 || id > static_cast<int>(all.size())) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      all[static_cast<std::size_t>(id - 1)].run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::cout << "criterion " << id << (o.pass ? " PASS" : " FAIL") << ": " << o.detail.str() << " ("
              << num(seconds_since(t0), 3) << " s)" << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
