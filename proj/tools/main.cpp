#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cli/commands.hpp"

namespace fs = std::filesystem;
using namespace dualcap;
using namespace dualcap::cli;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool desk = false;
};

void report_bounds(const std::vector<PointResult>& points) {
  for (const auto& p : points) {
    std::cout << sweep_variable(p.config.preset) << "=" << fmt(p.sweep_value) << "  ";
    if (!p.search) {
      std::cout << p.status << "\n";
      continue;
    }
    const DualBoundEstimate& b = p.search->best;
    std::cout << "gamma=" << fmt(b.gamma) << "  bound=" << b.bound_bits() << " bits";
    if (p.oracle.bits) std::cout << "  " << p.oracle.kind << "=" << *p.oracle.bits << " bits";
    std::cout << "  (" << p.wall_seconds << " s)\n";
  }
}

int run(const std::string& command, const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  if (command == "gradcheck") {
    const auto reports = gradcheck::standard_suite(opt.seed.value_or(0));
    bool ok = true;
    for (const auto& r : reports) {
      std::cout << (r.passed() ? "ok    " : "FAIL  ") << r.name << "  max rel error " << r.max_rel_error << " (tol "
                << r.tolerance << ", " << r.checked << " entries)\n";
      ok = ok && r.passed();
    }
    write_artifacts(gradcheck_artifacts(reports, opt.seed.value_or(0), elapsed()), opt.out);
    return ok ? 0 : 1;
  }

  const RunConfig rc = load_config_file(opt.config, {opt.seed, opt.desk});
  if (command == "estimate" || command == "sweep") {
    const auto points = command == "estimate" ? run_estimate(rc) : run_sweep(rc);
    write_artifacts(bound_artifacts(command, rc, points), opt.out);
    report_bounds(points);
    for (const auto& p : points)
      if (p.status != "ok") return 1;
    return 0;
  }
  if (command == "divergence-demo") {
    const DivergenceDemoResult r = run_divergence_demo(rc);
    write_artifacts(divergence_artifacts(rc, r), opt.out);
    for (const auto& p : r.points)
      std::cout << (p.held_out ? "held-out " : "train    ") << "x=" << fmt(p.x) << "  D=" << p.estimate
                << "  KL=" << p.truth << "\n";
    std::cout << "max error: train " << r.max_error(false) << ", held-out " << r.max_error(true) << " nats\n";
    return 0;
  }
  if (command == "ba") {
    const DiscreteChannelMatrix m = ba_channel(rc);
    BlahutArimotoOptions bo;
    bo.tol = rc.ba.tol;
    if (rc.experiment.channel.has_cost()) bo.target_cost = rc.experiment.channel.constraint_level;
    const BlahutArimotoResult r = blahut_arimoto(m, bo);
    write_artifacts(ba_artifacts(rc, r, m, elapsed()), opt.out);
    std::cout << "capacity " << r.capacity_bits << " bits, mean cost " << r.mean_cost << ", gamma " << r.gamma
              << " bits/cost, " << r.iterations << " iterations\n";
    return 0;
  }
  throw std::logic_error("unhandled command " + command);
}

}  // namespace

int main(int argc, char** argv) {
  keep_heap_resident();
  CLI::App app{"Neural estimation of dual capacity upper bounds"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Options opt;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed")->check(CLI::NonNegativeNumber);
  app.add_option("--out", opt.out, "Output directory")->capture_default_str();
  app.add_flag("--desk-scale", opt.desk, "Use the reduced -desk variant of the preset");

  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", opt.config, "JSON config file")->required()->check(CLI::ExistingFile);
    return sub;
  };
  add("estimate", "Dual bound for one channel configuration");
  add("sweep", "Dual bounds across sweep.values");
  add("divergence-demo", "Conditional divergence estimator against closed-form Gaussian KL");
  add("ba", "Blahut-Arimoto capacity of the discretized channel");
  app.add_subcommand("gradcheck", "Finite-difference checks of every backward pass");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) opt.seed = seed;
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      write_file(fs::path(opt.out) / "error.txt", std::string(command) + ": " + e.what() + "\n");
    } catch (...) {
    }
    return 2;
  }
}
