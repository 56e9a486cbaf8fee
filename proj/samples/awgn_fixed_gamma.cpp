// Dual upper bound for the AWGN channel at one fixed multiplier, next to the
// Shannon capacity. Small networks and batches so it finishes in seconds.

#include <cstdio>

#include "dualcap/dualcap.hpp"

int main() {
  using namespace dualcap;
  ExperimentConfig cfg;
  cfg.channel = ChannelSpec::awgn_average_power(1.0, 1.0);  // 0 dB
  cfg.train_grid = uniform_grid(-2.5, 2.5, 15);
  cfg.eval_grid = cfg.train_grid;
  cfg.iterations = 150;
  cfg.pretrain_iterations = 100;
  cfg.batch_size = 1000;
  cfg.eval_batch_size = 5000;
  cfg.latent_dim = 8;
  cfg.ndt_hidden = {32, 32};
  cfg.statnet_hidden = {32, 32};
  cfg.gamma = 0.5;  // optimal multiplier at SNR 1 is 1 / (2 (1 + SNR)) nats
  cfg.seed = 7;

  const DualBoundEstimate est = run_alternating(cfg);
  std::printf("gamma %.3f  F_hat %.4f nats  bound %.4f bits  capacity %.4f bits\n", est.gamma, est.f_hat,
              est.bound_bits(), awgn_capacity(1.0));
  std::printf("maximizing input x* = %.3f\n", est.x_star(0));
}
