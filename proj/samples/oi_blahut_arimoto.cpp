// Cost-constrained Blahut-Arimoto on the discretized optical intensity channel
// for a few peak-to-noise ratios.

#include <cmath>
#include <cstdio>
#include <vector>

#include "dualcap/dualcap.hpp"

int main() {
  using namespace dualcap;
  const double amplitude = 2.5;
  const double alpha = 0.4;
  const Matrix g = uniform_grid(0.0, amplitude, 15);
  const std::vector<double> grid(g.data(), g.data() + g.size());
  std::printf("A/sigma [dB]  capacity [bits]  mean input  multiplier [bits]\n");
  for (double db : {0.0, 3.0, 6.0, 9.0, 12.0}) {
    const double sigma = amplitude / std::sqrt(db_to_linear(db));
    const ChannelSpec ch = ChannelSpec::optical_intensity(sigma * sigma, amplitude, alpha * amplitude);
    BlahutArimotoOptions opt;
    opt.target_cost = ch.constraint_level;
    const BlahutArimotoResult r = blahut_arimoto(discretize_channel(ch, grid), opt);
    std::printf("%12.1f  %15.4f  %10.4f  %17.4f\n", db, r.capacity_bits, r.mean_cost, r.gamma);
  }
}
