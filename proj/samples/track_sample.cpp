// One short episode per policy, printing the tracking error against the bound.

#include <cmath>
#include <cstdio>

#include "uavisac/scenario.hpp"

int main() {
  using namespace uavisac;
  ScenarioConfig cfg;
  cfg.n_epochs = 40;

  for (Policy p : {Policy::Parallel, Policy::Diagonal, Policy::Optimized}) {
    cfg.policy = p;
    const EpisodeTrace tr = run_episode(cfg, split_seed(cfg.seed, 0));
    if (tr.failed) {
      std::printf("%-9s failed: %s\n", to_string(p), tr.failure.c_str());
      continue;
    }
    std::printf("%s\n  epoch  range[m]  pos err[m]  bound[m]  logdet\n", to_string(p));
    for (const EpochRecord& r : tr.epochs) {
      if (r.epoch % 10 != 0) continue;
      const double err = (r.T_hat.r() - r.T_sp.r()).norm();
      const double bound = std::sqrt(r.cpcrb_T.topLeftCorner<3, 3>().trace());
      std::printf("  %5d  %8.1f  %10.3f  %8.3f  %7.2f\n", r.epoch, r.T_sp.r().norm(), err, bound, r.logdet);
    }
  }
}
