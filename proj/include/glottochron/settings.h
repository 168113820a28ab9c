#pragma once

#include "glottochron/time_tree.h"

namespace glottochron {

// How the likelihood is conditioned on never observing an all-absent column.
enum class AscertainmentMode {
  global,     // one all-0 correction term shared by every site
  per_block,  // each site corrected with the all-0 pattern under its own missing-data mask
};

// Hyperprior constants. Exponential priors are given by their means.
struct HyperpriorSettings {
  double alpha_mean = 1.0;
  double clock_rate_mean = 1e-4;
  double igr_variance_mean = 0.005;
  double diversification_mean = 1.0;
  double pop_size_shape = 1.0;
  double pop_size_rate = 0.01;
  RootBounds root_bounds;
};

// Relative proposal weights by kernel group; renormalized over applicable kernels.
struct KernelWeights {
  double topology = 0.30;
  double node_ages = 0.30;
  double tip_ages = 0.10;
  double scalars = 0.20;
  double branch_rates = 0.10;
  double ancestor_toggle = 0.05;  // FBD only; subtracted from topology
};

struct AgeWindow {
  double lo = 0.0;
  double hi = 0.0;
  auto contains(double age) const -> bool { return age >= lo && age <= hi; }
};

struct HypothesisWindows {
  AgeWindow steppe{5500.0, 6500.0};
  AgeWindow anatolian{8000.0, 9500.0};
};

}  // namespace glottochron
