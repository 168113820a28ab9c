#pragma once

#include <span>

#include "glottochron/time_tree.h"

namespace glottochron {

// Independent gamma rates clock. Branch j has expected substitutions
// b_j = t_j * c and its multiplier r_j ~ Gamma(shape b_j / s2, scale s2 / b_j),
// i.e. mean 1 and variance s2 / b_j.

// nu_j = t_j * c * r_j.
auto effective_branch_length(const TimeTree& tree, int node, double clock_rate,
                             std::span<const double> rates) -> double;

// Log density of a single multiplier; 0 for zero-duration branches.
auto igr_branch_log_density(double rate, double duration, double igr_variance, double clock_rate)
    -> double;

// Sum over non-root branches; -inf if any rated branch has r_j <= 0.
auto igr_log_prior(std::span<const double> rates, double igr_variance, const TimeTree& tree,
                   double clock_rate) -> double;

// Draw r_j from its prior; returns 1 for zero-duration branches.
auto draw_igr_rate(double duration, double igr_variance, double clock_rate, Rng& rng) -> double;

}  // namespace glottochron
