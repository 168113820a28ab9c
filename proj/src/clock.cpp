#include "glottochron/clock.h"

#include <cmath>
#include <limits>

namespace glottochron {

auto effective_branch_length(const TimeTree& tree, int node, double clock_rate,
                             std::span<const double> rates) -> double {
  return branch_duration(tree, node) * clock_rate * rates[node];
}

auto igr_branch_log_density(double rate, double duration, double igr_variance, double clock_rate)
    -> double {
  if (duration <= 0.0) return 0.0;
  if (!(rate > 0.0)) return -std::numeric_limits<double>::infinity();
  auto b = duration * clock_rate;
  auto shape = b / igr_variance;
  // Gamma(shape k, rate k): k log k - lgamma(k) + (k - 1) log r - k r.
  return shape * std::log(shape) - std::lgamma(shape) + (shape - 1.0) * std::log(rate) - shape * rate;
}

auto igr_log_prior(std::span<const double> rates, double igr_variance, const TimeTree& tree,
                   double clock_rate) -> double {
  auto sum = 0.0;
  for (auto v = 0; v < tree.size(); ++v) {
    if (v == tree.root) continue;
    sum += igr_branch_log_density(rates[v], branch_duration(tree, v), igr_variance, clock_rate);
  }
  return sum;
}

auto draw_igr_rate(double duration, double igr_variance, double clock_rate, Rng& rng) -> double {
  if (duration <= 0.0) return 1.0;
  auto shape = duration * clock_rate / igr_variance;
  return std::gamma_distribution<double>{shape, 1.0 / shape}(rng);
}

}  // namespace glottochron
