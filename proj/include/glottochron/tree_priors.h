#pragma once

#include <span>

#include "glottochron/model_state.h"
#include "glottochron/settings.h"
#include "glottochron/time_tree.h"

namespace glottochron {

// Constant-size coalescent over calendar ages, generalized to dated tips: each
// interval holding j lineages contributes -j(j-1) dt / theta and each
// coalescence log(2 / theta). Trees with sampled ancestors get -inf.
auto coalescent_log_density(const TimeTree& tree, double theta) -> double;

struct FbdHelpers {
  double c1 = 0.0;
  double c2 = 0.0;
  double p0 = 0.0;
  double p1 = 0.0;
  double p0_hat = 0.0;  // p0 with psi = 0
};

auto fbd_helpers(const FbdRates& rates, double t) -> FbdHelpers;

// Overflow-safe forms used by the density.
auto fbd_log_p1(const FbdRates& rates, double t) -> double;
auto fbd_log_one_minus_p0(const FbdRates& rates, double t) -> double;

// Counts read off a tree for the fossilized birth-death density.
struct FbdCounts {
  int extant = 0;              // n
  int extinct_tips = 0;        // m
  int sampled_ancestors = 0;   // k
};
auto fbd_counts(const TimeTree& tree) -> FbdCounts;

// Density conditioned on the root age x1:
//   lambda^(n+m-2) psi^(k+m) / (1 - p0_hat(x1))^2 * p1(x1)
//   * prod over bifurcations (root included) p1(x_i)
//   * prod over extinct tips p0(y_i) / p1(y_i)
auto fbd_log_density(const TimeTree& tree, const FbdRates& rates) -> double;
auto fbd_log_density(const TimeTree& tree, const FbdParams& params) -> double;

// log h(root) - sum over non-root internal nodes of log(root - t_v), with t_v the
// oldest tip age below v and h uniform on the root bounds.
auto uniform_tree_log_density(const TimeTree& tree, const UniformParams& params) -> double;

// Tree prior selected by state.prior_params. Under the coalescent theta = 2 P c
// acts on substitution-scaled times; expressed over calendar ages that is the
// same density as theta = 2 P.
auto tree_log_prior(const ModelState& state) -> double;

// Priors on scalar parameters and tip ages; the FBD root age is uniform on the
// root bounds. Out-of-domain values give -inf.
auto hyperprior_log_density(const ModelState& state, std::span<const Taxon> taxa,
                            const HyperpriorSettings& settings) -> double;

// Tree prior + hyperpriors + relaxed-clock prior.
auto log_prior(const ModelState& state, std::span<const Taxon> taxa, const HyperpriorSettings& settings)
    -> double;

}  // namespace glottochron
