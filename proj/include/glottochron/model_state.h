#pragma once

#include <array>
#include <string_view>
#include <variant>
#include <vector>

#include "glottochron/time_tree.h"

namespace glottochron {

enum class TreePriorKind { coalescent, fbd, uniform };

auto to_string(TreePriorKind kind) -> std::string_view;
auto parse_tree_prior_kind(std::string_view text) -> TreePriorKind;

// Constant-size coalescent. theta = 2 * pop_size * clock_rate.
struct CoalescentParams {
  double pop_size = 1000.0;
};

// Fossilized birth-death in the (d, r, f, rho) parameterization.
struct FbdParams {
  double diversification = 1e-3;   // d = lambda - mu
  double turnover = 0.5;           // r = mu / lambda
  double fossil_sampling = 0.5;    // f = psi / (psi + mu)
  double rho = 1.0;                // extant sampling fraction
};

struct FbdRates {
  double lambda = 0.0;
  double mu = 0.0;
  double psi = 0.0;
  double rho = 1.0;
};

// lambda = d / (1 - r), mu = r * lambda, psi = mu * f / (1 - f).
auto to_rates(const FbdParams& params) -> FbdRates;

struct UniformParams {
  RootBounds root_bounds;
};

using TreePriorParams = std::variant<CoalescentParams, FbdParams, UniformParams>;

auto prior_kind(const TreePriorParams& params) -> TreePriorKind;

struct ModelState {
  TimeTree tree;
  std::array<double, 2> pi{0.5, 0.5};
  double alpha = 1.0;
  double clock_rate = 1e-4;          // substitutions / site / year
  std::vector<double> branch_rates;  // indexed by child node id; root entry unused
  double igr_variance = 0.005;
  TreePriorParams prior_params;
};

// Violations of the ModelState scalar invariants (empty when valid).
auto validate_parameters(const ModelState& state) -> std::vector<std::string>;

}  // namespace glottochron
