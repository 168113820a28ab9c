#include "glottochron/model_state.h"

#include <cmath>
#include <sstream>
#include <string>

#include "glottochron/errors.h"

namespace glottochron {

auto to_string(TreePriorKind kind) -> std::string_view {
  switch (kind) {
    case TreePriorKind::coalescent: return "coalescent";
    case TreePriorKind::fbd: return "fbd";
    case TreePriorKind::uniform: return "uniform";
  }
  return "?";
}

auto parse_tree_prior_kind(std::string_view text) -> TreePriorKind {
  if (text == "coalescent") return TreePriorKind::coalescent;
  if (text == "fbd") return TreePriorKind::fbd;
  if (text == "uniform") return TreePriorKind::uniform;
  throw UsageError{"unknown tree prior '" + std::string{text} + "'"};
}

auto to_rates(const FbdParams& params) -> FbdRates {
  auto rates = FbdRates{};
  rates.lambda = params.diversification / (1.0 - params.turnover);
  rates.mu = rates.lambda * params.turnover;
  rates.psi = rates.mu * params.fossil_sampling / (1.0 - params.fossil_sampling);
  rates.rho = params.rho;
  return rates;
}

auto prior_kind(const TreePriorParams& params) -> TreePriorKind {
  if (std::holds_alternative<CoalescentParams>(params)) return TreePriorKind::coalescent;
  if (std::holds_alternative<FbdParams>(params)) return TreePriorKind::fbd;
  return TreePriorKind::uniform;
}

auto validate_parameters(const ModelState& state) -> std::vector<std::string> {
  auto out = std::vector<std::string>{};
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) out.push_back(std::string{name} + " must be positive");
  };
  if (!(state.pi[0] > 0.0 && state.pi[1] > 0.0) || std::abs(state.pi[0] + state.pi[1] - 1.0) > 1e-12) {
    out.emplace_back("pi must be positive and sum to 1");
  }
  positive(state.alpha, "alpha");
  positive(state.clock_rate, "clock_rate");
  positive(state.igr_variance, "igr_variance");
  if (static_cast<int>(state.branch_rates.size()) != state.tree.size()) {
    out.emplace_back("branch_rates must have one entry per node");
  } else {
    for (auto i = 0; i < state.tree.size(); ++i) {
      if (i != state.tree.root && !(state.branch_rates[i] > 0.0)) {
        out.push_back("branch rate of node " + std::to_string(i) + " must be positive");
      }
    }
  }
  if (const auto* c = std::get_if<CoalescentParams>(&state.prior_params)) {
    positive(c->pop_size, "pop_size");
  } else if (const auto* f = std::get_if<FbdParams>(&state.prior_params)) {
    positive(f->diversification, "diversification");
    if (!(f->turnover >= 0.0 && f->turnover < 1.0)) out.emplace_back("turnover must lie in [0, 1)");
    if (!(f->fossil_sampling >= 0.0 && f->fossil_sampling < 1.0)) {
      out.emplace_back("fossil_sampling must lie in [0, 1)");
    }
    if (!(f->rho > 0.0 && f->rho <= 1.0)) out.emplace_back("rho must lie in (0, 1]");
  } else if (const auto* u = std::get_if<UniformParams>(&state.prior_params)) {
    if (!(u->root_bounds.min_age < u->root_bounds.max_age)) {
      out.emplace_back("root bounds must satisfy min < max");
    }
  }
  return out;
}

}  // namespace glottochron
