#include "glottochron/simulate.h"

#include <algorithm>
#include <memory>

#include "glottochron/clock.h"
#include "glottochron/errors.h"
#include "glottochron/likelihood.h"
#include "glottochron/mcmc.h"

namespace glottochron {

auto simulate_characters(const ModelState& state, std::span<const Taxon> taxa, int num_sites, Rng& rng)
    -> CognateMatrix {
  if (num_sites < 1) throw UsageError{"simulate_characters: need at least one site"};
  const auto& tree = state.tree;
  auto cats = discretize_gamma(state.alpha, k_rate_categories);
  auto matrix = CognateMatrix{};
  matrix.taxa.assign(taxa.begin(), taxa.end());
  matrix.rows.assign(taxa.size(), {});
  auto preorder = tree.postorder();
  std::ranges::reverse(preorder);
  auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
  auto category = std::uniform_int_distribution<int>{0, cats.size() - 1};
  auto states = std::vector<int>(tree.size(), 0);
  auto column = std::vector<Cell>(taxa.size());
  // Transition matrices per (node, category) are fixed across sites.
  auto matrices = std::vector<std::vector<TransitionMatrix>>(tree.size());
  for (auto v = 0; v < tree.size(); ++v) {
    if (v == tree.root) continue;
    auto nu = effective_branch_length(tree, v, state.clock_rate, state.branch_rates);
    for (auto k = 0; k < cats.size(); ++k) matrices[v].push_back(transition_matrix(state.pi, nu * cats.rates[k]));
  }
  auto accepted = 0;
  while (accepted < num_sites) {
    auto k = category(rng);
    auto any_present = false;
    for (auto v : preorder) {
      if (v == tree.root) {
        states[v] = unit(rng) < state.pi[1] ? 1 : 0;
      } else {
        const auto& m = matrices[v][k];
        states[v] = unit(rng) < m(states[tree.at(v).parent], 1) ? 1 : 0;
      }
      const auto& node = tree.at(v);
      if (node.is_tip()) {
        column[node.taxon] = states[v] == 1 ? Cell::present : Cell::absent;
        any_present = any_present || states[v] == 1;
      }
    }
    if (!any_present) continue;
    for (auto t = 0u; t < taxa.size(); ++t) matrix.rows[t].push_back(column[t]);
    ++accepted;
    matrix.site_meaning.push_back(accepted - 1);
    matrix.meanings.push_back("site" + std::to_string(accepted));
  }
  return matrix;
}

auto simulate(const RunConfig& config, std::string_view calibrations_text) -> Simulation {
  if (config.sim_taxa < 2) throw ConfigError{"key 'sim_taxa' must be at least 2"};
  if (config.sim_sites < 1) throw ConfigError{"key 'sim_sites' must be positive"};
  auto sim = Simulation{};
  for (auto i = 0; i < config.sim_taxa; ++i) sim.taxa.push_back(Taxon{i, "t" + std::to_string(i + 1), {}});
  if (!calibrations_text.empty()) apply_calibrations(sim.taxa, parse_calibrations(calibrations_text, sim.taxa));
  auto n_extant = static_cast<int>(std::ranges::count_if(sim.taxa, [](const Taxon& t) { return t.calibration.is_extant(); }));

  auto params = config;
  params.initial = config.sim_params;
  params.fixed.clear();
  auto state = initial_state(params, sim.taxa, n_extant);

  auto options = ChainOptions{};
  options.kernels.weights = config.weights;
  for (const auto& name : sampled_scalars(config.tree_prior)) options.kernels.fixed.insert(name);
  options.hyper.root_bounds = config.root_bounds;
  options.prior_only = true;

  auto setup = McmcSetup{};
  setup.taxa = sim.taxa;
  setup.initial = state;
  setup.chain_length = std::max(1L, config.sim_burn);
  setup.thin = setup.chain_length;
  setup.n_runs = 1;
  setup.n_chains = 1;
  setup.seed = config.seed;
  setup.burn_in = 0.0;
  setup.print_every = setup.chain_length;
  setup.audit_every = 0;
  setup.chain = options;
  auto result = run_mc3(setup, nullptr);
  sim.truth = state;
  sim.truth.tree = result.runs.front().trees.back().tree;

  auto data_rng = make_stream(config.seed, 1, 0);
  sim.truth.branch_rates.assign(sim.truth.tree.size(), 1.0);
  for (auto v = 0; v < sim.truth.tree.size(); ++v) {
    if (v == sim.truth.tree.root) continue;
    sim.truth.branch_rates[v] =
        draw_igr_rate(branch_duration(sim.truth.tree, v), sim.truth.igr_variance, sim.truth.clock_rate, data_rng);
  }
  sim.matrix = simulate_characters(sim.truth, sim.taxa, config.sim_sites, data_rng);
  return sim;
}

}  // namespace glottochron
