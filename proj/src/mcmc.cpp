#include "glottochron/mcmc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "glottochron/diagnostics.h"
#include "glottochron/errors.h"
#include "glottochron/tree_priors.h"

namespace glottochron {

namespace {

constexpr double k_neg_inf = -std::numeric_limits<double>::infinity();

auto uniform01(Rng& rng) -> double { return std::uniform_real_distribution<double>{0.0, 1.0}(rng); }

auto root_bounds_of(const ModelState& state, const HyperpriorSettings& hyper) -> std::optional<RootBounds> {
  if (const auto* u = std::get_if<UniformParams>(&state.prior_params)) return u->root_bounds;
  if (std::holds_alternative<FbdParams>(state.prior_params)) return hyper.root_bounds;
  return std::nullopt;
}

auto starting_root_age(std::span<const Taxon> taxa, std::optional<RootBounds> bounds, Rng& rng) -> double {
  auto oldest = 0.0;
  for (const auto& t : taxa) oldest = std::max(oldest, t.calibration.midpoint());
  if (!bounds) return oldest + (1000.0 + oldest) * (0.5 + uniform01(rng));
  auto lo = std::max(bounds->min_age, oldest);
  if (!(lo < bounds->max_age)) {
    throw DataError{"root bounds lie below the oldest tip calibration"};
  }
  return lo + (bounds->max_age - lo) * (0.1 + 0.2 * uniform01(rng));
}

}  // namespace

auto chain_heat(int index, double heat_delta) -> double { return 1.0 / (1.0 + heat_delta * index); }

auto make_stream(std::uint64_t seed, int run, int chain) -> Rng {
  auto seq = std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                           static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(chain + 1)};
  return Rng{seq};
}

// ---- Chain ----

Chain::Chain(ModelState initial, std::shared_ptr<const KernelContext> context, const CognateMatrix* data,
             const ChainOptions& options, Rng rng, double heat)
    : state_{std::move(initial)},
      context_{std::move(context)},
      data_{options.prior_only ? nullptr : data},
      options_{options},
      rng_{rng},
      heat_{heat} {
  kernels_ = make_kernel_set(state_, context_->taxa, options_.kernels);
  auto acc = 0.0;
  for (const auto& k : kernels_) {
    acc += k.weight;
    cumulative_.push_back(acc);
    stats_.push_back(KernelStats{k.kernel->name(), 0, 0, k.kernel->window()});
  }
  tune_marks_.assign(kernels_.size(), {0, 0});
  if (auto problems = validate_tree(state_.tree, context_->taxa); !problems.empty()) {
    throw DataError{"starting tree is invalid: " + problems.front()};
  }
  log_prior_ = glottochron::log_prior(state_, context_->taxa, options_.hyper);
  if (!std::isfinite(log_prior_)) throw DataError{"starting state has zero prior density"};
  if (data_) {
    engine_ = std::make_unique<LikelihoodEngine>(*data_, options_.ascertainment);
    log_likelihood_ = engine_->evaluate(state_);
    engine_->accept();
  }
}

auto Chain::fresh_log_likelihood(const ModelState& state) const -> double {
  return data_ ? alignment_log_likelihood(state, *data_, options_.ascertainment) : 0.0;
}

void Chain::step() {
  auto u = uniform01(rng_);
  auto idx = static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u * cumulative_.back()) -
                                      cumulative_.begin());
  idx = std::min(idx, kernels_.size() - 1);
  auto& kernel = *kernels_[idx].kernel;
  auto& stats = stats_[idx];
  ++stats.proposed;

  auto proposal = state_;
  auto hastings = std::optional<double>{};
  auto new_prior = k_neg_inf;
  try {
    hastings = kernel.propose(proposal, *context_, rng_);
    if (!hastings) return;
    new_prior = glottochron::log_prior(proposal, context_->taxa, options_.hyper);
  } catch (const NumericError&) {
    return;
  }
  if (new_prior == k_neg_inf) return;

  auto new_likelihood = log_likelihood_;
  auto evaluated = false;
  if (engine_ && kernel.touches_likelihood()) {
    try {
      new_likelihood = engine_->evaluate(proposal);
      evaluated = true;
    } catch (const NumericError&) {
      engine_->reject();
      return;
    }
  }
  auto log_ratio = heat_ * (new_likelihood + new_prior - log_likelihood_ - log_prior_) + *hastings;
  if (log_ratio >= 0.0 || std::log(uniform01(rng_)) < log_ratio) {
    state_ = std::move(proposal);
    log_likelihood_ = new_likelihood;
    log_prior_ = new_prior;
    if (evaluated) engine_->accept();
    ++stats.accepted;
  } else if (evaluated) {
    engine_->reject();
  }
}

void Chain::tune() {
  for (auto i = 0u; i < kernels_.size(); ++i) {
    auto& [p0, a0] = tune_marks_[i];
    auto proposed = stats_[i].proposed - p0;
    if (proposed < 20) continue;
    auto rate = static_cast<double>(stats_[i].accepted - a0) / static_cast<double>(proposed);
    kernels_[i].kernel->tune(rate);
    stats_[i].window = kernels_[i].kernel->window();
    p0 = stats_[i].proposed;
    a0 = stats_[i].accepted;
  }
}

auto Chain::audit() const -> double {
  auto prior = glottochron::log_prior(state_, context_->taxa, options_.hyper);
  auto likelihood = fresh_log_likelihood(state_);
  return std::max(std::abs(prior - log_prior_), std::abs(likelihood - log_likelihood_));
}

auto Chain::kernel_stats() const -> std::vector<KernelStats> { return stats_; }

// ---- runs ----

auto trace_sample(long iteration, const Chain& chain) -> TraceSample {
  const auto& state = chain.state();
  auto sample = TraceSample{iteration, chain.log_likelihood(), chain.log_prior(), state.tree.height(), {}};
  for (const auto& name : sampled_scalars(prior_kind(state.prior_params))) {
    sample.scalars[name] = get_scalar(state, name);
  }
  return sample;
}

auto initial_state(const RunConfig& config, std::span<const Taxon> taxa, int n_extant_in_data) -> ModelState {
  auto state = ModelState{};
  switch (config.tree_prior) {
    case TreePriorKind::coalescent:
      state.prior_params = CoalescentParams{};
      break;
    case TreePriorKind::fbd: {
      auto params = FbdParams{};
      auto family = config.n_extant_family.value_or(std::max(1, n_extant_in_data));
      params.rho = static_cast<double>(n_extant_in_data) / family;
      if (n_extant_in_data < 1) throw DataError{"the fossilized birth-death prior needs at least one extant taxon"};
      if (params.rho > 1.0) {
        throw ConfigError{"key 'n_extant_family' is smaller than the number of extant taxa in the data"};
      }
      state.prior_params = params;
      break;
    }
    case TreePriorKind::uniform:
      state.prior_params = UniformParams{config.root_bounds};
      break;
  }
  auto sampled = sampled_scalars(config.tree_prior);
  for (const auto& [name, value] : config.initial) {
    if (std::ranges::find(sampled, name) == sampled.end()) {
      throw ConfigError{"key 'init." + name + "': parameter not used by tree_prior = " +
                        std::string{to_string(config.tree_prior)}};
    }
    set_scalar(state, name, value);
  }
  for (const auto& name : config.fixed) {
    if (std::ranges::find(sampled, name) == sampled.end()) {
      throw ConfigError{"key 'fixed': parameter '" + name + "' not used by tree_prior = " +
                        std::string{to_string(config.tree_prior)}};
    }
  }
  state.tree.nodes.resize(std::max<std::size_t>(1, 2 * taxa.size() - 1));
  state.branch_rates.assign(state.tree.size(), 1.0);
  state.tree.root = 0;
  for (const auto& problem : validate_parameters(state)) {
    if (problem.rfind("branch", 0) == 0) continue;
    throw ConfigError{"invalid initial value: " + problem};
  }
  return state;
}

namespace {

struct RunState {
  std::vector<Chain> chains;
  std::vector<int> by_heat;  // chain index holding the i-th heat
  Rng swap_rng;
  RunResult result;
};

auto make_run(const McmcSetup& setup, std::shared_ptr<const KernelContext> context, const CognateMatrix* data,
              int run) -> RunState {
  auto rs = RunState{{}, {}, make_stream(setup.seed, run, -1), {}};
  for (auto c = 0; c < setup.n_chains; ++c) {
    auto rng = make_stream(setup.seed, run, c);
    auto state = setup.initial;
    if (setup.start_tree) {
      state.tree = *setup.start_tree;
    } else {
      auto root_age = starting_root_age(setup.taxa, root_bounds_of(state, setup.chain.hyper), rng);
      state.tree = random_tree(setup.taxa, root_age, rng);
    }
    state.branch_rates.assign(state.tree.size(), 1.0);
    rs.chains.emplace_back(std::move(state), context, data, setup.chain, rng, chain_heat(c, setup.heat_delta));
    rs.by_heat.push_back(c);
  }
  return rs;
}

void record(RunState& rs, int run, long iteration, const McmcCallbacks& callbacks) {
  const auto& cold = rs.chains[rs.by_heat[0]];
  auto sample = trace_sample(iteration, cold);
  if (callbacks.on_sample) callbacks.on_sample(run, sample, cold.state().tree);
  rs.result.trace.push_back(std::move(sample));
  rs.result.trees.push_back(SampledTree{iteration, cold.state().tree});
}

void advance(const McmcSetup& setup, RunState& rs, int run, long from, long to, const McmcCallbacks& callbacks) {
  auto tune_until = static_cast<long>(setup.burn_in * static_cast<double>(setup.chain_length));
  for (auto it = from + 1; it <= to; ++it) {
    for (auto& chain : rs.chains) chain.step();
    if (rs.chains.size() > 1) {
      auto n = rs.chains.size();
      auto i = std::uniform_int_distribution<std::size_t>{0, n - 1}(rs.swap_rng);
      auto j = std::uniform_int_distribution<std::size_t>{0, n - 2}(rs.swap_rng);
      if (j >= i) ++j;
      auto& a = rs.chains[rs.by_heat[i]];
      auto& b = rs.chains[rs.by_heat[j]];
      auto log_ratio = (a.heat() - b.heat()) * (b.log_posterior() - a.log_posterior());
      ++rs.result.swaps_proposed;
      if (log_ratio >= 0.0 || std::log(uniform01(rs.swap_rng)) < log_ratio) {
        auto ha = a.heat();
        a.set_heat(b.heat());
        b.set_heat(ha);
        std::swap(rs.by_heat[i], rs.by_heat[j]);
        ++rs.result.swaps_accepted;
      }
    }
    if (it <= tune_until && it % 200 == 0) {
      for (auto& chain : rs.chains) chain.tune();
    }
    if (setup.audit_every > 0 && it % setup.audit_every == 0) {
      for (const auto& chain : rs.chains) {
        auto gap = chain.audit();
        if (!(gap <= 1e-6)) {
          auto os = std::ostringstream{};
          os << "cached posterior drifted by " << gap << " at iteration " << it << " (run " << run + 1
             << ", LnL " << chain.log_likelihood() << ", LnPrior " << chain.log_prior() << ")";
          throw NumericError{os.str()};
        }
      }
    }
    const auto& cold = rs.chains[rs.by_heat[0]];
    if (!std::isfinite(cold.log_posterior())) {
      throw NumericError{"cold chain posterior is not finite at iteration " + std::to_string(it)};
    }
    if (it % setup.thin == 0) record(rs, run, it, callbacks);
  }
}

}  // namespace

auto run_mc3(const McmcSetup& setup, const CognateMatrix* data, const McmcCallbacks& callbacks) -> McmcResult {
  if (setup.chain_length <= 0 || setup.thin <= 0) throw UsageError{"run_mc3: chain_length and thin must be positive"};
  if (setup.n_runs < 1 || setup.n_chains < 1) throw UsageError{"run_mc3: need at least one run and one chain"};
  auto context = std::make_shared<KernelContext>(KernelContext{setup.taxa, setup.chain.hyper});
  auto runs = std::vector<RunState>{};
  for (auto r = 0; r < setup.n_runs; ++r) runs.push_back(make_run(setup, context, data, r));
  for (auto r = 0; r < setup.n_runs; ++r) record(runs[r], r, 0, callbacks);

  auto num_taxa = static_cast<int>(setup.taxa.size());
  auto current_asdsf = [&]() -> std::optional<double> {
    if (runs.size() < 2) return std::nullopt;
    auto trees = std::vector<std::vector<TimeTree>>{};
    for (const auto& rs : runs) {
      auto& list = trees.emplace_back();
      for (const auto& st : rs.result.trees) list.push_back(st.tree);
      if (list.size() - burn_in_count(list.size(), setup.burn_in) < 2) return std::nullopt;
    }
    return asdsf(trees, num_taxa, setup.burn_in);
  };

  auto block = std::max<long>(1, setup.print_every);
  for (auto from = 0L; from < setup.chain_length; from += block) {
    auto to = std::min(setup.chain_length, from + block);
    if (setup.threads > 1 && runs.size() > 1) {
      auto errors = std::vector<std::exception_ptr>(runs.size());
      auto workers = std::vector<std::thread>{};
      for (auto r = 0; r < static_cast<int>(runs.size()); ++r) {
        workers.emplace_back([&, r] {
          try {
            advance(setup, runs[r], r, from, to, callbacks);
          } catch (...) {
            errors[r] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    } else {
      for (auto r = 0; r < static_cast<int>(runs.size()); ++r) advance(setup, runs[r], r, from, to, callbacks);
    }
    if (callbacks.on_progress) {
      auto lnl = std::vector<double>{};
      for (const auto& rs : runs) lnl.push_back(rs.chains[rs.by_heat[0]].log_likelihood());
      callbacks.on_progress(to, lnl, current_asdsf());
    }
  }

  auto result = McmcResult{};
  result.final_asdsf = current_asdsf();
  for (auto& rs : runs) {
    auto totals = std::vector<KernelStats>{};
    for (const auto& chain : rs.chains) {
      auto stats = chain.kernel_stats();
      if (totals.empty()) {
        totals = stats;
        continue;
      }
      for (auto i = 0u; i < stats.size(); ++i) {
        totals[i].proposed += stats[i].proposed;
        totals[i].accepted += stats[i].accepted;
      }
    }
    // Report the cold chain's tuned windows.
    auto cold_stats = rs.chains[rs.by_heat[0]].kernel_stats();
    for (auto i = 0u; i < totals.size(); ++i) totals[i].window = cold_stats[i].window;
    rs.result.kernel_stats = std::move(totals);
    result.runs.push_back(std::move(rs.result));
  }
  return result;
}

}  // namespace glottochron
