#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "glottochron/data_io.h"
#include "glottochron/likelihood.h"
#include "glottochron/proposals.h"

namespace glottochron {

// Heat of chain i: 1 / (1 + delta * i).
auto chain_heat(int index, double heat_delta) -> double;

// Independent stream for (seed, run, chain); chain -1 is the run's swap stream.
auto make_stream(std::uint64_t seed, int run, int chain) -> Rng;

struct KernelStats {
  std::string name;
  long proposed = 0;
  long accepted = 0;
  double window = 0.0;
};

struct ChainOptions {
  KernelSetOptions kernels;
  HyperpriorSettings hyper;
  AscertainmentMode ascertainment = AscertainmentMode::global;
  bool prior_only = false;
};

// One Metropolis-Hastings chain with cached posterior terms. The target is
// (likelihood * prior)^heat.
class Chain {
 public:
  Chain(ModelState initial, std::shared_ptr<const KernelContext> context, const CognateMatrix* data,
        const ChainOptions& options, Rng rng, double heat);

  void step();
  // Adapt tunable kernels from acceptance since the previous call.
  void tune();

  auto state() const -> const ModelState& { return state_; }
  auto log_likelihood() const -> double { return log_likelihood_; }
  auto log_prior() const -> double { return log_prior_; }
  auto log_posterior() const -> double { return log_likelihood_ + log_prior_; }
  auto heat() const -> double { return heat_; }
  void set_heat(double heat) { heat_ = heat; }
  auto rng() -> Rng& { return rng_; }

  // Recompute both terms from scratch; returns the largest absolute
  // discrepancy against the caches.
  auto audit() const -> double;
  auto kernel_stats() const -> std::vector<KernelStats>;

 private:
  auto fresh_log_likelihood(const ModelState& state) const -> double;

  ModelState state_;
  std::shared_ptr<const KernelContext> context_;
  const CognateMatrix* data_;
  ChainOptions options_;
  Rng rng_;
  double heat_;
  std::unique_ptr<LikelihoodEngine> engine_;
  std::vector<WeightedKernel> kernels_;
  std::vector<double> cumulative_;
  std::vector<KernelStats> stats_;
  std::vector<std::pair<long, long>> tune_marks_;
  double log_likelihood_ = 0.0;
  double log_prior_ = 0.0;
};

// Everything run_mc3 needs besides the data.
struct McmcSetup {
  std::vector<Taxon> taxa;
  ModelState initial;             // parameters; the tree is replaced per chain unless start_tree is set
  std::optional<TimeTree> start_tree;
  long chain_length = 1'000'000;
  long thin = 1000;
  int n_runs = 2;
  int n_chains = 3;
  double heat_delta = 0.1;
  std::uint64_t seed = 1;
  double burn_in = 0.25;        // windows are tuned during this leading fraction
  long print_every = 10'000;
  long audit_every = 10'000;
  int threads = 1;
  ChainOptions chain;
};

struct RunResult {
  std::vector<TraceSample> trace;
  std::vector<SampledTree> trees;
  std::vector<KernelStats> kernel_stats;  // summed over the run's chains
  long swaps_proposed = 0;
  long swaps_accepted = 0;
};

struct McmcResult {
  std::vector<RunResult> runs;
  std::optional<double> final_asdsf;
};

struct McmcCallbacks {
  std::function<void(int run, const TraceSample&, const TimeTree&)> on_sample;
  std::function<void(long iteration, const std::vector<double>& cold_log_likelihoods,
                     std::optional<double> asdsf)>
      on_progress;
};

auto trace_sample(long iteration, const Chain& chain) -> TraceSample;

// Starting state built from a validated configuration and the dataset taxa.
auto initial_state(const RunConfig& config, std::span<const Taxon> taxa, int n_extant_in_data) -> ModelState;

// Metropolis-coupled MCMC. `data` = nullptr samples the prior (log-likelihood
// held at 0). Each iteration advances every chain by one step and attempts one
// swap between a random pair of chains; the cold chain is recorded at
// iterations 0, thin, 2 thin, ...
auto run_mc3(const McmcSetup& setup, const CognateMatrix* data, const McmcCallbacks& callbacks = {})
    -> McmcResult;

}  // namespace glottochron
