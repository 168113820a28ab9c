#pragma once

#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "glottochron/model_state.h"
#include "glottochron/settings.h"
#include "glottochron/time_tree.h"

namespace glottochron {

enum class KernelGroup { topology, node_ages, tip_ages, scalars, branch_rates, ancestor_toggle };

// What a kernel needs to know about the problem; shared read-only by chains.
struct KernelContext {
  std::vector<Taxon> taxa;
  HyperpriorSettings hyper;
};

// A Metropolis-Hastings proposal. propose() edits `state` in place and returns
// the log Hastings ratio, or nothing when the move is impossible (rejected
// without evaluating the target).
class Kernel {
 public:
  virtual ~Kernel() = default;

  virtual auto name() const -> std::string = 0;
  virtual auto group() const -> KernelGroup = 0;
  // False for moves that leave every branch's substitution length and the
  // substitution parameters unchanged.
  virtual auto touches_likelihood() const -> bool { return true; }
  virtual auto propose(ModelState& state, const KernelContext& ctx, Rng& rng) -> std::optional<double> = 0;

  // Step size, tuned during burn-in for kernels that have one.
  auto window() const -> double { return window_; }
  virtual auto tunable() const -> bool { return false; }
  void tune(double acceptance_rate);

 protected:
  explicit Kernel(double window = 0.0) : window_{window} {}
  double window_;
  double min_window_ = 1e-4;
  double max_window_ = 10.0;
};

using KernelPtr = std::unique_ptr<Kernel>;

auto make_node_slide() -> KernelPtr;
auto make_root_scale(double window = 0.5) -> KernelPtr;
auto make_tree_scale(double window = 0.3) -> KernelPtr;
auto make_clock_tree_up_down(double window = 0.3) -> KernelPtr;
auto make_tip_age() -> KernelPtr;
auto make_narrow_exchange() -> KernelPtr;
auto make_fnpr() -> KernelPtr;
auto make_branch_rate_scale(double window = 0.5) -> KernelPtr;
auto make_ancestor_toggle() -> KernelPtr;

// Multiplier move on a positive scalar: alpha, clock_rate, igr_variance,
// pop_size or diversification.
auto make_scalar_scale(const std::string& parameter, double window = 0.5) -> KernelPtr;
// Reflecting window on a parameter confined to the unit interval: pi0,
// turnover or fossil_sampling.
auto make_unit_window(const std::string& parameter, double window = 0.2) -> KernelPtr;

// Scalar parameters sampled under a prior kind, alphabetically.
auto sampled_scalars(TreePriorKind kind) -> std::vector<std::string>;
auto get_scalar(const ModelState& state, const std::string& name) -> double;
void set_scalar(ModelState& state, const std::string& name, double value);

struct WeightedKernel {
  KernelPtr kernel;
  double weight = 0.0;  // normalized
};

struct KernelSetOptions {
  KernelWeights weights;
  std::set<std::string> fixed;
  bool fixed_topology = false;
};

// Kernels applicable to the state and taxa; group weights are split equally
// among a group's kernels and renormalized over the groups present.
auto make_kernel_set(const ModelState& state, std::span<const Taxon> taxa, const KernelSetOptions& options)
    -> std::vector<WeightedKernel>;

}  // namespace glottochron
