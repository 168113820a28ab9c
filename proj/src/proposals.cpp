#include "glottochron/proposals.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "glottochron/clock.h"
#include "glottochron/errors.h"

namespace glottochron {

namespace {

auto uniform01(Rng& rng) -> double { return std::uniform_real_distribution<double>{0.0, 1.0}(rng); }

auto pick(Rng& rng, std::size_t n) -> std::size_t {
  return std::uniform_int_distribution<std::size_t>{0, n - 1}(rng);
}

auto log_multiplier(double window, Rng& rng) -> double { return window * (2.0 * uniform01(rng) - 1.0); }

// Every parent strictly older than its children, except sampled ancestors
// which share their attachment's age.
auto ages_consistent(const TimeTree& tree) -> bool {
  for (auto v = 0; v < tree.size(); ++v) {
    if (v == tree.root) continue;
    const auto& node = tree.nodes[v];
    const auto& parent = tree.nodes[node.parent];
    if (node.is_sampled_ancestor ? node.age != parent.age : !(node.age < parent.age)) return false;
  }
  return true;
}

auto movable_internal_nodes(const TimeTree& tree, bool include_root) -> std::vector<int> {
  auto out = std::vector<int>{};
  for (auto v = 0; v < tree.size(); ++v) {
    if (tree.nodes[v].is_tip() || tree.is_ancestor_attachment(v)) continue;
    if (v == tree.root && !include_root) continue;
    out.push_back(v);
  }
  return out;
}

auto scale_internal_ages(TimeTree& tree, double m) -> int {
  auto nodes = movable_internal_nodes(tree, true);
  for (auto v : nodes) tree.nodes[v].age *= m;
  return static_cast<int>(nodes.size());
}

class NodeSlide final : public Kernel {
 public:
  auto name() const -> std::string override { return "node_slide"; }
  auto group() const -> KernelGroup override { return KernelGroup::node_ages; }
  auto propose(ModelState& state, const KernelContext&, Rng& rng) -> std::optional<double> override {
    auto& tree = state.tree;
    auto nodes = movable_internal_nodes(tree, false);
    if (nodes.empty()) return std::nullopt;
    auto v = nodes[pick(rng, nodes.size())];
    auto lo = tree.oldest_child_age(v);
    auto hi = tree.at(tree.at(v).parent).age;
    auto age = lo + (hi - lo) * uniform01(rng);
    if (!(age > lo && age < hi)) return std::nullopt;
    tree.at(v).age = age;
    return 0.0;
  }
};

class RootScale final : public Kernel {
 public:
  explicit RootScale(double w) : Kernel{w} {}
  auto name() const -> std::string override { return "root_scale"; }
  auto group() const -> KernelGroup override { return KernelGroup::node_ages; }
  auto tunable() const -> bool override { return true; }
  auto propose(ModelState& state, const KernelContext&, Rng& rng) -> std::optional<double> override {
    auto& tree = state.tree;
    auto& root = tree.at(tree.root);
    if (root.is_tip()) return std::nullopt;
    auto floor = tree.oldest_child_age(tree.root);
    auto log_m = log_multiplier(window_, rng);
    root.age = floor + (root.age - floor) * std::exp(log_m);
    return log_m;
  }
};

class TreeScale final : public Kernel {
 public:
  TreeScale(double w, bool with_clock) : Kernel{w}, with_clock_{with_clock} { max_window_ = 2.0; }
  auto name() const -> std::string override { return with_clock_ ? "clock_tree_up_down" : "tree_scale"; }
  auto group() const -> KernelGroup override { return KernelGroup::node_ages; }
  auto tunable() const -> bool override { return true; }
  auto propose(ModelState& state, const KernelContext&, Rng& rng) -> std::optional<double> override {
    auto log_m = log_multiplier(window_, rng);
    auto m = std::exp(log_m);
    auto k = scale_internal_ages(state.tree, m);
    if (!ages_consistent(state.tree)) return std::nullopt;
    if (!with_clock_) return k * log_m;
    state.clock_rate /= m;
    return (k - 1) * log_m;
  }

 private:
  bool with_clock_;
};

class TipAge final : public Kernel {
 public:
  auto name() const -> std::string override { return "tip_age"; }
  auto group() const -> KernelGroup override { return KernelGroup::tip_ages; }
  auto propose(ModelState& state, const KernelContext& ctx, Rng& rng) -> std::optional<double> override {
    auto& tree = state.tree;
    auto dated = std::vector<int>{};
    for (auto v = 0; v < tree.size(); ++v) {
      const auto& node = tree.nodes[v];
      if (node.is_tip() && ctx.taxa[node.taxon].calibration.width() > 0.0) dated.push_back(v);
    }
    if (dated.empty()) return std::nullopt;
    auto v = dated[pick(rng, dated.size())];
    auto& node = tree.at(v);
    const auto& cal = ctx.taxa[node.taxon].calibration;
    auto age = cal.min_age + cal.width() * uniform01(rng);
    node.age = age;
    if (v == tree.root) return 0.0;
    if (node.is_sampled_ancestor) {
      auto p = node.parent;
      tree.at(p).age = age;
      if (!(tree.at(tree.other_child(p, v)).age < age)) return std::nullopt;
      if (p != tree.root && !(age < tree.at(tree.at(p).parent).age)) return std::nullopt;
      return 0.0;
    }
    if (!(age < tree.at(node.parent).age)) return std::nullopt;
    return 0.0;
  }
};

class NarrowExchange final : public Kernel {
 public:
  auto name() const -> std::string override { return "narrow_exchange"; }
  auto group() const -> KernelGroup override { return KernelGroup::topology; }
  auto propose(ModelState& state, const KernelContext&, Rng& rng) -> std::optional<double> override {
    auto& tree = state.tree;
    auto nodes = std::vector<int>{};
    for (auto v = 0; v < tree.size(); ++v) {
      if (v != tree.root && !tree.nodes[v].is_tip()) nodes.push_back(v);
    }
    if (nodes.empty()) return std::nullopt;
    auto i = nodes[pick(rng, nodes.size())];
    auto p = tree.at(i).parent;
    if (tree.is_ancestor_attachment(i) || tree.is_ancestor_attachment(p)) return std::nullopt;
    auto c = tree.at(i).children[pick(rng, 2)];
    auto u = tree.other_child(p, i);
    if (!(tree.at(u).age < tree.at(i).age)) return std::nullopt;
    tree.replace_child(i, c, u);
    tree.replace_child(p, u, c);
    tree.at(u).parent = i;
    tree.at(c).parent = p;
    return 0.0;
  }
};

class Fnpr final : public Kernel {
 public:
  auto name() const -> std::string override { return "fnpr"; }
  auto group() const -> KernelGroup override { return KernelGroup::topology; }
  auto propose(ModelState& state, const KernelContext&, Rng& rng) -> std::optional<double> override {
    auto& tree = state.tree;
    auto nodes = std::vector<int>{};
    for (auto v = 0; v < tree.size(); ++v) {
      if (v != tree.root && tree.at(v).parent != tree.root) nodes.push_back(v);
    }
    if (nodes.empty()) return std::nullopt;
    auto v = nodes[pick(rng, nodes.size())];
    auto p = tree.at(v).parent;
    auto s = tree.other_child(p, v);
    if (tree.at(v).is_sampled_ancestor || tree.at(s).is_sampled_ancestor) return std::nullopt;
    auto g = tree.at(p).parent;

    tree.replace_child(g, p, s);
    tree.at(s).parent = g;

    auto in_pruned = std::vector<bool>(tree.size(), true);
    auto stack = std::vector<int>{v};
    while (!stack.empty()) {
      auto x = stack.back();
      stack.pop_back();
      in_pruned[x] = false;
      for (auto c : tree.at(x).children) {
        if (c != k_no_node) stack.push_back(c);
      }
    }
    in_pruned[p] = false;
    auto height = tree.at(p).age;
    auto edges = std::vector<int>{};
    for (auto x = 0; x < tree.size(); ++x) {
      if (!in_pruned[x] || x == tree.root) continue;
      if (tree.at(x).age < height && height < tree.at(tree.at(x).parent).age) edges.push_back(x);
    }
    auto x = edges[pick(rng, edges.size())];
    auto xp = tree.at(x).parent;
    tree.replace_child(xp, x, p);
    tree.at(p).parent = xp;
    tree.at(p).children = {v, x};
    tree.at(x).parent = p;
    return 0.0;
  }
};

class BranchRateScale final : public Kernel {
 public:
  explicit BranchRateScale(double w) : Kernel{w} {}
  auto name() const -> std::string override { return "branch_rate_scale"; }
  auto group() const -> KernelGroup override { return KernelGroup::branch_rates; }
  auto tunable() const -> bool override { return true; }
  auto propose(ModelState& state, const KernelContext&, Rng& rng) -> std::optional<double> override {
    const auto& tree = state.tree;
    auto branches = std::vector<int>{};
    for (auto v = 0; v < tree.size(); ++v) {
      if (v != tree.root && !tree.nodes[v].is_sampled_ancestor) branches.push_back(v);
    }
    if (branches.empty()) return std::nullopt;
    auto v = branches[pick(rng, branches.size())];
    auto log_m = log_multiplier(window_, rng);
    state.branch_rates[v] *= std::exp(log_m);
    return log_m;
  }
};

// Collapse a fossil tip onto its parent (delete-branch) or lift a sampled
// ancestor back onto its own branch (add-branch). The parent's new age under
// add-branch is uniform between the fossil and the grandparent and the
// fossil's branch rate is drawn from its relaxed-clock prior.
class AncestorToggle final : public Kernel {
 public:
  auto name() const -> std::string override { return "ancestor_toggle"; }
  auto group() const -> KernelGroup override { return KernelGroup::ancestor_toggle; }
  auto propose(ModelState& state, const KernelContext& ctx, Rng& rng) -> std::optional<double> override {
    auto& tree = state.tree;
    auto fossils = std::vector<int>{};
    for (auto v = 0; v < tree.size(); ++v) {
      const auto& node = tree.nodes[v];
      if (node.is_tip() && !ctx.taxa[node.taxon].calibration.is_extant()) fossils.push_back(v);
    }
    if (fossils.empty()) return std::nullopt;
    auto f = fossils[pick(rng, fossils.size())];
    auto p = tree.at(f).parent;
    if (p == k_no_node || p == tree.root) return std::nullopt;
    auto g = tree.at(p).parent;
    auto s = tree.other_child(p, f);
    auto f_age = tree.at(f).age;
    auto g_age = tree.at(g).age;

    if (tree.at(f).is_sampled_ancestor) {
      auto age = f_age + (g_age - f_age) * uniform01(rng);
      if (!(age > f_age && age < g_age)) return std::nullopt;
      tree.at(p).age = age;
      tree.at(f).is_sampled_ancestor = false;
      auto rate = draw_igr_rate(age - f_age, state.igr_variance, state.clock_rate, rng);
      state.branch_rates[f] = rate;
      return std::log(g_age - f_age) -
             igr_branch_log_density(rate, age - f_age, state.igr_variance, state.clock_rate);
    }

    if (tree.at(s).is_sampled_ancestor || !(tree.at(s).age < f_age)) return std::nullopt;
    auto non_ancestral = 0;
    for (const auto& node : tree.nodes) {
      if (node.is_tip() && !node.is_sampled_ancestor) ++non_ancestral;
    }
    if (non_ancestral <= 2) return std::nullopt;
    auto old_age = tree.at(p).age;
    auto old_rate = state.branch_rates[f];
    tree.at(p).age = f_age;
    tree.at(f).is_sampled_ancestor = true;
    state.branch_rates[f] = 1.0;
    return -std::log(g_age - f_age) +
           igr_branch_log_density(old_rate, old_age - f_age, state.igr_variance, state.clock_rate);
  }
};

class ScalarScale final : public Kernel {
 public:
  ScalarScale(std::string parameter, double w) : Kernel{w}, parameter_{std::move(parameter)} {}
  auto name() const -> std::string override { return "scale_" + parameter_; }
  auto group() const -> KernelGroup override { return KernelGroup::scalars; }
  auto tunable() const -> bool override { return true; }
  auto touches_likelihood() const -> bool override { return parameter_ == "alpha" || parameter_ == "clock_rate"; }
  auto propose(ModelState& state, const KernelContext&, Rng& rng) -> std::optional<double> override {
    auto log_m = log_multiplier(window_, rng);
    set_scalar(state, parameter_, get_scalar(state, parameter_) * std::exp(log_m));
    return log_m;
  }

 private:
  std::string parameter_;
};

class UnitWindow final : public Kernel {
 public:
  UnitWindow(std::string parameter, double w) : Kernel{w}, parameter_{std::move(parameter)} { max_window_ = 1.0; }
  auto name() const -> std::string override { return "window_" + parameter_; }
  auto group() const -> KernelGroup override { return KernelGroup::scalars; }
  auto tunable() const -> bool override { return true; }
  auto touches_likelihood() const -> bool override { return parameter_ == "pi0"; }
  auto propose(ModelState& state, const KernelContext&, Rng& rng) -> std::optional<double> override {
    auto x = get_scalar(state, parameter_) + window_ * (2.0 * uniform01(rng) - 1.0);
    while (x < 0.0 || x > 1.0) x = x < 0.0 ? -x : 2.0 - x;
    if (x <= 0.0 || x >= 1.0) return std::nullopt;
    set_scalar(state, parameter_, x);
    return 0.0;
  }

 private:
  std::string parameter_;
};

}  // namespace

void Kernel::tune(double acceptance_rate) {
  if (!tunable()) return;
  window_ = std::clamp(window_ * std::exp(acceptance_rate - 0.3), min_window_, max_window_);
}

auto make_node_slide() -> KernelPtr { return std::make_unique<NodeSlide>(); }
auto make_root_scale(double window) -> KernelPtr { return std::make_unique<RootScale>(window); }
auto make_tree_scale(double window) -> KernelPtr { return std::make_unique<TreeScale>(window, false); }
auto make_clock_tree_up_down(double window) -> KernelPtr { return std::make_unique<TreeScale>(window, true); }
auto make_tip_age() -> KernelPtr { return std::make_unique<TipAge>(); }
auto make_narrow_exchange() -> KernelPtr { return std::make_unique<NarrowExchange>(); }
auto make_fnpr() -> KernelPtr { return std::make_unique<Fnpr>(); }
auto make_branch_rate_scale(double window) -> KernelPtr { return std::make_unique<BranchRateScale>(window); }
auto make_ancestor_toggle() -> KernelPtr { return std::make_unique<AncestorToggle>(); }
auto make_scalar_scale(const std::string& parameter, double window) -> KernelPtr {
  return std::make_unique<ScalarScale>(parameter, window);
}
auto make_unit_window(const std::string& parameter, double window) -> KernelPtr {
  return std::make_unique<UnitWindow>(parameter, window);
}

auto sampled_scalars(TreePriorKind kind) -> std::vector<std::string> {
  auto names = std::vector<std::string>{"alpha", "clock_rate", "igr_variance", "pi0"};
  if (kind == TreePriorKind::coalescent) names.emplace_back("pop_size");
  if (kind == TreePriorKind::fbd) {
    names.insert(names.end(), {"diversification", "fossil_sampling", "turnover"});
  }
  std::ranges::sort(names);
  return names;
}

auto get_scalar(const ModelState& state, const std::string& name) -> double {
  if (name == "alpha") return state.alpha;
  if (name == "clock_rate") return state.clock_rate;
  if (name == "igr_variance") return state.igr_variance;
  if (name == "pi0") return state.pi[0];
  if (const auto* c = std::get_if<CoalescentParams>(&state.prior_params)) {
    if (name == "pop_size") return c->pop_size;
  }
  if (const auto* f = std::get_if<FbdParams>(&state.prior_params)) {
    if (name == "diversification") return f->diversification;
    if (name == "turnover") return f->turnover;
    if (name == "fossil_sampling") return f->fossil_sampling;
  }
  throw UsageError{"parameter '" + name + "' does not exist under the active tree prior"};
}

void set_scalar(ModelState& state, const std::string& name, double value) {
  if (name == "alpha") {
    state.alpha = value;
  } else if (name == "clock_rate") {
    state.clock_rate = value;
  } else if (name == "igr_variance") {
    state.igr_variance = value;
  } else if (name == "pi0") {
    state.pi = {value, 1.0 - value};
  } else if (auto* c = std::get_if<CoalescentParams>(&state.prior_params); c && name == "pop_size") {
    c->pop_size = value;
  } else if (auto* f = std::get_if<FbdParams>(&state.prior_params); f && name == "diversification") {
    f->diversification = value;
  } else if (f && name == "turnover") {
    f->turnover = value;
  } else if (f && name == "fossil_sampling") {
    f->fossil_sampling = value;
  } else {
    throw UsageError{"parameter '" + name + "' does not exist under the active tree prior"};
  }
}

auto make_kernel_set(const ModelState& state, std::span<const Taxon> taxa, const KernelSetOptions& options)
    -> std::vector<WeightedKernel> {
  auto kind = prior_kind(state.prior_params);
  auto n = static_cast<int>(taxa.size());
  auto by_group = std::map<KernelGroup, std::vector<KernelPtr>>{};
  auto has_dated = std::ranges::any_of(taxa, [](const Taxon& t) { return t.calibration.width() > 0.0; });
  auto has_fossils = std::ranges::any_of(taxa, [](const Taxon& t) { return !t.calibration.is_extant(); });

  if (!options.fixed_topology && n >= 3) {
    by_group[KernelGroup::topology].push_back(make_narrow_exchange());
    by_group[KernelGroup::topology].push_back(make_fnpr());
  }
  if (n >= 3) by_group[KernelGroup::node_ages].push_back(make_node_slide());
  if (n >= 2) {
    by_group[KernelGroup::node_ages].push_back(make_root_scale());
    by_group[KernelGroup::node_ages].push_back(make_tree_scale());
    if (!options.fixed.contains("clock_rate")) {
      by_group[KernelGroup::node_ages].push_back(make_clock_tree_up_down());
    }
    by_group[KernelGroup::branch_rates].push_back(make_branch_rate_scale());
  }
  if (has_dated) by_group[KernelGroup::tip_ages].push_back(make_tip_age());
  for (const auto& name : sampled_scalars(kind)) {
    if (options.fixed.contains(name)) continue;
    auto unit = name == "pi0" || name == "turnover" || name == "fossil_sampling";
    by_group[KernelGroup::scalars].push_back(unit ? make_unit_window(name) : make_scalar_scale(name));
  }
  auto toggle = kind == TreePriorKind::fbd && has_fossils && !options.fixed_topology && n >= 3;
  if (toggle) by_group[KernelGroup::ancestor_toggle].push_back(make_ancestor_toggle());

  const auto& w = options.weights;
  auto group_weight = [&](KernelGroup g) {
    switch (g) {
      case KernelGroup::topology: return toggle ? w.topology - w.ancestor_toggle : w.topology;
      case KernelGroup::node_ages: return w.node_ages;
      case KernelGroup::tip_ages: return w.tip_ages;
      case KernelGroup::scalars: return w.scalars;
      case KernelGroup::branch_rates: return w.branch_rates;
      case KernelGroup::ancestor_toggle: return w.ancestor_toggle;
    }
    return 0.0;
  };

  auto out = std::vector<WeightedKernel>{};
  auto total = 0.0;
  for (auto& [g, kernels] : by_group) {
    auto gw = std::max(0.0, group_weight(g));
    if (gw == 0.0 || kernels.empty()) continue;
    for (auto& k : kernels) {
      out.push_back(WeightedKernel{std::move(k), gw / static_cast<double>(kernels.size())});
      total += gw / static_cast<double>(kernels.size());
    }
  }
  if (out.empty() || !(total > 0.0)) throw ConfigError{"no proposal kernel has positive weight"};
  for (auto& wk : out) wk.weight /= total;
  return out;
}

}  // namespace glottochron
