#include "glottochron/tree_priors.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "glottochron/clock.h"
#include "glottochron/errors.h"

namespace glottochron {

namespace {

constexpr double k_neg_inf = -std::numeric_limits<double>::infinity();

auto exponential_log_pdf(double x, double mean) -> double {
  if (!(x > 0.0)) return k_neg_inf;
  return -std::log(mean) - x / mean;
}

auto coefficients(const FbdRates& r) -> std::pair<double, double> {
  auto a = r.lambda - r.mu - r.psi;
  auto c1 = std::sqrt(a * a + 4.0 * r.lambda * r.psi);
  if (!(c1 > 0.0)) throw NumericError{"fossilized birth-death: c1 = 0 for the given rates"};
  auto c2 = -(r.lambda - r.mu - 2.0 * r.lambda * r.rho - r.psi) / c1;
  return {c1, c2};
}

}  // namespace

auto coalescent_log_density(const TimeTree& tree, double theta) -> double {
  if (!(theta > 0.0)) throw UsageError{"coalescent_log_density: theta must be positive"};
  // +1 for a sampling event, -1 for a coalescence; processed from the present back.
  auto events = std::vector<std::pair<double, int>>{};
  for (const auto& node : tree.nodes) {
    if (node.is_sampled_ancestor) return k_neg_inf;
    events.emplace_back(node.age, node.is_tip() ? +1 : -1);
  }
  // Samples before coalescences at equal ages so a lineage exists to coalesce.
  std::ranges::sort(events, [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second > b.second;
  });
  auto log_density = 0.0;
  auto lineages = 0;
  auto last = events.front().first;
  for (const auto& [age, kind] : events) {
    auto dt = age - last;
    if (lineages >= 2) log_density -= lineages * (lineages - 1) * dt / theta;
    last = age;
    if (kind > 0) {
      ++lineages;
    } else {
      log_density += std::log(2.0 / theta);
      --lineages;
    }
  }
  return log_density;
}

auto fbd_helpers(const FbdRates& rates, double t) -> FbdHelpers {
  auto h = FbdHelpers{};
  std::tie(h.c1, h.c2) = coefficients(rates);
  auto e = std::exp(-h.c1 * t);
  auto num = e * (1.0 - h.c2) - (1.0 + h.c2);
  auto den = e * (1.0 - h.c2) + (1.0 + h.c2);
  h.p0 = 1.0 + (-(rates.lambda - rates.mu - rates.psi) + h.c1 * num / den) / (2.0 * rates.lambda);
  h.p1 = std::exp(fbd_log_p1(rates, t));
  auto no_fossils = rates;
  no_fossils.psi = 0.0;
  h.p0_hat = 1.0 - std::exp(fbd_log_one_minus_p0(no_fossils, t));
  return h;
}

auto fbd_log_p1(const FbdRates& rates, double t) -> double {
  auto [c1, c2] = coefficients(rates);
  auto e = std::exp(-c1 * t);
  auto den = (1.0 + c2) * (1.0 + c2) + 2.0 * (1.0 - c2 * c2) * e + (1.0 - c2) * (1.0 - c2) * e * e;
  return std::log(4.0 * rates.rho) - c1 * t - std::log(den);
}

auto fbd_log_one_minus_p0(const FbdRates& rates, double t) -> double {
  auto [c1, c2] = coefficients(rates);
  auto e = std::exp(-c1 * t);
  auto den = e * (1.0 - c2) + (1.0 + c2);
  // Algebraically 1 - p0(t); avoids the cancellation in 1 - (1 + ...).
  auto value = rates.rho + c1 * (1.0 - c2 * c2) * (-std::expm1(-c1 * t)) / (2.0 * rates.lambda * den);
  if (!(value > 0.0)) return k_neg_inf;
  return std::log(value);
}

auto fbd_counts(const TimeTree& tree) -> FbdCounts {
  auto counts = FbdCounts{};
  for (const auto& node : tree.nodes) {
    if (!node.is_tip()) continue;
    if (node.is_sampled_ancestor) {
      ++counts.sampled_ancestors;
    } else if (node.age == 0.0) {
      ++counts.extant;
    } else {
      ++counts.extinct_tips;
    }
  }
  return counts;
}

auto fbd_log_density(const TimeTree& tree, const FbdRates& rates) -> double {
  auto counts = fbd_counts(tree);
  auto n = counts.extant;
  auto m = counts.extinct_tips;
  auto k = counts.sampled_ancestors;
  if (n + m < 2) throw UsageError{"fbd_log_density: need at least two non-ancestral tips"};
  if (tree.is_ancestor_attachment(tree.root)) return k_neg_inf;
  auto fossils = k + m;
  if (fossils > 0 && !(rates.psi > 0.0)) return k_neg_inf;

  auto x1 = tree.height();
  auto no_fossils = rates;
  no_fossils.psi = 0.0;
  auto log_density = (n + m - 2) * std::log(rates.lambda);
  if (fossils > 0) log_density += fossils * std::log(rates.psi);
  log_density -= 2.0 * fbd_log_one_minus_p0(no_fossils, x1);
  log_density += fbd_log_p1(rates, x1);
  for (auto v = 0; v < tree.size(); ++v) {
    const auto& node = tree.nodes[v];
    if (node.is_tip()) {
      if (!node.is_sampled_ancestor && node.age != 0.0) {
        auto p0 = -std::expm1(fbd_log_one_minus_p0(rates, node.age));
        log_density += std::log(p0) - fbd_log_p1(rates, node.age);
      }
    } else if (!tree.is_ancestor_attachment(v)) {
      log_density += fbd_log_p1(rates, node.age);
    }
  }
  return log_density;
}

auto fbd_log_density(const TimeTree& tree, const FbdParams& params) -> double {
  return fbd_log_density(tree, to_rates(params));
}

auto uniform_tree_log_density(const TimeTree& tree, const UniformParams& params) -> double {
  const auto& bounds = params.root_bounds;
  auto r = tree.height();
  if (!bounds.contains(r)) return k_neg_inf;
  auto log_density = -std::log(bounds.max_age - bounds.min_age);
  auto oldest_tip = std::vector<double>(tree.size(), 0.0);
  for (auto v : tree.postorder()) {
    const auto& node = tree.at(v);
    if (node.is_tip()) {
      oldest_tip[v] = node.age;
      continue;
    }
    oldest_tip[v] = std::max(oldest_tip[node.children[0]], oldest_tip[node.children[1]]);
    if (v == tree.root) continue;
    auto span = r - oldest_tip[v];
    if (!(span > 0.0)) return k_neg_inf;
    log_density -= std::log(span);
  }
  return log_density;
}

auto tree_log_prior(const ModelState& state) -> double {
  if (const auto* c = std::get_if<CoalescentParams>(&state.prior_params)) {
    if (!(c->pop_size > 0.0)) return k_neg_inf;
    return coalescent_log_density(state.tree, 2.0 * c->pop_size);
  }
  if (const auto* f = std::get_if<FbdParams>(&state.prior_params)) {
    if (!(f->diversification > 0.0) || !(f->turnover >= 0.0 && f->turnover < 1.0) ||
        !(f->fossil_sampling >= 0.0 && f->fossil_sampling < 1.0)) {
      return k_neg_inf;
    }
    return fbd_log_density(state.tree, *f);
  }
  return uniform_tree_log_density(state.tree, std::get<UniformParams>(state.prior_params));
}

auto hyperprior_log_density(const ModelState& state, std::span<const Taxon> taxa,
                            const HyperpriorSettings& settings) -> double {
  auto log_density = 0.0;
  log_density += exponential_log_pdf(state.alpha, settings.alpha_mean);
  log_density += exponential_log_pdf(state.clock_rate, settings.clock_rate_mean);
  log_density += exponential_log_pdf(state.igr_variance, settings.igr_variance_mean);
  // Flat Dirichlet(1, 1) on pi contributes a constant.
  if (!(state.pi[0] > 0.0 && state.pi[1] > 0.0)) return k_neg_inf;

  if (const auto* c = std::get_if<CoalescentParams>(&state.prior_params)) {
    if (!(c->pop_size > 0.0)) return k_neg_inf;
    // Gamma(shape a, rate b): a log b - lgamma(a) + (a - 1) log P - b P.
    auto a = settings.pop_size_shape;
    auto b = settings.pop_size_rate;
    log_density += a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(c->pop_size) - b * c->pop_size;
  } else if (const auto* f = std::get_if<FbdParams>(&state.prior_params)) {
    log_density += exponential_log_pdf(f->diversification, settings.diversification_mean);
    // Beta(1, 1) on turnover and fossil sampling.
    if (!(f->turnover >= 0.0 && f->turnover < 1.0)) return k_neg_inf;
    if (!(f->fossil_sampling >= 0.0 && f->fossil_sampling < 1.0)) return k_neg_inf;
    const auto& bounds = settings.root_bounds;
    if (!bounds.contains(state.tree.height())) return k_neg_inf;
    log_density -= std::log(bounds.max_age - bounds.min_age);
  }

  for (const auto& node : state.tree.nodes) {
    if (!node.is_tip()) continue;
    const auto& cal = taxa[node.taxon].calibration;
    if (!cal.contains(node.age)) return k_neg_inf;
    if (cal.width() > 0.0) log_density -= std::log(cal.width());
  }
  return log_density;
}

auto log_prior(const ModelState& state, std::span<const Taxon> taxa, const HyperpriorSettings& settings)
    -> double {
  auto hyper = hyperprior_log_density(state, taxa, settings);
  if (hyper == k_neg_inf) return hyper;
  auto tree = tree_log_prior(state);
  if (tree == k_neg_inf) return tree;
  auto clock = igr_log_prior(state.branch_rates, state.igr_variance, state.tree, state.clock_rate);
  auto total = hyper + tree + clock;
  if (std::isnan(total)) throw NumericError{"log prior is NaN"};
  return total;
}

}  // namespace glottochron
