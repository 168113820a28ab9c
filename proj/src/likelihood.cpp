#include "glottochron/likelihood.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "glottochron/errors.h"

namespace glottochron {

auto transition_matrix(std::array<double, 2> pi, double nu) -> TransitionMatrix {
  if (!(nu >= 0.0)) throw UsageError{"transition_matrix: negative branch length"};
  auto beta = 1.0 / (2.0 * pi[0] * pi[1]);
  auto e = std::exp(-beta * nu);
  auto m = TransitionMatrix{};
  for (auto i = 0; i < 2; ++i) {
    for (auto j = 0; j < 2; ++j) {
      m.p[i][j] = pi[j] + ((i == j ? 1.0 : 0.0) - pi[j]) * e;
    }
  }
  return m;
}

auto discretize_gamma(double alpha, int k) -> GammaCategories {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError{"discretize_gamma: alpha must be positive"};
  if (k < 1) throw UsageError{"discretize_gamma: need at least one category"};
  auto cats = GammaCategories{};
  if (k == 1) {
    cats.rates = {1.0};
    return cats;
  }
  // X ~ Gamma(alpha, rate alpha); E[X; X < q] = P(alpha + 1, alpha q).
  auto lower = 0.0;
  auto sum = 0.0;
  for (auto i = 1; i <= k; ++i) {
    auto upper = 1.0;
    if (i < k) {
      auto q = boost::math::gamma_p_inv(alpha, static_cast<double>(i) / k) / alpha;
      upper = boost::math::gamma_p(alpha + 1.0, alpha * q);
    }
    auto rate = (upper - lower) * k;
    cats.rates.push_back(rate);
    sum += rate;
    lower = upper;
  }
  for (auto& r : cats.rates) r *= k / sum;
  return cats;
}

namespace {

constexpr double k_scale_threshold = 1e-100;

auto tip_partial(Cell c, int s) -> double {
  if (c == Cell::missing) return 1.0;
  return (static_cast<int>(c) == s) ? 1.0 : 0.0;
}

auto node_nu(const ModelState& state, int v) -> double {
  auto nu = effective_branch_length(state.tree, v, state.clock_rate, state.branch_rates);
  if (!std::isfinite(nu) || nu < 0.0) {
    throw NumericError{"non-finite or negative effective branch length at node " + std::to_string(v)};
  }
  return nu;
}

struct PatternSet {
  std::vector<std::vector<Cell>> patterns;
  std::vector<double> weights;
  std::vector<double> asc_weights;
};

auto compress(const CognateMatrix& matrix, AscertainmentMode mode) -> PatternSet {
  auto set = PatternSet{};
  auto index = std::map<std::vector<Cell>, int>{};
  for (auto s = 0; s < matrix.num_sites(); ++s) {
    auto col = matrix.column(s);
    auto [it, inserted] = index.try_emplace(col, static_cast<int>(set.patterns.size()));
    if (inserted) {
      set.patterns.push_back(col);
      set.weights.push_back(0.0);
    }
    set.weights[it->second] += 1.0;
  }
  set.asc_weights.assign(set.patterns.size(), 0.0);
  auto asc_index = std::map<std::vector<Cell>, int>{};
  auto add_asc = [&](const std::vector<Cell>& col, double w) {
    auto [it, inserted] = asc_index.try_emplace(col, static_cast<int>(set.patterns.size()));
    if (inserted) {
      set.patterns.push_back(col);
      set.weights.push_back(0.0);
      set.asc_weights.push_back(0.0);
    }
    set.asc_weights[it->second] += w;
  };
  if (mode == AscertainmentMode::global) {
    add_asc(std::vector<Cell>(matrix.num_taxa(), Cell::absent), matrix.num_sites());
  } else {
    for (auto s = 0; s < matrix.num_sites(); ++s) {
      auto col = matrix.column(s);
      for (auto& c : col) {
        if (c != Cell::missing) c = Cell::absent;
      }
      add_asc(col, 1.0);
    }
  }
  return set;
}

auto combine(std::span<const double> weights, std::span<const double> asc_weights,
             std::span<const double> log_l) -> double {
  auto total = 0.0;
  for (auto p = 0u; p < weights.size(); ++p) {
    if (weights[p] > 0.0) total += weights[p] * log_l[p];
    if (asc_weights[p] > 0.0) {
      auto l0 = std::exp(log_l[p]);
      if (!(l0 < 1.0 - 1e-15)) {
        throw NumericError{"all-absent column has likelihood 1; tree is degenerate"};
      }
      total -= asc_weights[p] * std::log1p(-l0);
    }
  }
  if (!std::isfinite(total)) throw NumericError{"non-finite log-likelihood"};
  return total;
}

// One-shot pruning over all patterns, optionally carrying d/dc alongside.
struct Pruner {
  const ModelState& state;
  const PatternSet& set;
  GammaCategories cats;
  bool with_gradient;
  int np;
  int nk;
  std::vector<std::vector<double>> partial;
  std::vector<std::vector<double>> d_partial;
  std::vector<std::vector<double>> log_scale;

  Pruner(const ModelState& s, const PatternSet& ps, bool grad)
      : state{s}, set{ps}, cats{discretize_gamma(s.alpha, k_rate_categories)}, with_gradient{grad} {
    np = static_cast<int>(set.patterns.size());
    nk = cats.size();
  }

  auto run() -> std::vector<double> {
    const auto& tree = state.tree;
    partial.assign(tree.size(), {});
    d_partial.assign(tree.size(), {});
    log_scale.assign(tree.size(), std::vector<double>(np, 0.0));
    auto beta = 1.0 / (2.0 * state.pi[0] * state.pi[1]);
    for (auto v : tree.postorder()) {
      const auto& node = tree.at(v);
      auto& out = partial[v];
      out.assign(static_cast<std::size_t>(np) * nk * 2, 1.0);
      auto& d_out = d_partial[v];
      if (with_gradient) d_out.assign(out.size(), 0.0);
      if (node.is_tip()) {
        for (auto p = 0; p < np; ++p) {
          for (auto k = 0; k < nk; ++k) {
            for (auto s = 0; s < 2; ++s) out[(p * nk + k) * 2 + s] = tip_partial(set.patterns[p][node.taxon], s);
          }
        }
        continue;
      }
      for (auto c : node.children) {
        auto nu = node_nu(state, c);
        for (auto k = 0; k < nk; ++k) {
          auto m = transition_matrix(state.pi, nu * cats.rates[k]);
          // dP_ij/dc = (delta_ij - pi_j) * (-beta nu r_k / c) * exp(...)
          auto e = std::exp(-beta * nu * cats.rates[k]);
          auto de = -beta * nu * cats.rates[k] / state.clock_rate * e;
          for (auto p = 0; p < np; ++p) {
            auto base = (p * nk + k) * 2;
            const auto* in = &partial[c][base];
            double x[2];
            double dx[2] = {0.0, 0.0};
            for (auto i = 0; i < 2; ++i) {
              x[i] = m.p[i][0] * in[0] + m.p[i][1] * in[1];
              if (with_gradient) {
                const auto* din = &d_partial[c][base];
                auto dm0 = ((i == 0 ? 1.0 : 0.0) - state.pi[0]) * de;
                auto dm1 = ((i == 1 ? 1.0 : 0.0) - state.pi[1]) * de;
                dx[i] = dm0 * in[0] + dm1 * in[1] + m.p[i][0] * din[0] + m.p[i][1] * din[1];
              }
            }
            for (auto i = 0; i < 2; ++i) {
              if (with_gradient) d_out[base + i] = d_out[base + i] * x[i] + out[base + i] * dx[i];
              out[base + i] *= x[i];
            }
          }
        }
      }
      for (auto p = 0; p < np; ++p) {
        auto sum = log_scale[node.children[0]][p] + log_scale[node.children[1]][p];
        auto base = p * nk * 2;
        auto mx = *std::max_element(out.begin() + base, out.begin() + base + nk * 2);
        if (!std::isfinite(mx)) throw NumericError{"non-finite partial likelihood at node " + std::to_string(v)};
        if (mx > 0.0 && mx < k_scale_threshold) {
          for (auto i = 0; i < nk * 2; ++i) {
            out[base + i] /= mx;
            if (with_gradient) d_partial[v][base + i] /= mx;
          }
          sum += std::log(mx);
        }
        log_scale[v][p] = sum;
      }
    }
    auto log_l = std::vector<double>(np);
    auto d_l = std::vector<double>(np);
    auto r = tree.root;
    for (auto p = 0; p < np; ++p) {
      auto l = 0.0;
      auto dl = 0.0;
      for (auto k = 0; k < nk; ++k) {
        for (auto s = 0; s < 2; ++s) {
          l += cats.weight() * state.pi[s] * partial[r][(p * nk + k) * 2 + s];
          if (with_gradient) dl += cats.weight() * state.pi[s] * d_partial[r][(p * nk + k) * 2 + s];
        }
      }
      log_l[p] = std::log(l) + log_scale[r][p];
      d_l[p] = dl / l;
    }
    gradient_terms = std::move(d_l);
    return log_l;
  }

  std::vector<double> gradient_terms;
};

}  // namespace

auto site_log_likelihood(const ModelState& state, std::span<const Cell> column) -> double {
  auto set = PatternSet{{std::vector<Cell>(column.begin(), column.end())}, {1.0}, {0.0}};
  auto pruner = Pruner{state, set, false};
  auto log_l = pruner.run();
  if (!std::isfinite(log_l[0])) throw NumericError{"non-finite site log-likelihood"};
  return log_l[0];
}

auto alignment_log_likelihood(const ModelState& state, const CognateMatrix& matrix,
                              AscertainmentMode mode) -> double {
  auto set = compress(matrix, mode);
  auto pruner = Pruner{state, set, false};
  return combine(set.weights, set.asc_weights, pruner.run());
}

auto alignment_log_likelihood_gradient(const ModelState& state, const CognateMatrix& matrix,
                                       AscertainmentMode mode) -> LikelihoodGradient {
  auto set = compress(matrix, mode);
  auto pruner = Pruner{state, set, true};
  auto log_l = pruner.run();
  auto result = LikelihoodGradient{combine(set.weights, set.asc_weights, log_l), 0.0};
  for (auto p = 0u; p < set.patterns.size(); ++p) {
    auto g = pruner.gradient_terms[p];
    result.d_clock_rate += set.weights[p] * g;
    if (set.asc_weights[p] > 0.0) {
      // d/dc [-log(1 - L0)] = L0' / (1 - L0) = L0 * (dlog L0) / (1 - L0)
      auto l0 = std::exp(log_l[p]);
      result.d_clock_rate += set.asc_weights[p] * l0 * g / (1.0 - l0);
    }
  }
  return result;
}

// ---- caching engine ----

LikelihoodEngine::LikelihoodEngine(const CognateMatrix& matrix, AscertainmentMode mode)
    : num_taxa_{matrix.num_taxa()} {
  auto set = compress(matrix, mode);
  patterns_ = std::move(set.patterns);
  weights_ = std::move(set.weights);
  asc_weights_ = std::move(set.asc_weights);
}

auto LikelihoodEngine::buffer(int v, bool pending) -> Buffers& {
  auto idx = current_[v];
  if (pending && flipped_[v]) idx = 1 - idx;
  return buffers_[v][idx];
}

void LikelihoodEngine::compute_node(const ModelState& state, int v, std::span<const double> nu) {
  const auto& tree = state.tree;
  const auto& node = tree.at(v);
  auto np = static_cast<int>(patterns_.size());
  auto nk = categories_.size();
  auto& out = buffers_[v][1 - current_[v]];
  flipped_[v] = true;
  out.partials.assign(static_cast<std::size_t>(np) * nk * 2, 1.0);
  out.log_scale.assign(np, 0.0);
  for (auto c : node.children) {
    const auto& cn = tree.at(c);
    for (auto k = 0; k < nk; ++k) {
      auto m = transition_matrix(state.pi, nu[c] * categories_.rates[k]);
      if (cn.is_tip()) {
        for (auto p = 0; p < np; ++p) {
          auto cell = patterns_[p][cn.taxon];
          auto* o = &out.partials[(p * nk + k) * 2];
          if (cell == Cell::missing) continue;
          auto s = static_cast<int>(cell);
          o[0] *= m.p[0][s];
          o[1] *= m.p[1][s];
        }
      } else {
        const auto& in = buffer(c, true).partials;
        for (auto p = 0; p < np; ++p) {
          auto base = (p * nk + k) * 2;
          auto* o = &out.partials[base];
          const auto* x = &in[base];
          o[0] *= m.p[0][0] * x[0] + m.p[0][1] * x[1];
          o[1] *= m.p[1][0] * x[0] + m.p[1][1] * x[1];
        }
      }
    }
    if (!cn.is_tip()) {
      const auto& cs = buffer(c, true).log_scale;
      for (auto p = 0; p < np; ++p) out.log_scale[p] += cs[p];
    }
  }
  for (auto p = 0; p < np; ++p) {
    auto base = p * nk * 2;
    auto first = out.partials.begin() + base;
    auto mx = *std::max_element(first, first + nk * 2);
    if (!std::isfinite(mx)) throw NumericError{"non-finite partial likelihood at node " + std::to_string(v)};
    if (mx > 0.0 && mx < k_scale_threshold) {
      for (auto i = 0; i < nk * 2; ++i) out.partials[base + i] /= mx;
      out.log_scale[p] += std::log(mx);
    }
  }
}

auto LikelihoodEngine::evaluate(const ModelState& state) -> double {
  if (pending_) reject();
  const auto& tree = state.tree;
  auto n = tree.size();
  if (static_cast<int>(buffers_.size()) != n) {
    buffers_.assign(n, {});
    current_.assign(n, 0);
    flipped_.assign(n, false);
    have_committed_ = false;
  }
  pending_nu_.assign(n, 0.0);
  pending_children_.resize(n);
  for (auto v = 0; v < n; ++v) {
    pending_children_[v] = tree.at(v).children;
    if (v != tree.root) pending_nu_[v] = node_nu(state, v);
  }
  pending_pi_ = state.pi;
  pending_alpha_ = state.alpha;
  auto all_dirty = !have_committed_ || pending_pi_ != committed_pi_ || pending_alpha_ != committed_alpha_;
  if (all_dirty) categories_ = discretize_gamma(state.alpha, k_rate_categories);
  std::fill(flipped_.begin(), flipped_.end(), false);
  pending_ = true;

  auto dirty = std::vector<bool>(n, false);
  for (auto v : tree.postorder()) {
    const auto& node = tree.at(v);
    if (node.is_tip()) continue;
    auto d = all_dirty || pending_children_[v] != committed_children_[v];
    for (auto c : node.children) {
      d = d || dirty[c] || pending_nu_[c] != committed_nu_[c];
    }
    if (d) {
      dirty[v] = true;
      compute_node(state, v, pending_nu_);
    }
  }

  auto np = static_cast<int>(patterns_.size());
  auto nk = categories_.size();
  auto log_l = std::vector<double>(np);
  auto r = tree.root;
  const auto& root = tree.at(r);
  for (auto p = 0; p < np; ++p) {
    auto l = 0.0;
    if (root.is_tip()) {
      auto cell = patterns_[p][root.taxon];
      for (auto s = 0; s < 2; ++s) l += state.pi[s] * tip_partial(cell, s);
      log_l[p] = std::log(l);
      continue;
    }
    const auto& buf = buffer(r, true);
    for (auto k = 0; k < nk; ++k) {
      l += state.pi[0] * buf.partials[(p * nk + k) * 2] + state.pi[1] * buf.partials[(p * nk + k) * 2 + 1];
    }
    log_l[p] = std::log(l * categories_.weight()) + buf.log_scale[p];
  }
  return combine(weights_, asc_weights_, log_l);
}

void LikelihoodEngine::accept() {
  if (!pending_) return;
  for (auto v = 0; v < static_cast<int>(current_.size()); ++v) {
    if (flipped_[v]) current_[v] = 1 - current_[v];
  }
  std::fill(flipped_.begin(), flipped_.end(), false);
  committed_nu_ = pending_nu_;
  committed_children_ = pending_children_;
  committed_pi_ = pending_pi_;
  committed_alpha_ = pending_alpha_;
  have_committed_ = true;
  pending_ = false;
}

void LikelihoodEngine::reject() {
  if (!pending_) return;
  std::fill(flipped_.begin(), flipped_.end(), false);
  if (have_committed_ && (pending_pi_ != committed_pi_ || pending_alpha_ != committed_alpha_)) {
    categories_ = discretize_gamma(committed_alpha_, k_rate_categories);
  }
  pending_ = false;
}

}  // namespace glottochron
