#pragma once

// Independent reference computations. None of these call into the library's
// numerical code; they work from the model definitions directly, favouring
// clarity over speed.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "glottochron/data_io.h"
#include "glottochron/time_tree.h"

namespace oracle {

using Mat2 = std::array<std::array<double, 2>, 2>;

inline auto mat_mul(const Mat2& a, const Mat2& b) -> Mat2 {
  auto c = Mat2{};
  for (auto i = 0; i < 2; ++i)
    for (auto j = 0; j < 2; ++j) c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
  return c;
}

// exp(Q t) by scaling and squaring of a Taylor series.
inline auto expm(const Mat2& q, double t) -> Mat2 {
  auto norm = std::max(std::abs(q[0][0]) + std::abs(q[0][1]), std::abs(q[1][0]) + std::abs(q[1][1])) * t;
  auto squarings = 0;
  while (norm > 0.5) {
    norm /= 2.0;
    ++squarings;
  }
  auto scale = t / std::pow(2.0, squarings);
  auto a = Mat2{{{q[0][0] * scale, q[0][1] * scale}, {q[1][0] * scale, q[1][1] * scale}}};
  auto result = Mat2{{{1.0, 0.0}, {0.0, 1.0}}};
  auto term = result;
  for (auto k = 1; k < 30; ++k) {
    term = mat_mul(term, a);
    for (auto& row : term)
      for (auto& x : row) x /= k;
    for (auto i = 0; i < 2; ++i)
      for (auto j = 0; j < 2; ++j) result[i][j] += term[i][j];
  }
  for (auto s = 0; s < squarings; ++s) result = mat_mul(result, result);
  return result;
}

// Binary rate matrix scaled to one expected substitution per unit time.
inline auto rate_matrix(std::array<double, 2> pi) -> Mat2 {
  auto mu = 1.0 / (2.0 * pi[0] * pi[1]);
  return Mat2{{{-mu * pi[1], mu * pi[1]}, {mu * pi[0], -mu * pi[0]}}};
}

inline auto transition(std::array<double, 2> pi, double nu) -> Mat2 { return expm(rate_matrix(pi), nu); }

// Mean-of-quartile gamma rates by quadrature of x f(x) between quantiles.
inline auto gamma_category_rates(double alpha, int k) -> std::vector<double> {
  auto dist = boost::math::gamma_distribution<double>{alpha, 1.0 / alpha};
  auto rates = std::vector<double>{};
  for (auto i = 0; i < k; ++i) {
    auto lo = i == 0 ? 0.0 : boost::math::quantile(dist, static_cast<double>(i) / k);
    auto hi = i == k - 1 ? std::numeric_limits<double>::infinity()
                         : boost::math::quantile(dist, static_cast<double>(i + 1) / k);
    auto integrand = [&](double x) { return x * boost::math::pdf(dist, x); };
    // double-exponential rules cope with the x^(alpha-1) endpoint and the open tail
    auto mass = i == k - 1 ? boost::math::quadrature::exp_sinh<double>{}.integrate(
                                 [&](double t) { return integrand(lo + t); }, 0.0, hi, 1e-14)
                           : boost::math::quadrature::tanh_sinh<double>{}.integrate(integrand, lo, hi, 1e-14);
    rates.push_back(mass * k);
  }
  return rates;
}

// Per-site likelihood by summing over every assignment of states to the
// internal nodes. Missing tips sum over both states. Branch lengths are in
// substitutions (nu per node, root entry ignored).
inline auto enumerate_site_likelihood(const glottochron::TimeTree& tree, std::span<const double> nu,
                                      std::array<double, 2> pi, std::span<const double> category_rates,
                                      std::span<const glottochron::Cell> column) -> double {
  using glottochron::Cell;
  auto internal = std::vector<int>{};
  auto tips = std::vector<int>{};
  for (auto v = 0; v < tree.size(); ++v) (tree.at(v).is_tip() ? tips : internal).push_back(v);
  auto missing_tips = std::vector<int>{};
  for (auto v : tips)
    if (column[tree.at(v).taxon] == Cell::missing) missing_tips.push_back(v);

  auto total = 0.0;
  for (auto rate : category_rates) {
    auto p = std::vector<Mat2>(tree.size());
    for (auto v = 0; v < tree.size(); ++v)
      if (v != tree.root) p[v] = transition(pi, nu[v] * rate);
    auto states = std::vector<int>(tree.size(), 0);
    auto sum = 0.0;
    auto free_nodes = internal;
    free_nodes.insert(free_nodes.end(), missing_tips.begin(), missing_tips.end());
    for (auto mask = 0L; mask < (1L << free_nodes.size()); ++mask) {
      for (auto i = 0u; i < free_nodes.size(); ++i) states[free_nodes[i]] = (mask >> i) & 1;
      for (auto v : tips) {
        auto c = column[tree.at(v).taxon];
        if (c != Cell::missing) states[v] = c == Cell::present ? 1 : 0;
      }
      auto prob = pi[states[tree.root]];
      for (auto v = 0; v < tree.size(); ++v)
        if (v != tree.root) prob *= p[v][states[tree.at(v).parent]][states[v]];
      sum += prob;
    }
    total += sum / static_cast<double>(category_rates.size());
  }
  return total;
}

// --- fossilized birth-death, transcribed from the printed formulas ---------

struct FbdTerms {
  long double c1, c2, p0, p1, p0_hat;
};

inline auto fbd_terms(long double lambda, long double mu, long double psi, long double rho, long double t)
    -> FbdTerms {
  auto c1 = std::sqrt((lambda - mu - psi) * (lambda - mu - psi) + 4 * lambda * psi);
  auto c2 = -(lambda - mu - 2 * lambda * rho - psi) / c1;
  auto e = std::exp(-c1 * t);
  auto p0 = (lambda + mu + psi + c1 * (e * (1 - c2) - (1 + c2)) / (e * (1 - c2) + (1 + c2))) / (2 * lambda);
  auto p1 = 4 * rho / (2 * (1 - c2 * c2) + e * (1 - c2) * (1 - c2) + (1 + c2) * (1 + c2) / e);
  // psi = 0 version of p0
  auto h1 = std::abs(lambda - mu);
  auto h2 = -(lambda - mu - 2 * lambda * rho) / h1;
  auto he = std::exp(-h1 * t);
  auto p0_hat = (lambda + mu + h1 * (he * (1 - h2) - (1 + h2)) / (he * (1 - h2) + (1 + h2))) / (2 * lambda);
  return {c1, c2, p0, p1, p0_hat};
}

// Tree density conditioned on the root age. Walks the tree by recursion from
// the root and collects the factor lists independently of the library.
inline auto fbd_log_density(const glottochron::TimeTree& tree, double lambda, double mu, double psi, double rho)
    -> double {
  auto bifurcations = std::vector<double>{};
  auto extinct = std::vector<double>{};
  auto n = 0, m = 0, k = 0;
  for (auto v = 0; v < tree.size(); ++v) {
    const auto& node = tree.at(v);
    if (node.is_tip()) {
      if (node.is_sampled_ancestor) {
        ++k;
      } else if (node.age == 0.0) {
        ++n;
      } else {
        ++m;
        extinct.push_back(node.age);
      }
    } else {
      auto sa = tree.at(node.children[0]).is_sampled_ancestor || tree.at(node.children[1]).is_sampled_ancestor;
      if (!sa) bifurcations.push_back(node.age);
    }
  }
  auto x1 = tree.height();
  auto root = fbd_terms(lambda, mu, psi, rho, x1);
  long double density = std::pow((long double)lambda, n + m - 2) * std::pow((long double)psi, k + m) /
                        ((1 - root.p0_hat) * (1 - root.p0_hat)) * root.p1;
  for (auto x : bifurcations) density *= fbd_terms(lambda, mu, psi, rho, x).p1;
  for (auto y : extinct) {
    auto f = fbd_terms(lambda, mu, psi, rho, y);
    density *= f.p0 / f.p1;
  }
  return static_cast<double>(std::log(density));
}

// Reconstructed birth-death tree with extant sampling rho, conditioned on the
// root age: lambda^(n-2) prod_i p1(x_i) * p1(x1) / (1 - p0(x1))^2 with the
// classic closed forms in terms of r = lambda - mu.
inline auto birth_death_log_density(const glottochron::TimeTree& tree, double lambda, double mu, double rho)
    -> double {
  auto r = lambda - mu;
  auto denom = [&](double t) { return rho * lambda + (lambda * (1 - rho) - mu) * std::exp(-r * t); };
  auto p1 = [&](double t) { return rho * r * r * std::exp(-r * t) / (denom(t) * denom(t)); };
  auto survival = [&](double t) { return rho * r / denom(t); };
  auto n = 0;
  auto log_d = 0.0;
  for (auto v = 0; v < tree.size(); ++v) {
    if (tree.at(v).is_tip()) {
      ++n;
    } else {
      log_d += std::log(p1(tree.at(v).age));
    }
  }
  auto x1 = tree.height();
  return log_d + (n - 2) * std::log(lambda) + std::log(p1(x1)) - 2.0 * std::log(survival(x1));
}

// --- coalescent -------------------------------------------------------------

// Walks events from the present backwards and accumulates the interval terms.
inline auto coalescent_log_density(const glottochron::TimeTree& tree, double theta) -> double {
  struct Event {
    double age;
    int delta;  // +1 sample, -1 coalescence
  };
  auto events = std::vector<Event>{};
  for (const auto& node : tree.nodes) events.push_back({node.age, node.is_tip() ? +1 : -1});
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.age != b.age) return a.age < b.age;
    return a.delta > b.delta;  // samples enter before a coalescence at the same age
  });
  auto lineages = 0;
  auto last = 0.0;
  auto log_d = 0.0;
  for (const auto& e : events) {
    auto dt = e.age - last;
    log_d -= lineages * (lineages - 1) / theta * dt;
    if (e.delta < 0) log_d += std::log(2.0 / theta);
    lineages += e.delta;
    last = e.age;
  }
  return log_d;
}

// --- statistics -------------------------------------------------------------

// Asymptotic Kolmogorov-Smirnov p-value with the Stephens small-sample
// adjustment.
inline auto ks_uniform_p_value(std::vector<double> samples) -> double {
  std::sort(samples.begin(), samples.end());
  auto n = static_cast<double>(samples.size());
  auto d = 0.0;
  for (auto i = 0u; i < samples.size(); ++i) {
    auto x = samples[i];
    d = std::max({d, (i + 1) / n - x, x - i / n});
  }
  auto sqn = std::sqrt(n);
  auto lambda = (sqn + 0.12 + 0.11 / sqn) * d;
  auto p = 0.0;
  for (auto j = 1; j <= 100; ++j) {
    auto term = 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

inline auto mean(std::span<const double> x) -> double {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Standard error of the mean of an autocorrelated series by non-overlapping
// batch means.
inline auto batch_means_se(std::span<const double> x, int batches = 50) -> double {
  auto size = x.size() / batches;
  auto means = std::vector<double>{};
  for (auto b = 0; b < batches; ++b) means.push_back(mean(x.subspan(b * size, size)));
  auto m = mean(means);
  auto ss = 0.0;
  for (auto v : means) ss += (v - m) * (v - m);
  return std::sqrt(ss / (batches - 1) / batches);
}

// --- clades -----------------------------------------------------------------

// Taxon-name sets below every internal node, counted across trees.
inline auto count_clades(std::span<const glottochron::TimeTree> trees, std::span<const glottochron::Taxon> taxa)
    -> std::map<std::set<std::string>, int> {
  auto counts = std::map<std::set<std::string>, int>{};
  for (const auto& tree : trees) {
    auto below = std::vector<std::set<std::string>>(tree.size());
    auto seen = std::set<std::set<std::string>>{};
    // Repeated relaxation avoids relying on any traversal helper.
    for (auto v = 0; v < tree.size(); ++v) {
      if (!tree.at(v).is_tip()) continue;
      for (auto u = v; u != glottochron::k_no_node; u = tree.at(u).parent) below[u].insert(taxa[tree.at(v).taxon].name);
    }
    for (auto v = 0; v < tree.size(); ++v) {
      if (tree.at(v).is_tip()) continue;
      seen.insert(below[v]);
    }
    for (const auto& clade : seen) ++counts[clade];
  }
  return counts;
}

}  // namespace oracle
