#pragma once

#include <array>
#include <span>
#include <vector>

#include "glottochron/clock.h"
#include "glottochron/data_io.h"
#include "glottochron/model_state.h"
#include "glottochron/settings.h"

namespace glottochron {

// 2x2 transition probabilities of the binary F81 process.
struct TransitionMatrix {
  std::array<std::array<double, 2>, 2> p{};

  auto operator()(int from, int to) const -> double { return p[from][to]; }
};

// P_ij(nu) = pi_j + (delta_ij - pi_j) exp(-beta nu), beta = 1 / (2 pi0 pi1), so
// nu counts expected substitutions per site.
auto transition_matrix(std::array<double, 2> pi, double nu) -> TransitionMatrix;

// Equal-weight rate categories; rates are nondecreasing with mean 1.
struct GammaCategories {
  std::vector<double> rates;

  auto size() const -> int { return static_cast<int>(rates.size()); }
  auto weight() const -> double { return 1.0 / static_cast<double>(rates.size()); }
};

// Mean-of-category discretization of Gamma(shape alpha, mean 1).
auto discretize_gamma(double alpha, int k = 4) -> GammaCategories;

inline constexpr int k_rate_categories = 4;

// Uncorrected log-likelihood of one column; `column` is indexed by taxon id.
auto site_log_likelihood(const ModelState& state, std::span<const Cell> column) -> double;

// Sum over sites of log L_i - log(1 - L_0), where L_0 is the likelihood of the
// unobservable all-absent column (per site's missing mask under per_block).
auto alignment_log_likelihood(const ModelState& state, const CognateMatrix& matrix,
                              AscertainmentMode mode = AscertainmentMode::global) -> double;

// Log-likelihood together with its derivative with respect to clock_rate.
struct LikelihoodGradient {
  double log_likelihood = 0.0;
  double d_clock_rate = 0.0;
};
auto alignment_log_likelihood_gradient(const ModelState& state, const CognateMatrix& matrix,
                                       AscertainmentMode mode = AscertainmentMode::global)
    -> LikelihoodGradient;

// Caching pruning engine. Identical site columns are merged; partial
// likelihoods are double-buffered per node so that evaluate() only recomputes
// nodes whose subtree changed since the last accept(). The caller must follow
// every evaluate() with accept() or reject().
class LikelihoodEngine {
 public:
  LikelihoodEngine(const CognateMatrix& matrix, AscertainmentMode mode);

  auto evaluate(const ModelState& state) -> double;
  void accept();
  void reject();

  auto num_patterns() const -> int { return static_cast<int>(weights_.size()); }
  auto num_taxa() const -> int { return num_taxa_; }

 private:
  struct Buffers {
    std::vector<double> partials;  // [(pattern * K + category) * 2 + state]
    std::vector<double> log_scale;  // cumulative per pattern
  };

  void compute_node(const ModelState& state, int v, std::span<const double> nu);
  auto buffer(int v, bool pending) -> Buffers&;

  int num_taxa_ = 0;
  // patterns_[p][taxon]; data patterns first, then ascertainment patterns.
  std::vector<std::vector<Cell>> patterns_;
  std::vector<double> weights_;      // data multiplicity
  std::vector<double> asc_weights_;  // number of sites corrected by this pattern

  GammaCategories categories_;

  std::vector<std::array<Buffers, 2>> buffers_;
  std::vector<int> current_;
  std::vector<bool> flipped_;

  bool have_committed_ = false;
  std::vector<double> committed_nu_;
  std::vector<std::array<int, 2>> committed_children_;
  std::array<double, 2> committed_pi_{};
  double committed_alpha_ = 0.0;
  std::vector<double> pending_nu_;
  std::vector<std::array<int, 2>> pending_children_;
  std::array<double, 2> pending_pi_{};
  double pending_alpha_ = 0.0;
  bool pending_ = false;
};

}  // namespace glottochron
