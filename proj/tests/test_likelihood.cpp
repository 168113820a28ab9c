#include <doctest.h>

#include <cmath>

#include "glottochron/errors.h"
#include "glottochron/likelihood.h"
#include "oracles.h"
#include "support.h"

using namespace glottochron;

namespace {

auto nus(const ModelState& s) -> std::vector<double> {
  auto nu = std::vector<double>(s.tree.size(), 0.0);
  for (auto v = 0; v < s.tree.size(); ++v) {
    if (v == s.tree.root) continue;
    nu[v] = (s.tree.at(s.tree.at(v).parent).age - s.tree.at(v).age) * s.clock_rate * s.branch_rates[v];
  }
  return nu;
}

auto oracle_site(const ModelState& s, std::span<const Cell> column) -> double {
  auto rates = oracle::gamma_category_rates(s.alpha, 4);
  return oracle::enumerate_site_likelihood(s.tree, nus(s), s.pi, rates, column);
}

auto oracle_alignment(const ModelState& s, const CognateMatrix& m, AscertainmentMode mode) -> double {
  auto total = 0.0;
  auto all_absent = std::vector<Cell>(m.num_taxa(), Cell::absent);
  auto l0_global = oracle_site(s, all_absent);
  for (auto site = 0; site < m.num_sites(); ++site) {
    auto col = m.column(site);
    auto l0 = l0_global;
    if (mode == AscertainmentMode::per_block) {
      auto masked = col;
      for (auto& c : masked)
        if (c != Cell::missing) c = Cell::absent;
      l0 = oracle_site(s, masked);
    }
    total += std::log(oracle_site(s, col)) - std::log1p(-l0);
  }
  return total;
}

}  // namespace

TEST_CASE("transition matrix") {
  SUBCASE("identity at zero length") {
    auto p = transition_matrix({0.3, 0.7}, 0.0);
    CHECK(p(0, 0) == 1.0);
    CHECK(p(1, 1) == 1.0);
    CHECK(p(0, 1) == 0.0);
  }
  SUBCASE("stationary rows at long length") {
    auto p = transition_matrix({0.3, 0.7}, 1e6);
    for (auto i = 0; i < 2; ++i) {
      CHECK(std::abs(p(i, 0) - 0.3) < 1e-12);
      CHECK(std::abs(p(i, 1) - 0.7) < 1e-12);
    }
  }
  SUBCASE("matches the matrix exponential") {
    auto p = transition_matrix({0.5, 0.5}, 0.1);
    auto q = oracle::transition({0.5, 0.5}, 0.1);
    CHECK(std::abs(p(0, 1) - q[0][1]) < 1e-12);
    CHECK(std::abs(p(0, 1) - 0.0906346) < 1e-6);
    auto rng = Rng{4};
    auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
    for (auto i = 0; i < 200; ++i) {
      auto pi0 = 0.01 + 0.98 * unit(rng);
      auto nu = 5.0 * unit(rng);
      auto a = transition_matrix({pi0, 1 - pi0}, nu);
      auto b = oracle::transition({pi0, 1 - pi0}, nu);
      for (auto r = 0; r < 2; ++r)
        for (auto c = 0; c < 2; ++c) CHECK(std::abs(a(r, c) - b[r][c]) < 1e-12);
      CHECK(std::abs(a(0, 0) + a(0, 1) - 1.0) < 1e-12);
      CHECK(std::abs(pi0 * a(0, 1) - (1 - pi0) * a(1, 0)) < 1e-12);
    }
  }
  SUBCASE("negative length is a usage error") {
    CHECK_THROWS_AS(transition_matrix({0.5, 0.5}, -1.0), UsageError);
  }
}

TEST_CASE("discrete gamma categories") {
  for (auto alpha : {0.1, 0.5, 1.0, 2.0, 10.0}) {
    auto c = discretize_gamma(alpha, 4);
    auto mean = (c.rates[0] + c.rates[1] + c.rates[2] + c.rates[3]) / 4.0;
    CHECK(std::abs(mean - 1.0) < 1e-9);
    for (auto k = 1; k < 4; ++k) CHECK(c.rates[k] > c.rates[k - 1]);
    auto q = oracle::gamma_category_rates(alpha, 4);
    for (auto k = 0; k < 4; ++k) CHECK(c.rates[k] == doctest::Approx(q[k]).epsilon(1e-8));
  }
  auto big = discretize_gamma(1e6, 4);
  // near-normal limit: the outer quartile means sit 1.271 sd from the centre
  auto sd = 1.0 / std::sqrt(1e6);
  for (auto r : big.rates) CHECK(std::abs(r - 1.0) < 1.3 * sd);
  CHECK(big.rates[3] - 1.0 == doctest::Approx(1.2711 * sd).epsilon(1e-3));
  CHECK_THROWS_AS(discretize_gamma(0.0), UsageError);
}

TEST_CASE("site likelihood base cases") {
  SUBCASE("missing data integrates to one") {
    auto taxa = support::make_taxa({"A", "B"});
    auto s = ModelState{};
    s.tree = support::tree("(A:100,B:100);", taxa);
    s.branch_rates.assign(s.tree.size(), 1.0);
    auto col = std::vector<Cell>{Cell::missing, Cell::missing};
    CHECK(std::abs(site_log_likelihood(s, col)) < 1e-14);
  }
  SUBCASE("zero-length tree with all-present column") {
    auto taxa = support::make_taxa({"A", "B"});
    auto s = ModelState{};
    s.tree = support::tree("(A:100,B:100);", taxa);
    s.branch_rates.assign(s.tree.size(), 1.0);
    s.clock_rate = 1e-300;
    auto m = CognateMatrix{};
    m.taxa = taxa;
    m.rows = {{Cell::present}, {Cell::present}};
    m.site_meaning = {0};
    m.meanings = {"m"};
    // one draw: log(pi1 / (1 - pi0)) = 0
    CHECK(std::abs(alignment_log_likelihood(s, m)) < 1e-9);
    CHECK(site_log_likelihood(s, m.column(0)) == doctest::Approx(std::log(0.5)));
  }
}

TEST_CASE("pruning matches enumeration on random trees") {
  auto rng = Rng{17};
  for (auto trial = 0; trial < 60; ++trial) {
    auto g = support::random_tree({2 + trial % 5, trial % 3 ? 1 : 0, trial % 4 == 3 ? 1 : 0, 300.0}, rng);
    auto s = support::random_state(g.tree, rng);
    for (auto rep = 0; rep < 5; ++rep) {
      auto col = support::random_column(static_cast<int>(g.taxa.size()), rng, 0.2);
      auto expected = std::log(oracle_site(s, col));
      CHECK(site_log_likelihood(s, col) == doctest::Approx(expected).epsilon(1e-11));
    }
  }
}

TEST_CASE("alignment likelihood matches the slow per-site oracle") {
  auto rng = Rng{23};
  for (auto mode : {AscertainmentMode::global, AscertainmentMode::per_block}) {
    auto g = support::random_tree({5, 1, 0, 400.0}, rng);
    auto s = support::random_state(g.tree, rng);
    auto m = support::random_matrix(g.taxa, 50, rng, 0.15);
    auto expected = oracle_alignment(s, m, mode);
    CHECK(alignment_log_likelihood(s, m, mode) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("ascertainment-corrected probabilities sum to one over observable patterns") {
  auto taxa = support::make_taxa({"A", "B", "C"});
  auto rng = Rng{31};
  auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
  for (auto draw = 0; draw < 20; ++draw) {
    auto s = ModelState{};
    s.tree = support::tree("((A:300,B:300):500,C:800);", taxa);
    s.branch_rates.assign(s.tree.size(), 1.0);
    for (auto& r : s.branch_rates) r = 0.2 + 2.0 * unit(rng);
    auto pi0 = 0.05 + 0.9 * unit(rng);
    s.pi = {pi0, 1 - pi0};
    s.alpha = 0.1 + 5.0 * unit(rng);
    s.clock_rate = 1e-5 + 1e-3 * unit(rng);
    auto total = 0.0;
    for (auto pattern = 1; pattern < 8; ++pattern) {
      auto m = CognateMatrix{};
      m.taxa = taxa;
      for (auto t = 0; t < 3; ++t) m.rows.push_back({(pattern >> t) & 1 ? Cell::present : Cell::absent});
      m.site_meaning = {0};
      m.meanings = {"m"};
      total += std::exp(alignment_log_likelihood(s, m));
    }
    CHECK(std::abs(total - 1.0) < 1e-8);
  }
}

TEST_CASE("degenerate tree raises a numeric error") {
  auto taxa = support::make_taxa({"A", "B"});
  auto s = ModelState{};
  s.tree = support::tree("(A:100,B:100);", taxa);
  s.branch_rates.assign(s.tree.size(), 1.0);
  s.clock_rate = 1e-300;
  s.pi = {1.0 - 1e-17, 1e-17};
  auto m = CognateMatrix{};
  m.taxa = taxa;
  m.rows = {{Cell::present}, {Cell::absent}};
  m.site_meaning = {0};
  m.meanings = {"m"};
  CHECK_THROWS_AS(alignment_log_likelihood(s, m), NumericError);
}

TEST_CASE("rescaling clock and ages leaves the likelihood unchanged") {
  auto rng = Rng{41};
  auto g = support::random_tree({6, 0, 0, 300.0}, rng);
  auto s = support::random_state(g.tree, rng);
  auto m = support::random_matrix(g.taxa, 40, rng, 0.1);
  auto base = alignment_log_likelihood(s, m);
  auto scaled = s;
  for (auto& n : scaled.tree.nodes) n.age /= 3.0;
  scaled.clock_rate *= 3.0;
  CHECK(alignment_log_likelihood(scaled, m) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("clock-rate gradient matches central differences") {
  auto rng = Rng{43};
  for (auto mode : {AscertainmentMode::global, AscertainmentMode::per_block}) {
    auto g = support::random_tree({7, 2, 1, 300.0}, rng);
    auto s = support::random_state(g.tree, rng);
    auto m = support::random_matrix(g.taxa, 60, rng, 0.1);
    auto grad = alignment_log_likelihood_gradient(s, m, mode);
    CHECK(grad.log_likelihood == doctest::Approx(alignment_log_likelihood(s, m, mode)).epsilon(1e-12));
    auto h = s.clock_rate * 1e-5;
    auto up = s, down = s;
    up.clock_rate += h;
    down.clock_rate -= h;
    auto fd = (alignment_log_likelihood(up, m, mode) - alignment_log_likelihood(down, m, mode)) / (2 * h);
    CHECK(grad.d_clock_rate == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("caching engine agrees with a fresh evaluation under random edits (property)") {
  auto rng = Rng{47};
  for (auto mode : {AscertainmentMode::global, AscertainmentMode::per_block}) {
    auto g = support::random_tree({8, 2, 1, 300.0}, rng);
    auto s = support::random_state(g.tree, rng);
    auto m = support::random_matrix(g.taxa, 80, rng, 0.1);
    // duplicate columns so that pattern compression matters
    for (auto t = 0; t < m.num_taxa(); ++t) m.rows[t].insert(m.rows[t].end(), m.rows[t].begin(), m.rows[t].begin() + 20);
    for (auto i = 0; i < 20; ++i) {
      m.site_meaning.push_back(80 + i);
      m.meanings.push_back("dup" + std::to_string(i));
    }
    auto engine = LikelihoodEngine{m, mode};
    CHECK(engine.num_patterns() <= 100 + 100);
    auto committed = s;
    CHECK(engine.evaluate(committed) == doctest::Approx(alignment_log_likelihood(committed, m, mode)).epsilon(1e-11));
    engine.accept();
    auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
    for (auto step = 0; step < 300; ++step) {
      auto proposal = committed;
      auto what = step % 4;
      if (what == 0) {
        auto v = std::uniform_int_distribution<int>{0, proposal.tree.size() - 1}(rng);
        proposal.branch_rates[v] *= 0.5 + unit(rng);
      } else if (what == 1) {
        proposal.alpha *= 0.8 + 0.4 * unit(rng);
      } else if (what == 2) {
        auto pi0 = std::clamp(proposal.pi[0] + 0.1 * (unit(rng) - 0.5), 0.05, 0.95);
        proposal.pi = {pi0, 1 - pi0};
      } else {
        // swap the two children of a random internal node's subtrees where ages allow (narrow exchange)
        auto v = std::uniform_int_distribution<int>{0, proposal.tree.size() - 1}(rng);
        auto& t = proposal.tree;
        if (!t.at(v).is_tip() && v != t.root) {
          auto p = t.at(v).parent;
          auto uncle = t.other_child(p, v);
          auto c = t.at(v).children[0];
          if (t.at(uncle).age < t.at(v).age && !t.at(uncle).is_sampled_ancestor && !t.at(c).is_sampled_ancestor) {
            t.replace_child(p, uncle, c);
            t.replace_child(v, c, uncle);
            t.at(c).parent = p;
            t.at(uncle).parent = v;
          }
        }
      }
      auto cached = engine.evaluate(proposal);
      auto fresh = alignment_log_likelihood(proposal, m, mode);
      CHECK(cached == doctest::Approx(fresh).epsilon(1e-10));
      if (unit(rng) < 0.5) {
        engine.accept();
        committed = proposal;
      } else {
        engine.reject();
      }
    }
  }
}

TEST_CASE("deep trees stay finite through scaling") {
  auto taxa = support::numbered_taxa(60);
  auto rng = Rng{53};
  auto t = random_tree(taxa, 20000.0, rng);
  auto s = support::random_state(t, rng);
  s.clock_rate = 5e-4;
  auto m = support::random_matrix(taxa, 30, rng, 0.0);
  auto engine = LikelihoodEngine{m, AscertainmentMode::global};
  auto v = engine.evaluate(s);
  engine.accept();
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(alignment_log_likelihood(s, m)).epsilon(1e-10));
  CHECK(v < -1000.0);
}
