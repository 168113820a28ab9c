#include <doctest.h>

#include <cmath>

#include "glottochron/errors.h"
#include "glottochron/tree_priors.h"
#include "oracles.h"
#include "support.h"

using namespace glottochron;

TEST_CASE("coalescent density") {
  auto theta = 500.0;
  SUBCASE("two tips") {
    auto taxa = support::make_taxa({"A", "B"});
    auto t = support::tree("(A:120,B:120);", taxa);
    CHECK(coalescent_log_density(t, theta) == doctest::Approx(std::log(2 / theta) - 2 * 120.0 / theta));
  }
  SUBCASE("three contemporaneous tips by hand expansion") {
    auto taxa = support::make_taxa({"A", "B", "C"});
    auto ta = 100.0, tb = 250.0;
    auto t = support::tree("((A:100,B:100):150,C:250);", taxa);
    auto expected = 2 * std::log(2 / theta) - 6 * ta / theta - 2 * (tb - ta) / theta;
    CHECK(coalescent_log_density(t, theta) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("dated tips interval by interval") {
    auto taxa = support::make_taxa({"A", "B", "C"});
    taxa[2].calibration = {50.0, 150.0};
    // A, B at 0; C at 100; (A,B) at 200; root 300
    auto t = support::tree("((A:200,B:200):100,C:200);", taxa);
    // [0,100): 2 lineages; [100,200): 3 lineages; [200,300): 2 lineages
    auto expected = -2.0 * 100 / theta - 6.0 * 100 / theta + std::log(2 / theta) - 2.0 * 100 / theta + std::log(2 / theta);
    CHECK(coalescent_log_density(t, theta) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(coalescent_log_density(t, theta) == doctest::Approx(oracle::coalescent_log_density(t, theta)).epsilon(1e-14));
  }
  SUBCASE("sampled ancestors are impossible") {
    auto taxa = support::make_taxa({"A", "B", "C"});
    taxa[2].calibration = {50.0, 150.0};
    auto t = support::tree("((A:100,C:0):100,B:200);", taxa);
    CHECK(coalescent_log_density(t, theta) == -std::numeric_limits<double>::infinity());
  }
  SUBCASE("random heterochronous trees agree with the event-walk oracle") {
    auto rng = Rng{5};
    for (auto i = 0; i < 50; ++i) {
      auto g = support::random_tree({3 + i % 9, i % 4, 0, 200.0}, rng);
      CHECK(coalescent_log_density(g.tree, theta) ==
            doctest::Approx(oracle::coalescent_log_density(g.tree, theta)).epsilon(1e-12));
    }
  }
}

TEST_CASE("FBD helper functions") {
  SUBCASE("p1 at zero is rho over a parameter grid") {
    for (auto lambda : {0.5, 1.0, 2.0, 5.0})
      for (auto mu : {0.0, 0.3, 0.9, 1.5, 4.0})
        for (auto psi : {0.0, 0.1, 1.0, 3.0, 10.0})
          for (auto rho : {0.05, 0.5, 1.0}) {
            if (psi == 0.0 && lambda == mu) continue;
            auto h = fbd_helpers({lambda, mu, psi, rho}, 0.0);
            CHECK(std::abs(h.p1 - rho) < 1e-12);
            CHECK(std::abs(std::exp(fbd_log_p1({lambda, mu, psi, rho}, 0.0)) - rho) < 1e-12);
          }
  }
  SUBCASE("psi zero") {
    auto h = fbd_helpers({2.0, 1.0, 0.0, 0.5}, 1.3);
    CHECK(h.c1 == doctest::Approx(1.0));
    CHECK(h.p0 == doctest::Approx(h.p0_hat).epsilon(1e-14));
  }
  SUBCASE("values against the transcription") {
    auto h = fbd_helpers({2.0, 1.0, 0.5, 0.5}, 1.0);
    auto o = oracle::fbd_terms(2.0L, 1.0L, 0.5L, 0.5L, 1.0L);
    CHECK(h.c1 == doctest::Approx(static_cast<double>(o.c1)).epsilon(1e-14));
    CHECK(h.c2 == doctest::Approx(static_cast<double>(o.c2)).epsilon(1e-14));
    CHECK(h.p0 == doctest::Approx(static_cast<double>(o.p0)).epsilon(1e-13));
    CHECK(h.p1 == doctest::Approx(static_cast<double>(o.p1)).epsilon(1e-13));
    CHECK(h.p0_hat == doctest::Approx(static_cast<double>(o.p0_hat)).epsilon(1e-13));
  }
  SUBCASE("stable log forms match the direct ones at moderate ages") {
    auto rng = Rng{8};
    auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
    for (auto i = 0; i < 200; ++i) {
      auto rates = FbdRates{0.1 + unit(rng), 0.1 * unit(rng), unit(rng), 0.05 + 0.95 * unit(rng)};
      auto t = 5.0 * unit(rng);
      auto o = oracle::fbd_terms(rates.lambda, rates.mu, rates.psi, rates.rho, t);
      CHECK(fbd_log_p1(rates, t) == doctest::Approx(std::log(static_cast<double>(o.p1))).epsilon(1e-11));
      CHECK(fbd_log_one_minus_p0(rates, t) == doctest::Approx(std::log1p(-static_cast<double>(o.p0))).epsilon(1e-9));
    }
  }
  SUBCASE("c1 = 0 is degenerate") {
    CHECK_THROWS_AS(fbd_helpers({1.0, 1.0, 0.0, 0.5}, 1.0), NumericError);
  }
}

TEST_CASE("FBD counts and exponents") {
  auto taxa = support::make_taxa({"A", "B", "F"});
  taxa[2].calibration = {50.0, 150.0};
  auto t = support::tree("((A:300,B:300):100,F:300);", taxa);
  auto c = fbd_counts(t);
  CHECK(c.extant == 2);
  CHECK(c.extinct_tips == 1);
  CHECK(c.sampled_ancestors == 0);
  // lambda^(n+m-2) psi^(k+m) = lambda psi: doubling both shifts the density by log 4 minus the p-term changes
  auto rates = FbdRates{0.004, 0.002, 0.001, 0.5};
  auto expected = oracle::fbd_log_density(t, rates.lambda, rates.mu, rates.psi, rates.rho);
  CHECK(fbd_log_density(t, rates) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("FBD with a sampled ancestor matches the transcription") {
  auto taxa = support::make_taxa({"A", "B", "C", "F"});
  taxa[3].calibration = {400.0, 600.0};
  auto t = support::tree("(((A:200,B:200):300,F:0):500,C:1000);", taxa);
  auto c = fbd_counts(t);
  CHECK(c.sampled_ancestors == 1);
  CHECK(c.extant == 3);
  auto rates = to_rates(FbdParams{0.002, 0.4, 0.3, 0.3});
  CHECK(fbd_log_density(t, rates) ==
        doctest::Approx(oracle::fbd_log_density(t, rates.lambda, rates.mu, rates.psi, rates.rho)).epsilon(1e-10));
}

TEST_CASE("FBD with no fossils approaches the reconstructed birth-death density") {
  auto rng = Rng{13};
  for (auto i = 0; i < 20; ++i) {
    auto g = support::random_tree({3 + i % 6, 0, 0, 300.0}, rng);
    auto rates = FbdRates{0.003, 0.001, 1e-12, 0.4};
    auto fbd = fbd_log_density(g.tree, rates);
    auto bd = oracle::birth_death_log_density(g.tree, rates.lambda, rates.mu, rates.rho);
    CHECK(std::abs(fbd - bd) <= 1e-6 * std::abs(bd));
  }
}

TEST_CASE("FBD density matches the transcription on random dated trees (property)") {
  auto rng = Rng{19};
  auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
  for (auto i = 0; i < 50; ++i) {
    auto g = support::random_tree({4 + i % 6, 1 + i % 3, i % 2, 150.0}, rng);
    auto params = FbdParams{1e-3 * (0.5 + 2 * unit(rng)), 0.9 * unit(rng), 0.05 + 0.9 * unit(rng), 0.1 + 0.9 * unit(rng)};
    auto rates = to_rates(params);
    auto expected = oracle::fbd_log_density(g.tree, rates.lambda, rates.mu, rates.psi, rates.rho);
    CHECK(fbd_log_density(g.tree, params) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("FBD stays finite on very old trees") {
  auto taxa = support::numbered_taxa(20);
  auto rng = Rng{2};
  auto t = random_tree(taxa, 24000.0, rng);
  auto d = fbd_log_density(t, FbdParams{0.05, 0.5, 0.5, 0.01});
  CHECK(std::isfinite(d));
}

TEST_CASE("FBD: fossils with zero psi are impossible") {
  auto taxa = support::make_taxa({"A", "B", "F"});
  taxa[2].calibration = {50.0, 150.0};
  auto t = support::tree("((A:300,B:300):100,F:300);", taxa);
  CHECK(fbd_log_density(t, FbdRates{0.004, 0.002, 0.0, 0.5}) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("uniform tree density") {
  auto params = UniformParams{RootBounds{100.0, 1100.0}};
  SUBCASE("contemporaneous tips") {
    auto taxa = support::numbered_taxa(5);
    auto t = support::tree("(((t1:100,t2:100):200,(t3:50,t4:50):250):300,t5:600);", taxa);
    CHECK(uniform_tree_log_density(t, params) == doctest::Approx(-std::log(1000.0) - 3 * std::log(600.0)));
  }
  SUBCASE("two tips: only the root term") {
    auto taxa = support::numbered_taxa(2);
    auto t = support::tree("(t1:600,t2:600);", taxa);
    CHECK(uniform_tree_log_density(t, params) == doctest::Approx(-std::log(1000.0)));
  }
  SUBCASE("root outside its bounds") {
    auto taxa = support::numbered_taxa(2);
    auto t = support::tree("(t1:50,t2:50);", taxa);
    CHECK(uniform_tree_log_density(t, params) == -std::numeric_limits<double>::infinity());
  }
  SUBCASE("dated tips use the oldest tip below each node") {
    auto taxa = support::numbered_taxa(3);
    taxa[2].calibration = {150.0, 250.0};
    auto t = support::tree("((t1:400,t3:200):200,t2:600);", taxa);
    CHECK(uniform_tree_log_density(t, params) == doctest::Approx(-std::log(1000.0) - std::log(600.0 - 200.0)));
  }
}

TEST_CASE("hyperprior densities") {
  auto taxa = support::numbered_taxa(2);
  auto base = ModelState{};
  base.tree = support::tree("(t1:6000,t2:6000);", taxa);
  base.branch_rates.assign(base.tree.size(), 1.0);
  auto settings = HyperpriorSettings{};
  auto with = [&](auto edit) {
    auto s = base;
    edit(s);
    return hyperprior_log_density(s, taxa, settings);
  };
  SUBCASE("diversification, turnover, fossil sampling") {
    auto at = [&](double d, double r) {
      return with([&](ModelState& s) { s.prior_params = FbdParams{d, r, 0.5, 1.0}; });
    };
    CHECK(at(1.0, 0.3) - at(2.0, 0.3) == doctest::Approx(1.0));
    CHECK(at(1.0, 0.3) == doctest::Approx(at(1.0, 0.7)));
    auto d1 = at(1.0, 0.3);
    auto d2 = at(0.5, 0.3);
    CHECK(d1 - d2 == doctest::Approx(-0.5));
  }
  SUBCASE("population size gamma") {
    auto lp = [&](double p) { return with([&](ModelState& s) { s.prior_params = CoalescentParams{p}; }); };
    // Gamma(1, rate 0.01): log 0.01 - 0.01 P
    CHECK(lp(50.0) - lp(100.0) == doctest::Approx(0.5));
    auto scalar_part = lp(50.0) - (std::log(0.01) - 0.5);
    CHECK(lp(100.0) - scalar_part == doctest::Approx(std::log(0.01) - 1.0));
  }
  SUBCASE("out of domain is minus infinity, not an exception") {
    auto bad = with([](ModelState& s) { s.alpha = -1.0; });
    CHECK(bad == -std::numeric_limits<double>::infinity());
    auto bad_r = with([](ModelState& s) { s.prior_params = FbdParams{1.0, 1.2, 0.5, 1.0}; });
    CHECK(bad_r == -std::numeric_limits<double>::infinity());
  }
  SUBCASE("exponential clock and variance priors") {
    auto c = with([](ModelState& s) { s.clock_rate = 2e-4; }) - with([](ModelState& s) { s.clock_rate = 1e-4; });
    CHECK(c == doctest::Approx(-1.0));
  }
}

TEST_CASE("tip calibrations: outside is impossible, inside is flat") {
  auto taxa = support::numbered_taxa(3);
  taxa[2].calibration = {100.0, 300.0};
  auto s = ModelState{};
  s.tree = support::tree("((t1:500,t3:300):500,t2:1000);", taxa);
  s.branch_rates.assign(s.tree.size(), 1.0);
  s.prior_params = UniformParams{RootBounds{500.0, 5000.0}};
  auto settings = HyperpriorSettings{};
  settings.root_bounds = RootBounds{500.0, 5000.0};
  auto inside = hyperprior_log_density(s, taxa, settings);
  s.tree.at(s.tree.tip_nodes(3)[2]).age = 250.0;
  CHECK(hyperprior_log_density(s, taxa, settings) == doctest::Approx(inside));
  s.tree.at(s.tree.tip_nodes(3)[2]).age = 350.0;
  CHECK(hyperprior_log_density(s, taxa, settings) == -std::numeric_limits<double>::infinity());
}
