#include <gtest/gtest.h>

#include <cmath>

#include "rapnet/exact_oracle.hpp"

namespace rapnet {
namespace {

constexpr double kTanh1 = 0.76159415595576488812;
constexpr double kLn2 = 0.69314718055994530942;

// Straightforward 2^n loop over hamiltonian(); independent of the Gray-code
// walk and energy-level bookkeeping in enumerate().
ExactResult naive_enumerate(const FactorGraph& g, double beta) {
  const std::size_t n = g.num_variables();
  std::vector<double> weights;
  std::vector<double> energies;
  std::vector<SpinConfig> configs;
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
    SpinConfig w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = (bits >> i & 1) ? -1 : 1;
    energies.push_back(hamiltonian(g, w));
    configs.push_back(std::move(w));
  }
  double hmin = *std::min_element(energies.begin(), energies.end());
  double z = 0.0;
  for (double h : energies) z += std::exp(-beta * (h - hmin));
  ExactResult r;
  r.log_z = std::log(z) - beta * hmin;
  r.marginals.assign(n, 0.0);
  for (std::size_t c = 0; c < energies.size(); ++c) {
    const double p = std::exp(-beta * (energies[c] - hmin)) / z;
    r.energy += p * energies[c];
    for (std::size_t i = 0; i < n; ++i) r.marginals[i] += p * configs[c][i];
  }
  r.entropy = beta * r.energy + r.log_z;
  r.ground_energy = hmin;
  return r;
}

/// Rejection-samples acyclic instances with at most `max_vars` variables.
RapInstance random_tree(Rng& rng, std::uint64_t depth, std::size_t max_vars) {
  const std::uint64_t n = max_vars / depth;
  for (;;) {
    const std::uint64_t m = 1 + uniform_index(rng, n + 1);
    auto inst = build_rap({n, depth, m, rng()});
    if (is_acyclic(inst.graph)) return inst;
  }
}

RapInstance random_loopy(Rng& rng, std::uint64_t depth, std::uint64_t n, std::uint64_t m) {
  for (;;) {
    auto inst = build_rap({n, depth, m, rng()});
    if (!is_acyclic(inst.graph)) return inst;
  }
}

TEST(Enumerate, EmptyGraph) {
  const auto g = build_rap({1, 3, 0, 0}).graph;
  const auto r = enumerate(g, 1.0);
  EXPECT_NEAR(r.log_z, 3 * kLn2, 1e-15);
  EXPECT_EQ(r.energy, 0.0);
  EXPECT_NEAR(r.entropy, 3 * kLn2, 1e-15);
  for (double m : r.marginals) EXPECT_EQ(m, 0.0);
}

TEST(Enumerate, UniformEntropyIsNLn2) {
  const auto g = build_rap({6, 3, 0, 0}).graph;
  EXPECT_NEAR(enumerate(g, 1.0).entropy, 18 * kLn2, 1e-12);
}

TEST(Enumerate, SingleInteraction) {
  const auto g = build_rap({1, 3, 1, 4}).graph;
  const auto r = enumerate(g, 1.0);
  EXPECT_NEAR(r.log_z, 2.5132223721628631, 1e-14);
  EXPECT_NEAR(r.energy, -kTanh1, 1e-14);
  EXPECT_EQ(r.ground_energy, -1.0);
}

TEST(Enumerate, TwoDisjointInteractions) {
  const FactorGraph g(2, 3, {0, 2, 4, 1, 3, 5}, {1, -1});
  const auto r = enumerate(g, 1.0);
  EXPECT_NEAR(r.energy, -2 * kTanh1, 1e-14);
  for (double m : r.marginals) EXPECT_NEAR(m, 0.0, 1e-15);
}

TEST(Enumerate, MatchesNaiveLoop) {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    const std::uint64_t depth = 2 + t % 3;
    const std::uint64_t n = 12 / depth;
    const auto g = build_rap({n, depth, uniform_index(rng, 12), rng()}).graph;
    const double beta = 0.3 + 2.0 * uniform01(rng);
    const auto fast = enumerate(g, beta);
    const auto ref = naive_enumerate(g, beta);
    EXPECT_NEAR(fast.log_z, ref.log_z, 1e-11);
    EXPECT_NEAR(fast.energy, ref.energy, 1e-11);
    EXPECT_NEAR(fast.entropy, ref.entropy, 1e-11);
    EXPECT_EQ(fast.ground_energy, ref.ground_energy);
    for (std::size_t i = 0; i < ref.marginals.size(); ++i)
      EXPECT_NEAR(fast.marginals[i], ref.marginals[i], 1e-12);
  }
}

TEST(Enumerate, ResultInvariants) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto g = build_rap({5, 3, 2 + uniform_index(rng, 10), rng()}).graph;
    const auto r = enumerate(g, 1.0);
    EXPECT_LE(r.ground_energy, r.energy);
    EXPECT_GE(r.entropy, 0.0);
    for (double m : r.marginals) EXPECT_LE(std::abs(m), 1.0);
  }
}

TEST(Enumerate, LowTemperatureApproachesGroundState) {
  Rng rng(8);
  for (int t = 0; t < 5; ++t) {
    const auto g = build_rap({4, 3, 6, rng()}).graph;
    const auto r = enumerate(g, 20.0);
    // Excited states sit at least 2 above the ground state; their total weight
    // is bounded by 2^n e^{-2 beta}.
    EXPECT_NEAR(r.energy, r.ground_energy, std::ldexp(1.0, 12) * std::exp(-20.0));
  }
}

TEST(Enumerate, RefusesLargeInstances) {
  const auto g = build_rap({10, 3, 5, 0}).graph;  // 30 variables
  EXPECT_THROW(enumerate(g, 1.0), ParameterError);
  EXPECT_THROW(enumerate(build_rap({4, 3, 5, 0}).graph, 1.0, 10), ParameterError);
}

TEST(CompareBpExact, SingleInteraction) {
  SolverConfig c;
  c.init_mode = InitMode::kRandom;
  const auto r = compare_bp_exact(build_rap({1, 3, 1, 0}).graph, c);
  EXPECT_TRUE(r.acyclic);
  EXPECT_LT(r.free_energy_diff(), 1e-10);
  EXPECT_LT(r.energy_diff(), 1e-10);
  EXPECT_LT(r.max_marginal_diff(), 1e-10);
}

TEST(CompareBpExact, TreesAreExact) {
  Rng rng(31);
  for (int t = 0; t < 40; ++t) {
    const std::uint64_t depth = 2 + t % 2;
    const auto inst = random_tree(rng, depth, 20);
    SolverConfig c;
    c.init_mode = InitMode::kRandom;
    c.amplitude = 0.5;
    c.seed = rng();
    c.beta = 0.5 + uniform01(rng);
    const auto r = compare_bp_exact(inst.graph, c);
    ASSERT_TRUE(r.acyclic);
    EXPECT_TRUE(r.bp_converged);
    EXPECT_LT(r.free_energy_diff(), 1e-10);
    EXPECT_LT(r.energy_diff(), 1e-10);
    EXPECT_LT(r.entropy_diff(), 1e-10);
    EXPECT_LT(r.max_marginal_diff(), 1e-10);
  }
}

TEST(CompareBpExact, LoopyInstancesReportFiniteDiscrepancies) {
  Rng rng(2);
  SolverConfig c;
  c.init_mode = InitMode::kRandom;
  c.max_iters = 2000;
  const auto inst = random_loopy(rng, 3, 4, 8);  // 12 variables, lambda = 2
  const auto r = compare_bp_exact(inst.graph, c);
  EXPECT_FALSE(r.acyclic);
  EXPECT_TRUE(std::isfinite(r.free_energy_diff()));
  EXPECT_TRUE(std::isfinite(r.energy_diff()));
  EXPECT_TRUE(std::isfinite(r.max_marginal_diff()));
  const auto t = discrepancy_table(r);
  EXPECT_EQ(t.header, (std::vector<std::string>{"quantity", "bp", "exact", "abs_diff"}));
  EXPECT_EQ(t.rows.size(), 3u + 12u);
}

TEST(OracleSuite, ShapesAndReproducibility) {
  const auto suite = oracle_suite(7, 10, 4, 20);
  ASSERT_EQ(suite.size(), 14u);
  for (std::size_t k = 0; k < suite.size(); ++k) {
    const auto& c = suite[k];
    EXPECT_LE(c.instance.graph.num_variables(), 20u);
    EXPECT_EQ(is_acyclic(c.instance.graph), c.acyclic);
    EXPECT_EQ(c.acyclic, k < 10);
  }
  EXPECT_EQ(suite[0].depth, 2u);
  EXPECT_EQ(suite[1].depth, 3u);
  const auto again = oracle_suite(7, 10, 4, 20);
  for (std::size_t k = 0; k < suite.size(); ++k) EXPECT_EQ(again[k].instance.graph, suite[k].instance.graph);
  EXPECT_THROW(oracle_suite(7, 1, 0, 30), ParameterError);
}

TEST(OracleSuite, TreeCasesAreExact) {
  for (const auto& c : oracle_suite(3, 20, 0, 20)) {
    const auto r = compare_bp_exact(c.instance.graph, oracle_solver(c));
    EXPECT_LT(r.free_energy_diff(), 1e-10);
    EXPECT_LT(r.energy_diff(), 1e-10);
    EXPECT_LT(r.max_marginal_diff(), 1e-10);
  }
}

}  // namespace
}  // namespace rapnet
