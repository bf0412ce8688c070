// Exhaustive enumeration of the RAP Boltzmann measure for small instances.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rapnet/common.hpp"
#include "rapnet/rap_graph.hpp"
#include "rapnet/rap_solver.hpp"
#include "rapnet/table.hpp"

namespace rapnet {

inline constexpr std::size_t kMaxEnumerationVariables = 24;

struct ExactResult {
  double log_z = 0.0;
  double energy = 0.0;         // <H>
  double entropy = 0.0;        // beta <H> + ln Z
  std::vector<double> marginals;
  double ground_energy = 0.0;  // min H
};

/// Sums exp(-beta H) over all 2^n configurations. The walk follows a Gray
/// code so each step flips one spin and updates H through that spin's
/// interactions only. Because H is an integer in [-M, M], counts are kept per
/// energy level and the Boltzmann weights are applied once at the end.
inline ExactResult enumerate(const FactorGraph& g, double beta,
                             std::size_t max_vars = kMaxEnumerationVariables) {
  const std::size_t n = g.num_variables();
  if (n > max_vars || n > kMaxEnumerationVariables)
    throw ParameterError("enumerate: " + std::to_string(n) + " variables exceeds the limit of " +
                         std::to_string(std::min(max_vars, kMaxEnumerationVariables)));
  const std::int64_t m = static_cast<std::int64_t>(g.num_interactions());
  const std::size_t levels = static_cast<std::size_t>(2 * m + 1);

  std::vector<int> spin(n, 1);
  std::vector<int> sign(g.num_interactions());  // J_a prod_{i in a} w_i
  std::int64_t h = 0;
  for (std::size_t a = 0; a < sign.size(); ++a) {
    sign[a] = g.coupling(a);
    h -= sign[a];
  }

  std::vector<std::uint64_t> count(levels, 0);
  std::vector<std::int64_t> spin_sum(n * levels, 0);  // [i * levels + (H + M)]
  auto record = [&] {
    const std::size_t lvl = static_cast<std::size_t>(h + m);
    ++count[lvl];
    for (std::size_t i = 0; i < n; ++i) spin_sum[i * levels + lvl] += spin[i];
  };

  record();
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t t = 1; t < total; ++t) {
    const std::size_t i = static_cast<std::size_t>(std::countr_zero(t));
    spin[i] = -spin[i];
    for (std::uint32_t e : g.edges_of(i)) {
      const std::size_t a = g.edge_interaction(e);
      h += 2 * sign[a];
      sign[a] = -sign[a];
    }
    record();
  }

  ExactResult r;
  r.log_z = -INFINITY;
  r.ground_energy = static_cast<double>(m);
  for (std::size_t lvl = 0; lvl < levels; ++lvl) {
    if (count[lvl] == 0) continue;
    const double energy = static_cast<double>(static_cast<std::int64_t>(lvl) - m);
    r.ground_energy = std::min(r.ground_energy, energy);
    r.log_z = log_add_exp(r.log_z, std::log(static_cast<double>(count[lvl])) - beta * energy);
  }
  CompensatedSum mean_h;
  r.marginals.assign(n, 0.0);
  std::vector<CompensatedSum> mag(n);
  for (std::size_t lvl = 0; lvl < levels; ++lvl) {
    if (count[lvl] == 0) continue;
    const double energy = static_cast<double>(static_cast<std::int64_t>(lvl) - m);
    const double weight = std::exp(-beta * energy - r.log_z);  // per configuration
    mean_h += static_cast<double>(count[lvl]) * weight * energy;
    for (std::size_t i = 0; i < n; ++i)
      mag[i] += static_cast<double>(spin_sum[i * levels + lvl]) * weight;
  }
  for (std::size_t i = 0; i < n; ++i) r.marginals[i] = mag[i].value();
  r.energy = mean_h.value();
  r.entropy = beta * r.energy + r.log_z;
  return r;
}

struct DiscrepancyReport {
  bool acyclic = false;
  bool bp_converged = false;
  double bp_free_energy = 0.0, exact_free_energy = 0.0;
  double bp_energy = 0.0, exact_energy = 0.0;
  double bp_entropy = 0.0, exact_entropy = 0.0;
  std::vector<double> bp_marginals, exact_marginals;

  double free_energy_diff() const { return std::abs(bp_free_energy - exact_free_energy); }
  double energy_diff() const { return std::abs(bp_energy - exact_energy); }
  double entropy_diff() const { return std::abs(bp_entropy - exact_entropy); }
  double max_marginal_diff() const {
    double d = 0.0;
    for (std::size_t i = 0; i < bp_marginals.size(); ++i)
      d = std::max(d, std::abs(bp_marginals[i] - exact_marginals[i]));
    return d;
  }
};

/// Runs BP and enumeration on the same instance. BP is exact on forests;
/// on loopy graphs the differences are only reported.
inline DiscrepancyReport compare_bp_exact(const FactorGraph& g, const SolverConfig& config) {
  const ExactResult exact = enumerate(g, config.beta);
  const BpSolution bp = solve(g, config);
  DiscrepancyReport r;
  r.acyclic = is_acyclic(g);
  r.bp_converged = bp.thermo.converged;
  r.bp_free_energy = bp.thermo.free_energy;
  r.exact_free_energy = -exact.log_z;
  r.bp_energy = bp.thermo.energy;
  r.exact_energy = exact.energy;
  r.bp_entropy = bp.thermo.entropy;
  r.exact_entropy = exact.entropy;
  r.bp_marginals = marginals(g, bp.messages);
  r.exact_marginals = exact.marginals;
  return r;
}

/// CSV rows quantity,bp,exact,abs_diff: F, E, S, then m_<i> per variable.
inline Table discrepancy_table(const DiscrepancyReport& r) {
  Table t({"quantity", "bp", "exact", "abs_diff"});
  t.add_row() << "F" << r.bp_free_energy << r.exact_free_energy << r.free_energy_diff();
  t.add_row() << "E" << r.bp_energy << r.exact_energy << r.energy_diff();
  t.add_row() << "S" << r.bp_entropy << r.exact_entropy << r.entropy_diff();
  for (std::size_t i = 0; i < r.bp_marginals.size(); ++i)
    t.add_row() << ("m_" + std::to_string(i)) << r.bp_marginals[i] << r.exact_marginals[i]
                << std::abs(r.bp_marginals[i] - r.exact_marginals[i]);
  return t;
}

// ---------------------------------------------------------------------------
// Seeded instance suite

struct OracleCase {
  RapInstance instance;
  std::uint64_t depth = 3;
  bool acyclic = false;
  std::uint64_t seed = 0;  // build seed; also roots the BP seed
};

/// `trees` acyclic and `loopy` cyclic instances with at most max_vars
/// variables. Depth alternates 2, 3 (trees) and 3, 2 (loopy). Each case is
/// rejection-sampled from its own sub-seed ("oracle-tree", k) or
/// ("oracle-loopy", k): trees draw M uniformly from 1..N, loopy instances
/// from N..2N.
inline std::vector<OracleCase> oracle_suite(std::uint64_t seed, std::size_t trees, std::size_t loopy,
                                            std::size_t max_vars = 20) {
  if (max_vars > kMaxEnumerationVariables)
    throw ParameterError("oracle_suite: max_vars " + std::to_string(max_vars) +
                         " exceeds the enumeration limit of " +
                         std::to_string(kMaxEnumerationVariables));
  if (max_vars < 6) throw ParameterError("oracle_suite: max_vars must be >= 6");
  std::vector<OracleCase> out;
  auto draw = [&](const char* tag, std::size_t k, std::uint64_t depth, bool want_acyclic) {
    Rng rng(derive_seed(seed, tag, k));
    const std::uint64_t n = max_vars / depth;
    for (;;) {
      const std::uint64_t m = want_acyclic ? 1 + uniform_index(rng, n) : n + uniform_index(rng, n + 1);
      const std::uint64_t s = rng();
      RapInstance inst = build_rap({n, depth, m, s});
      if (is_acyclic(inst.graph) == want_acyclic) {
        out.push_back({std::move(inst), depth, want_acyclic, s});
        return;
      }
    }
  };
  for (std::size_t k = 0; k < trees; ++k) draw("oracle-tree", k, 2 + k % 2, true);
  for (std::size_t k = 0; k < loopy; ++k) draw("oracle-loopy", k, 3 - k % 2, false);
  return out;
}

/// Solver settings for the suite: random initial messages (amplitude 0.5),
/// seeded per case.
inline SolverConfig oracle_solver(const OracleCase& c, double beta = 1.0) {
  SolverConfig s;
  s.beta = beta;
  s.init_mode = InitMode::kRandom;
  s.amplitude = 0.5;
  s.max_iters = 2000;
  s.seed = derive_seed(c.seed, "bp");
  return s;
}

}  // namespace rapnet
