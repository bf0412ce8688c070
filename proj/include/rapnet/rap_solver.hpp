// Belief propagation for the random active path model, Bethe free energy,
// energy and entropy, lambda sweeps and the zero-entropy critical point.
//
// Conventions: F is the dimensionless Bethe estimate of -ln Z, E the Bethe
// estimate of <H>, and S = beta*E - F. At beta = 1 this is S = E - F.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "rapnet/common.hpp"
#include "rapnet/parallel.hpp"
#include "rapnet/rap_graph.hpp"
#include "rapnet/table.hpp"

namespace rapnet {

enum class InitMode { kZero, kRandom };

struct SolverConfig {
  double beta = 1.0;
  double damping = 0.0;  // fraction of the old factor message retained
  double tol = 1e-10;    // on the max absolute message change within a sweep
  std::size_t max_iters = 10000;
  InitMode init_mode = InitMode::kZero;
  double amplitude = 0.1;  // random init: m uniform in [-amplitude, amplitude]
  std::uint64_t seed = 0;  // random init and update order

  void validate() const {
    if (!(tol > 0.0)) throw ParameterError("SolverConfig: tol must be > 0");
    if (!(damping >= 0.0 && damping < 1.0))
      throw ParameterError("SolverConfig: damping must lie in [0,1)");
    if (!(amplitude >= 0.0 && amplitude < 1.0))
      throw ParameterError("SolverConfig: amplitude must lie in [0,1)");
    if (!(beta >= 0.0) || !std::isfinite(beta))
      throw ParameterError("SolverConfig: beta must be finite and >= 0");
    if (max_iters == 0) throw ParameterError("SolverConfig: max_iters must be >= 1");
  }
};

/// Cavity messages indexed by edge id (see FactorGraph). var_to_fac[e] is
/// m_{i->a}; fac_to_var[e] is mhat_{a->i}.
struct Messages {
  std::vector<double> var_to_fac;
  std::vector<double> fac_to_var;

  bool operator==(const Messages&) const = default;
};

struct BpStatus {
  bool converged = false;
  std::size_t iterations = 0;
  double last_change = 0.0;
};

namespace detail {

constexpr double kAtanhClamp = 1.0 - 1e-15;

inline double clamped_atanh(double x) {
  return std::atanh(std::clamp(x, -kAtanhClamp, kAtanhClamp));
}

/// mhat_{b->i} for every member of b, from the current m_{j->b}. Uses
/// prefix/suffix products so zero messages need no special casing.
inline void factor_update(std::span<const double> in, double t, std::span<double> out) {
  const std::size_t p = in.size();
  double prefix = 1.0;
  for (std::size_t k = 0; k < p; ++k) {
    out[k] = prefix;
    prefix *= in[k];
  }
  double suffix = 1.0;
  for (std::size_t k = p; k-- > 0;) {
    out[k] *= suffix * t;
    suffix *= in[k];
  }
}

}  // namespace detail

/// Zero mode: every message 0. Random mode: m_{i->a} uniform in
/// [-amplitude, amplitude] from sub-seed "init" of config.seed, then one
/// factor-side update.
inline Messages init_messages(const FactorGraph& g, const SolverConfig& config) {
  Messages msg;
  msg.var_to_fac.assign(g.num_edges(), 0.0);
  msg.fac_to_var.assign(g.num_edges(), 0.0);
  if (config.init_mode == InitMode::kZero || config.amplitude == 0.0) return msg;

  Rng rng(derive_seed(config.seed, "init"));
  for (double& m : msg.var_to_fac) m = config.amplitude * (2.0 * uniform01(rng) - 1.0);
  const std::size_t p = g.depth();
  for (std::size_t a = 0; a < g.num_interactions(); ++a) {
    const double t = std::tanh(config.beta * g.coupling(a));
    detail::factor_update({msg.var_to_fac.data() + a * p, p}, t,
                          {msg.fac_to_var.data() + a * p, p});
  }
  return msg;
}

/// Random-sequential BP sweeps. Each sweep visits the interactions in an
/// order shuffled from sub-seed ("schedule", sweep) of config.seed; at each
/// interaction b it refreshes m_{j->b} for its members from the current
/// cavity fields, then recomputes (and damps) mhat_{b->j}. Stops when the
/// largest change in a sweep is below tol. Non-convergence is reported, not
/// thrown.
inline BpStatus bp_iterate(const FactorGraph& g, Messages& msg, const SolverConfig& config) {
  config.validate();
  const std::size_t p = g.depth();
  const std::size_t nv = g.num_variables();
  if (msg.var_to_fac.size() != g.num_edges() || msg.fac_to_var.size() != g.num_edges())
    throw ParameterError("bp_iterate: message arrays do not match the graph");

  std::vector<double> tanh_j(g.num_interactions());
  for (std::size_t a = 0; a < tanh_j.size(); ++a)
    tanh_j[a] = std::tanh(config.beta * g.coupling(a));

  std::vector<std::uint32_t> order(g.num_interactions());
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> field(nv);
  std::vector<double> fresh(p);

  BpStatus status;
  for (std::size_t sweep = 0; sweep < config.max_iters; ++sweep) {
    for (std::size_t i = 0; i < nv; ++i) {
      double h = 0.0;
      for (std::uint32_t e : g.edges_of(i)) h += detail::clamped_atanh(msg.fac_to_var[e]);
      field[i] = h;
    }
    Rng rng(derive_seed(config.seed, "schedule", sweep));
    shuffle(std::span(order), rng);

    double max_change = 0.0;
    for (std::uint32_t b : order) {
      const std::size_t base = std::size_t{b} * p;
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t e = base + k;
        const double cavity = field[g.edge_variable(e)] - detail::clamped_atanh(msg.fac_to_var[e]);
        const double m = std::tanh(cavity);
        max_change = std::max(max_change, std::abs(m - msg.var_to_fac[e]));
        msg.var_to_fac[e] = m;
      }
      detail::factor_update({msg.var_to_fac.data() + base, p}, tanh_j[b], fresh);
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t e = base + k;
        const double old = msg.fac_to_var[e];
        const double updated = config.damping * old + (1.0 - config.damping) * fresh[k];
        max_change = std::max(max_change, std::abs(updated - old));
        msg.fac_to_var[e] = updated;
        field[g.edge_variable(e)] +=
            detail::clamped_atanh(updated) - detail::clamped_atanh(old);
      }
    }
    status.iterations = sweep + 1;
    status.last_change = max_change;
    if (max_change < config.tol) {
      status.converged = true;
      break;
    }
  }
  return status;
}

/// Single-site magnetizations <w_i> = tanh(sum_b atanh mhat_{b->i}).
inline std::vector<double> marginals(const FactorGraph& g, const Messages& msg) {
  std::vector<double> m(g.num_variables());
  for (std::size_t i = 0; i < m.size(); ++i) {
    double h = 0.0;
    for (std::uint32_t e : g.edges_of(i)) h += detail::clamped_atanh(msg.fac_to_var[e]);
    m[i] = std::tanh(h);
  }
  return m;
}

namespace detail {

inline double log_cosh(double x) {
  const double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

/// Product of m_{j->a} over all members of a.
inline double full_product(const Messages& msg, std::size_t a, std::size_t p) {
  double prod = 1.0;
  for (std::size_t k = 0; k < p; ++k) prod *= msg.var_to_fac[a * p + k];
  return prod;
}

/// Product of m_{j->a} over members of a other than slot `skip`.
inline double cavity_product(const Messages& msg, std::size_t a, std::size_t p, std::size_t skip) {
  double prod = 1.0;
  for (std::size_t k = 0; k < p; ++k)
    if (k != skip) prod *= msg.var_to_fac[a * p + k];
  return prod;
}

/// ln of sum_x prod_b (1 + x mhat_b), and the weights of x = +1 / -1.
struct SiteSums {
  double log_sum = 0.0;
  double w_plus = 0.5;
  double w_minus = 0.5;
};

inline SiteSums site_sums(const FactorGraph& g, const Messages& msg, std::size_t i) {
  double lp = 0.0, lm = 0.0;
  for (std::uint32_t e : g.edges_of(i)) {
    const double mh = msg.fac_to_var[e];
    if (!(1.0 + mh > 0.0) || !(1.0 - mh > 0.0))
      throw NumericalError("Bethe site term: |mhat| reached 1");
    lp += std::log1p(mh);
    lm += std::log1p(-mh);
  }
  SiteSums s;
  s.log_sum = log_add_exp(lp, lm);
  s.w_plus = std::exp(lp - s.log_sum);
  s.w_minus = std::exp(lm - s.log_sum);
  return s;
}

}  // namespace detail

/// F = -sum_i ln Z_i + sum_a (|a|-1) ln Z_a with
///   Z_i = sum_x prod_{b in i} cosh(beta J_b)(1 + x mhat_{b->i}),
///   Z_a = cosh(beta J_a)(1 + tanh(beta J_a) prod_{i in a} m_{i->a}).
/// Degree-0 variables contribute Z_i = 2. Meaningful at a BP fixed point.
inline double bethe_free_energy(const FactorGraph& g, const Messages& msg, double beta) {
  const std::size_t p = g.depth();
  CompensatedSum f;
  for (std::size_t i = 0; i < g.num_variables(); ++i) {
    double ln_zi = 0.0;
    for (std::uint32_t e : g.edges_of(i))
      ln_zi += detail::log_cosh(beta * g.coupling(g.edge_interaction(e)));
    ln_zi += detail::site_sums(g, msg, i).log_sum;
    f -= ln_zi;
  }
  for (std::size_t a = 0; a < g.num_interactions(); ++a) {
    const double bj = beta * g.coupling(a);
    const double inner = 1.0 + std::tanh(bj) * detail::full_product(msg, a, p);
    if (!(inner > 0.0)) throw NumericalError("bethe_free_energy: Z_a <= 0");
    f += static_cast<double>(p - 1) * (detail::log_cosh(bj) + std::log(inner));
  }
  return f.value();
}

/// E = -sum_i dE_i + sum_a (|a|-1) dE_a, the beta-derivative of F at fixed
/// messages:
///   dE_a = J_a (tanh(beta J_a) + P_a) / (1 + tanh(beta J_a) P_a),
///   dE_i = sum_x H_i(x) g_i(x) / sum_x H_i(x),
///   g_i(x) = sum_b J_b [tanh(beta J_b) + x (1 - tanh^2(beta J_b)) P_{b\i} / (1 + x mhat_{b->i})],
/// i.e. G_i(x)/H_i(x). Degree-0 variables contribute dE_i = 0.
inline double bethe_energy(const FactorGraph& g, const Messages& msg, double beta) {
  const std::size_t p = g.depth();
  CompensatedSum energy;
  for (std::size_t i = 0; i < g.num_variables(); ++i) {
    if (g.degree(i) == 0) continue;
    const auto sums = detail::site_sums(g, msg, i);
    double g_plus = 0.0, g_minus = 0.0;
    for (std::uint32_t e : g.edges_of(i)) {
      const std::size_t b = g.edge_interaction(e);
      const double j = g.coupling(b);
      const double t = std::tanh(beta * j);
      const double cav = detail::cavity_product(msg, b, p, e - b * p);
      const double mh = msg.fac_to_var[e];
      g_plus += j * (t + (1.0 - t * t) * cav / (1.0 + mh));
      g_minus += j * (t - (1.0 - t * t) * cav / (1.0 - mh));
    }
    energy -= sums.w_plus * g_plus + sums.w_minus * g_minus;
  }
  for (std::size_t a = 0; a < g.num_interactions(); ++a) {
    const double j = g.coupling(a);
    const double t = std::tanh(beta * j);
    const double prod = detail::full_product(msg, a, p);
    const double denom = 1.0 + t * prod;
    if (!(denom > 0.0)) throw NumericalError("bethe_energy: Z_a <= 0");
    energy += static_cast<double>(p - 1) * j * (t + prod) / denom;
  }
  return energy.value();
}

/// S = beta*E - F (S = E - F at beta = 1).
inline double entropy(double free_energy, double energy, double beta) {
  return beta * energy - free_energy;
}

struct ThermoObservables {
  double free_energy = 0.0;  // F, total
  double energy = 0.0;       // E, total
  double entropy = 0.0;      // S, total
  double f = 0.0;            // per weight (divided by p*N)
  double e = 0.0;
  double s = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

inline ThermoObservables observables(const FactorGraph& g, const Messages& msg, double beta,
                                     const BpStatus& status = {}) {
  ThermoObservables o;
  o.free_energy = bethe_free_energy(g, msg, beta);
  o.energy = bethe_energy(g, msg, beta);
  o.entropy = entropy(o.free_energy, o.energy, beta);
  const double n = static_cast<double>(g.num_variables());
  o.f = o.free_energy / n;
  o.e = o.energy / n;
  o.s = o.entropy / n;
  o.converged = status.converged;
  o.iterations = status.iterations;
  return o;
}

struct BpSolution {
  Messages messages;
  ThermoObservables thermo;
};

/// init_messages + bp_iterate + observables.
inline BpSolution solve(const FactorGraph& g, const SolverConfig& config) {
  config.validate();
  BpSolution sol{init_messages(g, config), {}};
  const BpStatus status = bp_iterate(g, sol.messages, config);
  sol.thermo = observables(g, sol.messages, config.beta, status);
  return sol;
}

// ---------------------------------------------------------------------------
// Closed forms at the all-zero (paramagnetic) fixed point.

struct ParamagneticObservables {
  double f = 0.0;
  double e = 0.0;
  double s = 0.0;
};

/// Per weight: f = -ln 2 - (lambda/p) ln cosh beta, e = -(lambda/p) tanh beta,
/// s = beta*e - f.
inline ParamagneticObservables paramagnetic_observables(double lambda, double beta,
                                                        std::uint64_t depth = 3) {
  if (!(lambda >= 0.0)) throw ParameterError("paramagnetic_observables: lambda must be >= 0");
  if (depth < 2) throw ParameterError("paramagnetic_observables: p must be >= 2");
  const double r = lambda / static_cast<double>(depth);
  ParamagneticObservables o;
  o.f = -std::log(2.0) - r * detail::log_cosh(beta);
  o.e = -r * std::tanh(beta);
  o.s = beta * o.e - o.f;
  return o;
}

// ---------------------------------------------------------------------------
// Lambda sweeps

struct SweepSpec {
  std::uint64_t population_size = 2000;
  std::uint64_t depth = 3;
  std::vector<double> lambda_grid;
  std::size_t num_samples = 10;
  SolverConfig solver;
  std::uint64_t root_seed = 0;
  unsigned threads = 1;
};

struct InstanceResult {
  double lambda = 0.0;
  std::size_t sample = 0;
  ThermoObservables thermo;
};

struct AggregateResult {
  double lambda = 0.0;
  MeanStderr f, e, s;
  double convergence_rate = 0.0;
};

struct SweepResult {
  std::vector<InstanceResult> instances;  // grid-major, then sample
  std::vector<AggregateResult> aggregate;
};

/// Instance seed for sample k. It does not depend on lambda, so the same
/// sample index yields nested instances across the grid (the first M paths
/// agree), which keeps sampled entropy curves smooth for bisection.
inline std::uint64_t instance_seed(std::uint64_t root_seed, std::size_t sample) {
  return derive_seed(root_seed, "rap-instance", sample);
}

inline std::uint64_t num_paths_for(double lambda, std::uint64_t n) {
  return static_cast<std::uint64_t>(std::llround(lambda * static_cast<double>(n)));
}

inline ThermoObservables run_instance(std::uint64_t n, std::uint64_t depth, double lambda,
                                      std::uint64_t seed, SolverConfig solver) {
  const RapInstance inst = build_rap({n, depth, num_paths_for(lambda, n), seed});
  solver.seed = derive_seed(seed, "bp");
  return solve(inst.graph, solver).thermo;
}

inline AggregateResult aggregate(double lambda, std::span<const InstanceResult> rows) {
  std::vector<double> f, e, s;
  std::size_t ok = 0;
  for (const auto& r : rows) {
    f.push_back(r.thermo.f);
    e.push_back(r.thermo.e);
    s.push_back(r.thermo.s);
    ok += r.thermo.converged ? 1 : 0;
  }
  AggregateResult a;
  a.lambda = lambda;
  a.f = mean_stderr(f);
  a.e = mean_stderr(e);
  a.s = mean_stderr(s);
  a.convergence_rate = rows.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(rows.size());
  return a;
}

/// For every grid value, solves num_samples instances with M = round(lambda N)
/// and averages per-weight observables. Non-converged instances stay in the
/// averages and are counted in convergence_rate.
inline SweepResult sweep_lambda(const SweepSpec& spec) {
  if (spec.lambda_grid.empty()) throw ParameterError("sweep_lambda: empty lambda grid");
  if (spec.num_samples == 0) throw ParameterError("sweep_lambda: need at least one sample");
  spec.solver.validate();
  for (double l : spec.lambda_grid)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ParameterError("sweep_lambda: bad lambda");

  const std::size_t ns = spec.num_samples;
  SweepResult out;
  out.instances.resize(spec.lambda_grid.size() * ns);
  parallel_for(out.instances.size(), spec.threads, [&](std::size_t task) {
    const double lambda = spec.lambda_grid[task / ns];
    const std::size_t sample = task % ns;
    out.instances[task] = {lambda, sample,
                           run_instance(spec.population_size, spec.depth, lambda,
                                        instance_seed(spec.root_seed, sample), spec.solver)};
  });
  for (std::size_t g = 0; g < spec.lambda_grid.size(); ++g)
    out.aggregate.push_back(
        aggregate(spec.lambda_grid[g], std::span(out.instances).subspan(g * ns, ns)));
  return out;
}

// ---------------------------------------------------------------------------
// Critical point

enum class CriticalMethod { kAnalytic, kBp };

inline const char* to_string(CriticalMethod m) {
  return m == CriticalMethod::kAnalytic ? "analytic" : "bp";
}

struct CriticalPoint {
  double lambda_c = 0.0;
  double e_c = 0.0;  // energy per weight at lambda_c
  CriticalMethod method = CriticalMethod::kAnalytic;
  double tol = 0.0;
};

struct CriticalSearch {
  CriticalMethod method = CriticalMethod::kAnalytic;
  double lambda_lo = 1.0;
  double lambda_hi = 10.0;
  double bisect_tol = 1e-12;
  // Sampled mode only:
  std::uint64_t population_size = 2000;
  std::uint64_t depth = 3;
  std::size_t num_samples = 10;
  SolverConfig solver;
  std::uint64_t root_seed = 0;
  unsigned threads = 1;
};

namespace detail {

struct EntropyProbe {
  double s = 0.0;
  double e = 0.0;
};

inline EntropyProbe probe(const CriticalSearch& cs, double lambda) {
  if (cs.method == CriticalMethod::kAnalytic) {
    const auto o = paramagnetic_observables(lambda, cs.solver.beta, cs.depth);
    return {o.s, o.e};
  }
  std::vector<InstanceResult> rows(cs.num_samples);
  parallel_for(rows.size(), cs.threads, [&](std::size_t k) {
    rows[k] = {lambda, k,
               run_instance(cs.population_size, cs.depth, lambda,
                            instance_seed(cs.root_seed, k), cs.solver)};
  });
  const auto agg = aggregate(lambda, rows);
  return {agg.s.mean, agg.e.mean};
}

}  // namespace detail

/// Bisection for the zero of the entropy per weight, s(lambda). Analytic
/// mode uses the paramagnetic closed form; BP mode averages BP entropies over
/// num_samples instances per probe. Requires s(lo) > 0 > s(hi).
inline CriticalPoint find_lambda_c(const CriticalSearch& cs) {
  if (!(cs.lambda_lo < cs.lambda_hi) || cs.lambda_lo < 0.0)
    throw ParameterError("find_lambda_c: bracket must satisfy 0 <= lo < hi");
  if (!(cs.bisect_tol > 0.0)) throw ParameterError("find_lambda_c: bisect_tol must be > 0");
  if (cs.method == CriticalMethod::kBp) {
    cs.solver.validate();
    if (cs.num_samples == 0) throw ParameterError("find_lambda_c: need at least one sample");
  }
  double lo = cs.lambda_lo, hi = cs.lambda_hi;
  const double s_lo = detail::probe(cs, lo).s;
  const double s_hi = detail::probe(cs, hi).s;
  if (!(s_lo > 0.0 && s_hi < 0.0))
    throw ParameterError("find_lambda_c: bracket does not straddle a sign change of the entropy (s(lo)=" +
                         format_real(s_lo) + ", s(hi)=" + format_real(s_hi) + ")");
  while (hi - lo > cs.bisect_tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (detail::probe(cs, mid).s > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  CriticalPoint cp;
  cp.lambda_c = 0.5 * (lo + hi);
  cp.e_c = detail::probe(cs, cp.lambda_c).e;
  cp.method = cs.method;
  cp.tol = cs.bisect_tol;
  return cp;
}

/// Closed-form root of the paramagnetic entropy,
/// ln 2 + (lambda/p)(ln cosh beta - beta tanh beta) = 0.
inline double analytic_lambda_c(double beta, std::uint64_t depth = 3) {
  return static_cast<double>(depth) * std::log(2.0) /
         (beta * std::tanh(beta) - detail::log_cosh(beta));
}

struct FrozenPoint {
  double lambda = 0.0;
  double e = 0.0;
};

/// Paramagnetic energy below lambda_c, constant e_c at and above it.
inline std::vector<FrozenPoint> frozen_energy_curve(std::span<const double> lambda_grid,
                                                    const CriticalPoint& critical,
                                                    double beta = 1.0, std::uint64_t depth = 3) {
  std::vector<FrozenPoint> out;
  out.reserve(lambda_grid.size());
  for (double l : lambda_grid)
    out.push_back({l, l < critical.lambda_c ? paramagnetic_observables(l, beta, depth).e
                                            : critical.e_c});
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline Table instance_table(const SweepResult& r) {
  Table t({"lambda", "sample", "f", "e", "s", "converged", "iters"});
  for (const auto& row : r.instances)
    t.add_row() << row.lambda << static_cast<std::uint64_t>(row.sample) << row.thermo.f
                << row.thermo.e << row.thermo.s << row.thermo.converged
                << static_cast<std::uint64_t>(row.thermo.iterations);
  return t;
}

inline Table aggregate_table(const SweepResult& r) {
  Table t({"lambda", "e_mean", "e_stderr", "s_mean", "s_stderr"});
  for (const auto& a : r.aggregate)
    t.add_row() << a.lambda << a.e.mean << a.e.sem << a.s.mean << a.s.sem;
  return t;
}

inline Table frozen_table(std::span<const FrozenPoint> curve) {
  Table t({"lambda", "e"});
  for (const auto& p : curve) t.add_row() << p.lambda << p.e;
  return t;
}

inline std::string critical_point_json(const CriticalPoint& cp) {
  nlohmann::ordered_json j;
  j["lambda_c"] = cp.lambda_c;
  j["e_c"] = cp.e_c;
  j["method"] = to_string(cp.method);
  j["tol"] = cp.tol;
  return j.dump(2) + "\n";
}

}  // namespace rapnet
