#include <gtest/gtest.h>

#include <cmath>

#include "json.hpp"
#include "rapnet/rap_solver.hpp"

namespace rapnet {
namespace {

// Reference values evaluated in 30-digit arithmetic from the closed forms.
constexpr double kTanh1 = 0.76159415595576488812;
constexpr double kLogCosh1 = 0.43378083048302462;
constexpr double kLn2 = 0.69314718055994530942;
constexpr double kSingleInteractionF = -2.5132223721628631;  // -ln(4(e + 1/e))
constexpr double kLambdaC = 6.3433709983603787;              // 3 ln 2 / (tanh 1 - ln cosh 1)
constexpr double kEnergyC = -1.6103580938035168;             // -(lambda_c / 3) tanh 1

SolverConfig random_init(std::uint64_t seed, double amplitude = 0.1) {
  SolverConfig c;
  c.init_mode = InitMode::kRandom;
  c.amplitude = amplitude;
  c.seed = seed;
  return c;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

TEST(InitMessages, ZeroAndRandomModes) {
  const auto g = build_rap({100, 3, 300, 1}).graph;
  const auto zero = init_messages(g, SolverConfig{});
  EXPECT_EQ(zero.var_to_fac.size(), g.num_edges());
  EXPECT_EQ(max_abs(zero.var_to_fac), 0.0);
  EXPECT_EQ(max_abs(zero.fac_to_var), 0.0);

  EXPECT_EQ(init_messages(g, random_init(4, 0.0)), zero);

  const auto a = init_messages(g, random_init(4));
  const auto b = init_messages(g, random_init(4));
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == init_messages(g, random_init(5)));
  EXPECT_LE(max_abs(a.var_to_fac), 0.1);
  EXPECT_GT(max_abs(a.var_to_fac), 0.05);
  EXPECT_LE(max_abs(a.fac_to_var), 0.01 * kTanh1 + 1e-16);
}

TEST(BpIterate, ZeroIsAFixedPointAfterOneSweep) {
  for (std::uint64_t depth : {3u, 4u, 5u}) {
    const auto g = build_rap({200, depth, 1500, depth}).graph;
    Messages msg = init_messages(g, SolverConfig{});
    const auto st = bp_iterate(g, msg, SolverConfig{});
    EXPECT_TRUE(st.converged);
    EXPECT_EQ(st.iterations, 1u);
    EXPECT_EQ(max_abs(msg.var_to_fac), 0.0);
    EXPECT_EQ(max_abs(msg.fac_to_var), 0.0);
  }
}

TEST(BpIterate, SingleInteractionRandomInit) {
  const auto inst = build_rap({1, 3, 1, 0});
  SolverConfig c = random_init(9, 0.5);
  Messages msg = init_messages(inst.graph, c);
  const auto st = bp_iterate(inst.graph, msg, c);
  EXPECT_TRUE(st.converged);
  EXPECT_LE(max_abs(msg.fac_to_var), kTanh1);
  for (double m : marginals(inst.graph, msg)) EXPECT_EQ(m, 0.0);
  const auto o = observables(inst.graph, msg, 1.0, st);
  EXPECT_NEAR(o.free_energy, kSingleInteractionF, 1e-12);
  EXPECT_NEAR(o.energy, -kTanh1, 1e-12);
}

TEST(BpIterate, ParamagneticRecoveryAtLambda3) {
  const auto g = build_rap({2000, 3, 6000, 21}).graph;
  SolverConfig c = random_init(2);
  Messages msg = init_messages(g, c);
  const auto st = bp_iterate(g, msg, c);
  ASSERT_TRUE(st.converged);
  EXPECT_LT(max_abs(msg.var_to_fac), 1e-9);
  EXPECT_LT(max_abs(msg.fac_to_var), 1e-9);
}

TEST(BpIterate, ReportsNonConvergence) {
  const auto g = build_rap({500, 3, 2000, 3}).graph;
  SolverConfig c = random_init(1, 0.9);
  c.max_iters = 1;
  Messages msg = init_messages(g, c);
  const auto st = bp_iterate(g, msg, c);
  EXPECT_FALSE(st.converged);
  EXPECT_EQ(st.iterations, 1u);
}

TEST(BpIterate, MessageBounds) {
  const auto g = build_rap({50, 3, 500, 3}).graph;  // lambda = 10
  SolverConfig c = random_init(5, 0.95);
  c.beta = 2.0;
  c.max_iters = 50;
  Messages msg = init_messages(g, c);
  bp_iterate(g, msg, c);
  EXPECT_LE(max_abs(msg.var_to_fac), 1.0);
  EXPECT_LE(max_abs(msg.fac_to_var), std::tanh(2.0));
}

TEST(Bethe, ZeroMessageClosedForms) {
  const std::uint64_t n = 300, m = 1000;
  const auto g = build_rap({n, 3, m, 6}).graph;
  const auto msg = init_messages(g, SolverConfig{});
  const double f = bethe_free_energy(g, msg, 1.0);
  const double e = bethe_energy(g, msg, 1.0);
  EXPECT_NEAR(f, -3.0 * n * kLn2 - m * kLogCosh1, 1e-9);
  EXPECT_NEAR(e, -static_cast<double>(m) * kTanh1, 1e-9);
}

TEST(Bethe, EmptyGraph) {
  const auto g = build_rap({7, 3, 0, 0}).graph;
  const auto sol = solve(g, SolverConfig{});
  EXPECT_NEAR(sol.thermo.free_energy, -21.0 * kLn2, 1e-13);
  EXPECT_EQ(sol.thermo.energy, 0.0);
  EXPECT_NEAR(sol.thermo.s, kLn2, 1e-15);
}

TEST(Entropy, Identity) {
  EXPECT_DOUBLE_EQ(entropy(-2.0, -0.5, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(entropy(-2.0, -0.5, 2.0), 1.0);
  for (double beta : {0.5, 1.0, 1.7}) {
    const auto g = build_rap({400, 3, 1200, 7}).graph;
    SolverConfig c = random_init(3);
    c.beta = beta;
    const auto o = solve(g, c).thermo;
    EXPECT_NEAR(o.entropy, beta * o.energy - o.free_energy, 1e-9);
    EXPECT_NEAR(o.s, beta * o.e - o.f, 1e-12);
  }
}

TEST(Paramagnetic, ClosedForms) {
  const auto zero = paramagnetic_observables(0.0, 1.0, 3);
  EXPECT_DOUBLE_EQ(zero.f, -kLn2);
  EXPECT_EQ(zero.e, 0.0);
  EXPECT_DOUBLE_EQ(zero.s, kLn2);
  EXPECT_NEAR(paramagnetic_observables(3.0, 1.0, 3).s, 0.36533385508720761, 1e-15);
  EXPECT_NEAR(paramagnetic_observables(6.336, 1.0, 3).e, -1.6084868573785754, 1e-15);
  EXPECT_THROW(paramagnetic_observables(-1.0, 1.0, 3), ParameterError);
}

TEST(Paramagnetic, BpFromZeroMatchesClosedForm) {
  for (double lambda : {0.5, 2.0, 6.0, 9.0}) {
    const std::uint64_t n = 1000;
    const auto g = build_rap({n, 3, num_paths_for(lambda, n), 13}).graph;
    const auto o = solve(g, SolverConfig{}).thermo;
    const auto ref = paramagnetic_observables(lambda, 1.0, 3);
    EXPECT_NEAR(o.f, ref.f, 1e-10 * std::abs(ref.f));
    EXPECT_NEAR(o.e, ref.e, 1e-10 * std::abs(ref.e));
    EXPECT_NEAR(o.s, ref.s, 1e-10 * std::abs(ref.s));
  }
}

TEST(Properties, ScheduleReshuffleInvariance) {
  const auto g = build_rap({500, 3, 2500, 17}).graph;
  SolverConfig c = random_init(1);
  const auto a = solve(g, c).thermo;
  c.seed = 777;
  const auto b = solve(g, c).thermo;
  EXPECT_NEAR(a.f, b.f, 1e-10);
  EXPECT_NEAR(a.e, b.e, 1e-10);
  EXPECT_NEAR(a.s, b.s, 1e-10);
}

TEST(Properties, GaugeFlipOfPlantedConfiguration) {
  // Negating every planted spin multiplies each coupling by (-1)^p.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = build_rap({300, 3, 1500, seed});
    const auto& g = inst.graph;
    std::vector<std::int8_t> flipped(g.couplings().begin(), g.couplings().end());
    for (auto& j : flipped) j = static_cast<std::int8_t>(-j);
    std::vector<std::uint32_t> members(g.all_members().begin(), g.all_members().end());
    const FactorGraph gauge(300, 3, std::move(members), std::move(flipped));
    SolverConfig c = random_init(seed);
    const auto a = solve(g, c).thermo;
    const auto b = solve(gauge, c).thermo;
    EXPECT_NEAR(a.f, b.f, 1e-10);
    EXPECT_NEAR(a.e, b.e, 1e-10);
    EXPECT_NEAR(a.s, b.s, 1e-10);
  }
}

TEST(SweepLambda, ZeroGridPoint) {
  SweepSpec spec;
  spec.population_size = 100;
  spec.lambda_grid = {0.0};
  spec.num_samples = 3;
  const auto r = sweep_lambda(spec);
  ASSERT_EQ(r.aggregate.size(), 1u);
  EXPECT_EQ(r.aggregate[0].e.mean, 0.0);
  EXPECT_NEAR(r.aggregate[0].s.mean, kLn2, 1e-15);
  EXPECT_EQ(r.aggregate[0].convergence_rate, 1.0);
  EXPECT_EQ(r.instances.size(), 3u);
}

TEST(SweepLambda, RandomInitMatchesZeroInitInParamagneticRegime) {
  SweepSpec spec;
  spec.population_size = 500;
  spec.lambda_grid = {1.0, 3.0, 5.0};
  spec.num_samples = 3;
  spec.root_seed = 4;
  const auto zero = sweep_lambda(spec);
  spec.solver.init_mode = InitMode::kRandom;
  const auto rnd = sweep_lambda(spec);
  for (std::size_t k = 0; k < zero.aggregate.size(); ++k) {
    EXPECT_NEAR(zero.aggregate[k].e.mean, rnd.aggregate[k].e.mean, 1e-8);
    EXPECT_NEAR(zero.aggregate[k].s.mean, rnd.aggregate[k].s.mean, 1e-8);
  }
}

TEST(SweepLambda, ThreadCountDoesNotChangeResults) {
  SweepSpec spec;
  spec.population_size = 200;
  spec.lambda_grid = {2.0, 4.0};
  spec.num_samples = 4;
  spec.solver.init_mode = InitMode::kRandom;
  const auto a = sweep_lambda(spec);
  spec.threads = 3;
  const auto b = sweep_lambda(spec);
  EXPECT_EQ(to_csv(instance_table(a)), to_csv(instance_table(b)));
}

TEST(SweepLambda, EnergyDecreasesWithLambda) {
  SweepSpec spec;
  spec.population_size = 500;
  for (int l = 1; l <= 6; ++l) spec.lambda_grid.push_back(l);
  spec.num_samples = 2;
  spec.solver.init_mode = InitMode::kRandom;
  const auto r = sweep_lambda(spec);
  for (std::size_t k = 1; k < r.aggregate.size(); ++k)
    EXPECT_LT(r.aggregate[k].e.mean, r.aggregate[k - 1].e.mean);
}

TEST(SweepLambda, RejectsEmptyGrid) {
  EXPECT_THROW(sweep_lambda(SweepSpec{}), ParameterError);
}

TEST(CriticalPoint, Analytic) {
  CriticalSearch cs;
  cs.lambda_lo = 1.0;
  cs.lambda_hi = 10.0;
  cs.bisect_tol = 1e-13;
  const auto cp = find_lambda_c(cs);
  EXPECT_NEAR(cp.lambda_c, kLambdaC, 1e-11);
  EXPECT_NEAR(cp.e_c, kEnergyC, 1e-11);
  EXPECT_NEAR(analytic_lambda_c(1.0, 3), kLambdaC, 1e-13);
}

TEST(CriticalPoint, InvalidBracket) {
  CriticalSearch cs;
  cs.lambda_lo = 1.0;
  cs.lambda_hi = 5.0;  // entropy still positive
  EXPECT_THROW(find_lambda_c(cs), ParameterError);
  cs.lambda_lo = 7.0;
  cs.lambda_hi = 6.0;
  EXPECT_THROW(find_lambda_c(cs), ParameterError);
}

TEST(CriticalPoint, SampledModeSmallN) {
  CriticalSearch cs;
  cs.method = CriticalMethod::kBp;
  cs.population_size = 300;
  cs.num_samples = 2;
  cs.lambda_lo = 5.0;
  cs.lambda_hi = 8.0;
  cs.bisect_tol = 1e-3;
  cs.solver.init_mode = InitMode::kRandom;
  const auto cp = find_lambda_c(cs);
  EXPECT_NEAR(cp.lambda_c, kLambdaC, 0.01);
  EXPECT_NEAR(cp.e_c, kEnergyC, 0.01);
}

TEST(FrozenCurve, ClampsAtCriticalPoint) {
  CriticalPoint cp{kLambdaC, kEnergyC, CriticalMethod::kAnalytic, 1e-12};
  const std::vector<double> grid{0.0, 3.0, kLambdaC, 10.0};
  const auto curve = frozen_energy_curve(grid, cp);
  EXPECT_EQ(curve[0].e, 0.0);
  EXPECT_NEAR(curve[1].e, -kTanh1, 1e-15);
  EXPECT_EQ(curve[2].e, kEnergyC);
  EXPECT_EQ(curve[3].e, kEnergyC);
}

TEST(Serialization, TablesAndJson) {
  SweepSpec spec;
  spec.population_size = 50;
  spec.lambda_grid = {1.0, 2.0};
  spec.num_samples = 2;
  const auto r = sweep_lambda(spec);
  const auto inst = to_csv(instance_table(r));
  EXPECT_EQ(inst.substr(0, inst.find('\n')), "lambda,sample,f,e,s,converged,iters");
  EXPECT_EQ(instance_table(r).rows.size(), 4u);
  const auto agg = to_csv(aggregate_table(r));
  EXPECT_EQ(agg.substr(0, agg.find('\n')), "lambda,e_mean,e_stderr,s_mean,s_stderr");

  const auto j = nlohmann::json::parse(
      critical_point_json({kLambdaC, kEnergyC, CriticalMethod::kAnalytic, 1e-12}));
  EXPECT_EQ(j.at("method"), "analytic");
  EXPECT_DOUBLE_EQ(j.at("lambda_c").get<double>(), kLambdaC);
  EXPECT_DOUBLE_EQ(j.at("e_c").get<double>(), kEnergyC);
  EXPECT_DOUBLE_EQ(j.at("tol").get<double>(), 1e-12);
}

}  // namespace
}  // namespace rapnet
