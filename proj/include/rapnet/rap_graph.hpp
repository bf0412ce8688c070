// Random active path instances: p populations of N binary weights, M
// interactions, each interaction a product of one weight per population.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "rapnet/common.hpp"
#include "rapnet/table.hpp"

namespace rapnet {

struct RapParams {
  std::uint64_t population_size = 1;  // N, weights per population
  std::uint64_t depth = 3;            // p, number of populations
  std::uint64_t num_paths = 0;        // M
  std::uint64_t seed = 0;

  double mean_degree() const noexcept {
    return static_cast<double>(num_paths) / static_cast<double>(population_size);
  }

  void validate() const {
    if (population_size < 1) throw ParameterError("RapParams: N must be >= 1");
    if (depth < 2) throw ParameterError("RapParams: p must be >= 2");
    if (population_size * depth > std::numeric_limits<std::uint32_t>::max())
      throw ParameterError("RapParams: p*N exceeds 32-bit variable indices");
  }
};

/// Immutable bipartite factor graph. Variable i belongs to population
/// i / N. Interaction a occupies edge slots a*p .. a*p+p-1; slot k holds the
/// member drawn from population k. Edge ids are shared by both message
/// directions.
class FactorGraph {
 public:
  FactorGraph() = default;

  /// `members` is the flat M*p member list, `couplings` holds J_a in {-1,+1}.
  FactorGraph(std::uint64_t population_size, std::uint64_t depth,
              std::vector<std::uint32_t> members, std::vector<std::int8_t> couplings)
      : population_size_(population_size),
        depth_(depth),
        members_(std::move(members)),
        couplings_(std::move(couplings)) {
    if (population_size_ < 1 || depth_ < 2)
      throw ParameterError("FactorGraph: need N >= 1 and p >= 2");
    if (members_.size() != couplings_.size() * depth_)
      throw ParameterError("FactorGraph: member list is not M*p long");
    for (std::int8_t j : couplings_)
      if (j != 1 && j != -1) throw ParameterError("FactorGraph: coupling must be +-1");
    for (std::size_t e = 0; e < members_.size(); ++e) {
      const std::uint64_t pop = e % depth_;
      const std::uint64_t v = members_[e];
      if (v / population_size_ != pop || v >= num_variables())
        throw ParameterError("FactorGraph: member " + std::to_string(v) +
                             " is not in population " + std::to_string(pop));
    }
    build_adjacency();
  }

  std::uint64_t population_size() const noexcept { return population_size_; }
  std::uint64_t depth() const noexcept { return depth_; }
  std::size_t num_variables() const noexcept { return population_size_ * depth_; }
  std::size_t num_interactions() const noexcept { return couplings_.size(); }
  std::size_t num_edges() const noexcept { return members_.size(); }

  int coupling(std::size_t a) const { return couplings_[a]; }
  std::span<const std::int8_t> couplings() const noexcept { return couplings_; }
  std::span<const std::uint32_t> members(std::size_t a) const {
    return {members_.data() + a * depth_, depth_};
  }
  std::span<const std::uint32_t> all_members() const noexcept { return members_; }

  std::uint32_t edge_variable(std::size_t e) const { return members_[e]; }
  std::size_t edge_interaction(std::size_t e) const { return e / depth_; }

  /// Edge ids incident on variable i, in increasing interaction order.
  std::span<const std::uint32_t> edges_of(std::size_t i) const {
    return {var_edges_.data() + var_offsets_[i], var_offsets_[i + 1] - var_offsets_[i]};
  }
  std::size_t degree(std::size_t i) const { return var_offsets_[i + 1] - var_offsets_[i]; }

  bool operator==(const FactorGraph& o) const {
    return population_size_ == o.population_size_ && depth_ == o.depth_ &&
           members_ == o.members_ && couplings_ == o.couplings_;
  }

 private:
  void build_adjacency() {
    const std::size_t n = num_variables();
    var_offsets_.assign(n + 1, 0);
    for (std::uint32_t v : members_) ++var_offsets_[v + 1];
    std::partial_sum(var_offsets_.begin(), var_offsets_.end(), var_offsets_.begin());
    var_edges_.resize(members_.size());
    std::vector<std::size_t> fill(var_offsets_.begin(), var_offsets_.end() - 1);
    for (std::size_t e = 0; e < members_.size(); ++e)
      var_edges_[fill[members_[e]]++] = static_cast<std::uint32_t>(e);
  }

  std::uint64_t population_size_ = 1;
  std::uint64_t depth_ = 2;
  std::vector<std::uint32_t> members_;
  std::vector<std::int8_t> couplings_;
  std::vector<std::size_t> var_offsets_{0, 0, 0};
  std::vector<std::uint32_t> var_edges_;
};

/// Spin configuration over all variables; entries must be -1 or +1.
using SpinConfig = std::vector<std::int8_t>;

struct PlantedConfig {
  SpinConfig values;
};

struct RapInstance {
  FactorGraph graph;
  PlantedConfig planted;
};

/// Samples an instance. Planted spins come from the "planted" sub-seed and
/// path members from the "paths" sub-seed of params.seed; each interaction
/// picks one uniform weight per population, and J_a is the product of the
/// planted spins it touches. Whole-interaction duplicates are allowed.
inline RapInstance build_rap(const RapParams& params) {
  params.validate();
  const std::uint64_t n = params.population_size;
  const std::uint64_t p = params.depth;
  const std::size_t total = n * p;

  Rng planted_rng(derive_seed(params.seed, "planted"));
  SpinConfig w0(total);
  for (auto& w : w0) w = (planted_rng() >> 63) ? 1 : -1;

  Rng path_rng(derive_seed(params.seed, "paths"));
  std::vector<std::uint32_t> members(params.num_paths * p);
  std::vector<std::int8_t> couplings(params.num_paths);
  for (std::uint64_t a = 0; a < params.num_paths; ++a) {
    int j = 1;
    for (std::uint64_t k = 0; k < p; ++k) {
      const auto v = static_cast<std::uint32_t>(k * n + uniform_index(path_rng, n));
      members[a * p + k] = v;
      j *= w0[v];
    }
    couplings[a] = static_cast<std::int8_t>(j);
  }
  return {FactorGraph(n, p, std::move(members), std::move(couplings)), {std::move(w0)}};
}

/// H(w) = -sum_a J_a prod_{i in a} w_i. Integer valued, returned as double.
inline double hamiltonian(const FactorGraph& g, std::span<const std::int8_t> config) {
  if (config.size() != g.num_variables())
    throw ParameterError("hamiltonian: configuration does not cover every variable");
  for (std::int8_t w : config)
    if (w != 1 && w != -1) throw ParameterError("hamiltonian: spins must be +-1");
  std::int64_t h = 0;
  for (std::size_t a = 0; a < g.num_interactions(); ++a) {
    int prod = g.coupling(a);
    for (std::uint32_t v : g.members(a)) prod *= config[v];
    h -= prod;
  }
  return static_cast<double>(h);
}

// ---------------------------------------------------------------------------
// Degree statistics

/// e^{-lambda} lambda^k / k!, evaluated in log space.
inline double poisson_pmf(double lambda, std::uint64_t k) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ParameterError("poisson_pmf: lambda must be finite and >= 0");
  if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
  const double kd = static_cast<double>(k);
  return std::exp(-lambda + kd * std::log(lambda) - std::lgamma(kd + 1.0));
}

struct DegreeStats {
  std::vector<std::uint64_t> histogram;  // histogram[k] = #variables of degree k
  double mean_degree = 0.0;              // M / N
  std::vector<double> population_split;  // mean degree within each population
  std::uint64_t num_variables = 0;

  std::uint64_t count(std::size_t k) const { return k < histogram.size() ? histogram[k] : 0; }
};

inline DegreeStats degree_histogram(const FactorGraph& g) {
  DegreeStats s;
  s.num_variables = g.num_variables();
  s.population_split.assign(g.depth(), 0.0);
  std::vector<std::uint64_t> pop_sum(g.depth(), 0);
  for (std::size_t i = 0; i < g.num_variables(); ++i) {
    const std::size_t d = g.degree(i);
    if (d >= s.histogram.size()) s.histogram.resize(d + 1, 0);
    ++s.histogram[d];
    pop_sum[i / g.population_size()] += d;
  }
  for (std::size_t k = 0; k < g.depth(); ++k)
    s.population_split[k] =
        static_cast<double>(pop_sum[k]) / static_cast<double>(g.population_size());
  s.mean_degree = static_cast<double>(g.num_edges()) / static_cast<double>(g.num_variables());
  return s;
}

/// Half the L1 distance between the empirical degree law and Poisson(lambda).
inline double total_variation_to_poisson(const DegreeStats& s, double lambda) {
  double tv = 0.0, covered = 0.0;
  const double n = static_cast<double>(s.num_variables);
  const std::size_t kmax = std::max<std::size_t>(s.histogram.size(), 1);
  for (std::size_t k = 0; k < kmax; ++k) {
    const double q = poisson_pmf(lambda, k);
    covered += q;
    tv += std::abs(static_cast<double>(s.count(k)) / n - q);
  }
  tv += std::max(0.0, 1.0 - covered);  // Poisson tail beyond the largest degree
  return 0.5 * tv;
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson goodness-of-fit of the degree histogram against Poisson(lambda).
/// Adjacent bins are pooled until each expected count reaches `min_expected`;
/// the last bin absorbs the upper tail. No parameters are estimated.
inline ChiSquareResult poisson_chi_square(const DegreeStats& s, double lambda,
                                          double min_expected = 5.0) {
  const double n = static_cast<double>(s.num_variables);
  std::vector<double> obs, expct;
  double o_acc = 0.0, e_acc = 0.0, cdf = 0.0;
  const std::size_t kmax = s.histogram.size() + 64;
  for (std::size_t k = 0; k < kmax; ++k) {
    const double q = poisson_pmf(lambda, k);
    cdf += q;
    o_acc += static_cast<double>(s.count(k));
    e_acc += n * q;
    if (e_acc >= min_expected && n * (1.0 - cdf) >= min_expected) {
      obs.push_back(o_acc);
      expct.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  // Remaining mass and tail go into the final bin.
  e_acc += n * std::max(0.0, 1.0 - cdf);
  if (!obs.empty() && e_acc < min_expected) {
    obs.back() += o_acc;
    expct.back() += e_acc;
  } else {
    obs.push_back(o_acc);
    expct.push_back(e_acc);
  }
  ChiSquareResult r;
  for (std::size_t b = 0; b < obs.size(); ++b)
    r.statistic += (obs[b] - expct[b]) * (obs[b] - expct[b]) / expct[b];
  r.dof = static_cast<int>(obs.size()) - 1;
  r.p_value = r.dof > 0 ? boost::math::gamma_q(0.5 * r.dof, 0.5 * r.statistic) : 1.0;
  return r;
}

/// CSV with columns k,count,poisson_pmf for k = 0..max observed degree.
inline Table degree_table(const DegreeStats& s, double lambda) {
  Table t({"k", "count", "poisson_pmf"});
  for (std::size_t k = 0; k < s.histogram.size(); ++k)
    t.add_row() << static_cast<std::uint64_t>(k) << s.histogram[k] << poisson_pmf(lambda, k);
  return t;
}

// ---------------------------------------------------------------------------
// Dropconnect probability <-> mean degree.
//
// With p populations of N = w^2 weights (layers of equal width w), there are
// w^{p+1} = N^{(p+1)/2} possible paths and each survives with probability
// p_dc^p, so lambda = M/N = p_dc^p N^{(p-1)/2}. For p = 3 this is N p_dc^3.

inline double lambda_from_dropconnect(double p_dc, std::uint64_t n, std::uint64_t depth = 3) {
  if (!(p_dc >= 0.0 && p_dc <= 1.0))
    throw ParameterError("lambda_from_dropconnect: p_dc must lie in [0,1]");
  if (n < 1 || depth < 2) throw ParameterError("lambda_from_dropconnect: need N >= 1, p >= 2");
  const double d = static_cast<double>(depth);
  return std::pow(p_dc, d) * std::pow(static_cast<double>(n), 0.5 * (d - 1.0));
}

inline double dropconnect_from_lambda(double lambda, std::uint64_t n, std::uint64_t depth = 3) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ParameterError("dropconnect_from_lambda: lambda must be finite and >= 0");
  if (n < 1 || depth < 2) throw ParameterError("dropconnect_from_lambda: need N >= 1, p >= 2");
  const double d = static_cast<double>(depth);
  const double p_dc = std::pow(lambda / std::pow(static_cast<double>(n), 0.5 * (d - 1.0)), 1.0 / d);
  if (p_dc > 1.0)
    throw ParameterError("dropconnect_from_lambda: lambda too large, probability exceeds 1");
  return p_dc;
}

// ---------------------------------------------------------------------------
// Text dump: "RAP v1 N p M seed", then "a J i_1 ... i_p" per interaction.

inline std::string dump_graph(const FactorGraph& g, std::uint64_t seed) {
  std::ostringstream out;
  out << "RAP v1 " << g.population_size() << ' ' << g.depth() << ' ' << g.num_interactions()
      << ' ' << seed << '\n';
  for (std::size_t a = 0; a < g.num_interactions(); ++a) {
    out << a << ' ' << g.coupling(a);
    for (std::uint32_t v : g.members(a)) out << ' ' << v;
    out << '\n';
  }
  return out.str();
}

struct LoadedGraph {
  FactorGraph graph;
  std::uint64_t seed = 0;
};

inline LoadedGraph load_graph(const std::string& text) {
  std::istringstream in(text);
  std::string magic, version;
  std::uint64_t n = 0, p = 0, m = 0, seed = 0;
  if (!(in >> magic >> version >> n >> p >> m >> seed) || magic != "RAP")
    throw ParseError(ParseError::Kind::kBadMagic, "load_graph: missing 'RAP v1' header");
  if (version != "v1")
    throw ParseError(ParseError::Kind::kSyntax, "load_graph: unsupported version " + version);
  if (n < 1 || p < 2) throw ParseError(ParseError::Kind::kSyntax, "load_graph: bad N or p");
  std::vector<std::uint32_t> members(m * p);
  std::vector<std::int8_t> couplings(m);
  for (std::uint64_t a = 0; a < m; ++a) {
    std::uint64_t idx = 0;
    int j = 0;
    if (!(in >> idx >> j))
      throw ParseError(ParseError::Kind::kTruncated, "load_graph: missing interaction line");
    if (idx != a) throw ParseError(ParseError::Kind::kSyntax, "load_graph: interactions out of order");
    couplings[a] = static_cast<std::int8_t>(j);
    for (std::uint64_t k = 0; k < p; ++k)
      if (!(in >> members[a * p + k]))
        throw ParseError(ParseError::Kind::kTruncated, "load_graph: short interaction line");
  }
  try {
    return {FactorGraph(n, p, std::move(members), std::move(couplings)), seed};
  } catch (const ParameterError& e) {
    throw ParseError(ParseError::Kind::kSyntax, std::string("load_graph: ") + e.what());
  }
}

/// True when the factor graph (variables + interactions as nodes) is a forest.
inline bool is_acyclic(const FactorGraph& g) {
  const std::size_t nv = g.num_variables();
  std::vector<std::size_t> parent(nv + g.num_interactions());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const std::size_t u = find(g.edge_variable(e));
    const std::size_t v = find(nv + g.edge_interaction(e));
    if (u == v) return false;
    parent[u] = v;
  }
  return true;
}

}  // namespace rapnet
