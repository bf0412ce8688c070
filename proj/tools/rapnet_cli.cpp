// rapnet_cli: seeded batch runs for the RAP model and the network experiments.
//
//   rapnet_cli rap-sweep  --n 2000 --lambda-grid 1:10:0.25 --samples 10 --seed 7 --out DIR
//   rapnet_cli rap-oracle --seed 1 --out DIR
//   rapnet_cli train      --config exp.cfg --out DIR
//   rapnet_cli dilute     --config exp.cfg --checkpoint DIR/model.ckpt --out DIR2
//   rapnet_cli path-stats --checkpoint DIR/model.ckpt --out DIR3
//   rapnet_cli infer      --config exp.cfg --checkpoint DIR/model.ckpt --out DIR4
//
// Every run writes manifest.json into --out, also when the run fails after
// argument parsing. Exit codes: 0 success, 2 usage/configuration, 3 data,
// 4 numerical failure, 1 anything else.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rapnet/exact_oracle.hpp"
#include "rapnet/experiment_config.hpp"
#include "rapnet/neural_net.hpp"
#include "rapnet/rap_graph.hpp"
#include "rapnet/rap_solver.hpp"

namespace fs = std::filesystem;
using namespace rapnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

/// "lo:hi:step" -> lo, lo+step, ... up to hi (inclusive within step/2).
/// A single number is a one-point grid.
std::vector<double> parse_grid(const std::string& text) {
  const auto parts = rapnet::detail::split(text, ':');
  auto num = [&](const std::string& s) {
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0' || !std::isfinite(x))
      throw ParameterError("grid: cannot parse '" + text + "'");
    return x;
  };
  if (parts.size() == 1) return {num(parts[0])};
  if (parts.size() != 3) throw ParameterError("grid: expected lo:hi:step, got '" + text + "'");
  const double lo = num(parts[0]), hi = num(parts[1]), step = num(parts[2]);
  if (!(step > 0.0) || hi < lo) throw ParameterError("grid: need step > 0 and hi >= lo");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5)) + 1;
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = lo + static_cast<double>(k) * step;
  return out;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Every option of a subcommand with its effective value.
ConfigMap option_snapshot(const CLI::App& sub) {
  ConfigMap m;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t k = 0; k < res.size(); ++k) value += (k ? "," : "") + res[k];
    } else {
      value = opt->get_default_str();
    }
    m[name] = value;
  }
  return m;
}

struct Run {
  std::string subcommand;
  std::string out_dir;
  std::uint64_t seed = 0;
  ConfigMap config;  // resolved settings, filled in as the run proceeds
};

void write_manifest(const Run& run, int exit_code, const std::string& error, double seconds,
                    const std::string& started) {
  nlohmann::ordered_json j;
  j["subcommand"] = run.subcommand;
  j["version"] = RAPNET_VERSION;
  j["seed"] = run.seed;
  j["out_dir"] = run.out_dir;
  j["config"] = run.config;
  j["status"] = exit_code == 0 ? "ok" : "failed";
  j["exit_code"] = exit_code;
  if (!error.empty()) j["error"] = error;
  j["started_utc"] = started;
  j["wall_clock_seconds"] = seconds;
  write_text_file((fs::path(run.out_dir) / "manifest.json").string(), j.dump(2) + "\n");
}

/// Runs `body`, maps exceptions to exit codes and always writes the manifest.
int execute(Run& run, const std::function<void(Run&)>& body) {
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::string error;
  try {
    std::error_code ec;
    fs::create_directories(run.out_dir, ec);
    if (ec) throw ParseError(ParseError::Kind::kIo, "cannot create output directory " + run.out_dir);
    body(run);
  } catch (const ParameterError& e) {
    code = kExitUsage;
    error = e.what();
  } catch (const ConfigError& e) {
    code = kExitUsage;
    error = e.what();
  } catch (const ParseError& e) {
    code = kExitData;
    error = e.what();
  } catch (const NumericalError& e) {
    code = kExitNumerical;
    error = e.what();
  } catch (const std::exception& e) {
    code = kExitOther;
    error = e.what();
  }
  if (!error.empty()) std::cerr << "rapnet_cli " << run.subcommand << ": " << error << "\n";
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_manifest(run, code, error, seconds, started);
  } catch (const std::exception& e) {
    std::cerr << "rapnet_cli: could not write manifest: " << e.what() << "\n";
    if (code == kExitOk) code = kExitData;
  }
  return code;
}

std::string out_path(const Run& run, const std::string& name) {
  return (fs::path(run.out_dir) / name).string();
}

// ---------------------------------------------------------------------------
// rap-sweep

struct SweepFlags {
  std::uint64_t n = 2000;
  std::uint64_t depth = 3;
  std::string grid;
  std::size_t samples = 10;
  double beta = 1.0;
  std::uint64_t seed = 0;
  std::string init = "zero";
  double amplitude = 0.1;
  double tol = 1e-10;
  std::size_t max_iters = 10000;
  double damping = 0.0;
  std::string critical = "analytic";
  std::optional<double> dump_lambda;
  unsigned threads = 1;
};

SolverConfig solver_from(const SweepFlags& f) {
  SolverConfig s;
  s.beta = f.beta;
  s.damping = f.damping;
  s.tol = f.tol;
  s.max_iters = f.max_iters;
  s.amplitude = f.amplitude;
  if (f.init == "zero") s.init_mode = InitMode::kZero;
  else if (f.init == "random") s.init_mode = InitMode::kRandom;
  else throw ParameterError("--init must be zero or random");
  s.validate();
  return s;
}

void rap_sweep(const SweepFlags& f, Run& run) {
  SweepSpec spec;
  spec.population_size = f.n;
  spec.depth = f.depth;
  spec.lambda_grid = parse_grid(f.grid);
  spec.num_samples = f.samples;
  spec.solver = solver_from(f);
  spec.root_seed = f.seed;
  spec.threads = f.threads;
  RapParams{f.n, f.depth, 0, 0}.validate();

  CriticalSearch cs;
  cs.population_size = f.n;
  cs.depth = f.depth;
  cs.num_samples = f.samples;
  cs.solver = spec.solver;
  cs.root_seed = f.seed;
  cs.threads = f.threads;
  if (f.critical == "bp") {
    cs.method = CriticalMethod::kBp;
    cs.bisect_tol = 1e-4;
  } else if (f.critical != "analytic") {
    throw ParameterError("--critical must be analytic or bp");
  }

  const SweepResult r = sweep_lambda(spec);
  const CriticalPoint cp = find_lambda_c(cs);
  write_results(instance_table(r), out_path(run, "instances.csv"));
  write_results(aggregate_table(r), out_path(run, "aggregate.csv"));
  write_results(frozen_table(frozen_energy_curve(spec.lambda_grid, cp, f.beta, f.depth)),
                out_path(run, "frozen.csv"));
  write_text_file(out_path(run, "critical_point.json"), critical_point_json(cp));

  if (f.dump_lambda) {
    const std::uint64_t seed = instance_seed(f.seed, 0);
    const RapInstance inst = build_rap({f.n, f.depth, num_paths_for(*f.dump_lambda, f.n), seed});
    write_text_file(out_path(run, "graph.txt"), dump_graph(inst.graph, seed));
    write_results(degree_table(degree_histogram(inst.graph), *f.dump_lambda),
                  out_path(run, "degrees.csv"));
  }
}

// ---------------------------------------------------------------------------
// rap-oracle

struct OracleFlags {
  std::size_t trees = 50;
  std::size_t loopy = 20;
  std::size_t max_vars = 20;
  double beta = 1.0;
  std::uint64_t seed = 0;
};

void rap_oracle(const OracleFlags& f, Run& run) {
  if (f.max_vars > kMaxEnumerationVariables)
    throw ParameterError("--max-vars " + std::to_string(f.max_vars) + " refused: exhaustive enumeration is limited to " +
                         std::to_string(kMaxEnumerationVariables) + " variables");
  Table t({"instance", "acyclic", "depth", "variables", "quantity", "bp", "exact", "abs_diff"});
  const auto suite = oracle_suite(f.seed, f.trees, f.loopy, f.max_vars);
  for (std::size_t k = 0; k < suite.size(); ++k) {
    const auto& c = suite[k];
    const auto report = discrepancy_table(compare_bp_exact(c.instance.graph, oracle_solver(c, f.beta)));
    for (const auto& row : report.rows) {
      auto out = t.add_row();
      out << static_cast<std::uint64_t>(k) << c.acyclic << c.depth
          << static_cast<std::uint64_t>(c.instance.graph.num_variables());
      for (const auto& cell : row) out << cell;
    }
  }
  write_results(t, out_path(run, "oracle.csv"));
}

// ---------------------------------------------------------------------------
// Network subcommands

/// Flags mirroring the config keys; a set flag overrides the config file.
struct NetFlags {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::string checkpoint;
  unsigned threads = 1;
};

void add_net_options(CLI::App* sub, NetFlags& f, bool with_checkpoint) {
  sub->add_option("--config", f.config_path, "key=value experiment configuration file");
  static const std::pair<const char*, const char*> kKeys[] = {
      {"arch", "layer widths, e.g. 784-100-200-10"},
      {"epochs", "training epochs"},
      {"lr-schedule", "rate:epochs spans, e.g. 0.1:600,0.005:200,0.001:200"},
      {"seed", "root seed"},
      {"train-size", "training examples (B1)"},
      {"test-size", "test examples (B2)"},
      {"minibatch", "minibatch size"},
      {"images", "IDX image file"},
      {"labels", "IDX label file"},
      {"test-images", "separate IDX test images"},
      {"test-labels", "separate IDX test labels"},
      {"synthetic-noise", "noise std of generated data"},
      {"synthetic-classes", "classes of generated data"},
      {"dropconnect", "keep probability per weight layer, e.g. 1,0.5,1"},
      {"feedback-layers", "1-based weight layers trained with random feedback"},
      {"feedback-bound", "feedback bound u"},
      {"inference", "plain | mean_field | gaussian"},
      {"inference-samples", "Gaussian inference samples"},
  };
  for (const auto& [flag, help] : kKeys) {
    std::string key = flag;
    std::replace(key.begin(), key.end(), '-', '_');
    sub->add_option_function<std::string>(
        std::string("--") + flag, [&f, key](const std::string& v) { f.overrides[key] = v; }, help);
  }
  sub->add_flag_function(
      "--stratified", [&f](std::int64_t) { f.overrides["stratified"] = "1"; },
      "equal class counts in the train and test subsets");
  sub->add_flag_function(
      "--synthetic", [&f](std::int64_t) { f.overrides["synthetic"] = "1"; },
      "use generated prototype data instead of IDX files");
  if (with_checkpoint)
    sub->add_option("--checkpoint", f.checkpoint, "model checkpoint written by train")->required();
  sub->add_option("--threads", f.threads, "worker threads for evaluation")->capture_default_str();
}

/// Config file, then flag overrides. Commands that only evaluate a stored
/// model take the architecture from the checkpoint and need no schedule.
ExperimentConfig resolve_config(const NetFlags& f, Run& run, const Mlp* model) {
  ConfigMap raw;
  if (!f.config_path.empty()) {
    try {
      raw = parse_config_text(read_text_file(f.config_path));
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& [k, v] : f.overrides) raw[k] = v;
  if (model) {
    const std::string arch = model->architecture().to_string();
    if (raw.count("arch") && NetArchitecture::parse(raw["arch"]) != model->architecture())
      throw ConfigError("config arch " + raw["arch"] + " does not match checkpoint " + arch);
    raw["arch"] = arch;
    if (!raw.count("epochs")) raw["epochs"] = "1";
    if (!raw.count("lr_schedule")) raw["lr_schedule"] = "0:" + raw["epochs"];
  }
  const ExperimentConfig cfg = config_from_map(raw);
  run.seed = cfg.seed;
  for (const auto& [k, v] : config_to_map(cfg)) run.config[k] = v;
  return cfg;
}

Mlp read_checkpoint(const std::string& path) { return load_checkpoint(read_text_file(path)); }

void cmd_train(const NetFlags& f, Run& run) {
  const ExperimentConfig cfg = resolve_config(f, run, nullptr);
  const auto [train_set, test_set] = load_experiment_data(cfg);
  const TrainResult r = train(init_mlp(cfg.arch, derive_seed(cfg.seed, "weights")), train_set, &test_set,
                              cfg.train_config(), cfg.dropconnect_config(), cfg.feedback_config());
  write_text_file(out_path(run, "model.ckpt"), save_checkpoint(r.net));
  write_results(curve_table(r.curve), out_path(run, "curve.csv"));
  write_config(cfg, out_path(run, "config.txt"));
}

struct DiluteFlags {
  std::string grid = "0:1:0.05";
  std::size_t layer = 1;
  std::string base;
  std::size_t replicates = 20;
};

void cmd_dilute(const NetFlags& f, const DiluteFlags& d, Run& run) {
  const Mlp net = read_checkpoint(f.checkpoint);
  const ExperimentConfig cfg = resolve_config(f, run, &net);
  const std::size_t layers = net.num_weight_layers();
  if (d.layer < 1 || d.layer > layers)
    throw ParameterError("--layer must lie in 1.." + std::to_string(layers));
  std::vector<double> base(layers, 0.0);
  if (!d.base.empty()) {
    const auto items = rapnet::detail::split(d.base, ',');
    if (items.size() != layers) throw ParameterError("--base needs one probability per weight layer");
    for (std::size_t l = 0; l < layers; ++l) base[l] = rapnet::detail::parse_real("base", items[l]);
  }
  std::vector<std::vector<double>> grid;
  for (double p : parse_grid(d.grid)) {
    auto point = base;
    point[d.layer - 1] = p;
    grid.push_back(point);
  }
  const Dataset test_set = load_experiment_data(cfg).second;
  const auto rows = dilution_sweep(net, grid, d.replicates, test_set,
                                   derive_seed(cfg.seed, "dilution-sweep"), f.threads);
  write_results(dilution_table(rows, layers), out_path(run, "dilution.csv"));
}

struct PathFlags {
  std::string checkpoint;
  std::size_t paths = 100000;
  std::size_t bins = 100;
  std::uint64_t seed = 0;
};

void cmd_path_stats(const PathFlags& f, Run& run) {
  run.seed = f.seed;
  const Mlp net = read_checkpoint(f.checkpoint);
  const PathStats st = path_product_histogram(net, f.paths, f.bins, f.seed);
  write_results(path_table(st), out_path(run, "paths.csv"));
  nlohmann::ordered_json j;
  j["paths"] = f.paths;
  j["sign_balance"] = st.sign_balance;
  j["min"] = st.min;
  j["max"] = st.max;
  j["fraction_central_10pct"] = st.fraction_near_zero(0.05);
  write_text_file(out_path(run, "path_summary.json"), j.dump(2) + "\n");
}

void cmd_infer(NetFlags f, Run& run) {
  const Mlp net = read_checkpoint(f.checkpoint);
  if (!f.overrides.count("inference")) {
    ConfigMap raw;
    if (!f.config_path.empty()) raw = parse_config_text(read_text_file(f.config_path));
    if (!raw.count("inference")) f.overrides["inference"] = "gaussian";
  }
  const ExperimentConfig cfg = resolve_config(f, run, &net);
  const Dataset test_set = load_experiment_data(cfg).second;
  const InferenceSpec spec = cfg.inference_spec();
  const auto pred = predict(net, test_set, spec, f.threads);
  Table t({"example", "label", "prediction"});
  std::size_t wrong = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    t.add_row() << static_cast<std::uint64_t>(k) << test_set.labels[k] << pred[k];
    wrong += pred[k] != test_set.labels[k] ? 1 : 0;
  }
  write_results(t, out_path(run, "predictions.csv"));
  nlohmann::ordered_json j;
  j["examples"] = pred.size();
  j["test_error"] = pred.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(pred.size());
  j["inference"] = to_string(cfg.inference);
  j["samples"] = cfg.inference_samples;
  write_text_file(out_path(run, "infer_summary.json"), j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random active path model and network redundancy experiments"};
  app.set_version_flag("--version", RAPNET_VERSION);
  app.require_subcommand(1);
  std::string out_dir;

  SweepFlags sweep;
  auto* rs = app.add_subcommand("rap-sweep", "BP thermodynamics over a lambda grid");
  rs->add_option("--n", sweep.n, "weights per population N")->capture_default_str();
  rs->add_option("--depth", sweep.depth, "populations p")->capture_default_str();
  rs->add_option("--lambda-grid", sweep.grid, "lo:hi:step (inclusive within step/2)")->required();
  rs->add_option("--samples", sweep.samples, "instances per lambda")->capture_default_str();
  rs->add_option("--beta", sweep.beta, "inverse temperature")->capture_default_str();
  rs->add_option("--seed", sweep.seed, "root seed")->capture_default_str();
  rs->add_option("--init", sweep.init, "zero | random")->capture_default_str();
  rs->add_option("--amplitude", sweep.amplitude, "random init amplitude")->capture_default_str();
  rs->add_option("--tol", sweep.tol, "BP convergence tolerance")->capture_default_str();
  rs->add_option("--max-iters", sweep.max_iters, "BP sweep limit")->capture_default_str();
  rs->add_option("--damping", sweep.damping, "BP damping")->capture_default_str();
  rs->add_option("--critical", sweep.critical, "analytic | bp")->capture_default_str();
  rs->add_option("--dump-lambda", sweep.dump_lambda, "also write graph.txt and degrees.csv for sample 0 at this lambda");
  rs->add_option("--threads", sweep.threads, "worker threads")->capture_default_str();
  rs->add_option("--out", out_dir, "output directory")->required();

  OracleFlags oracle;
  auto* ro = app.add_subcommand("rap-oracle", "BP against exhaustive enumeration on small instances");
  ro->add_option("--trees", oracle.trees, "acyclic instances")->capture_default_str();
  ro->add_option("--loopy", oracle.loopy, "loopy instances")->capture_default_str();
  ro->add_option("--max-vars", oracle.max_vars, "variable limit per instance (at most 24)")->capture_default_str();
  ro->add_option("--beta", oracle.beta, "inverse temperature")->capture_default_str();
  ro->add_option("--seed", oracle.seed, "root seed")->capture_default_str();
  ro->add_option("--out", out_dir, "output directory")->required();

  NetFlags train_flags;
  auto* tr = app.add_subcommand("train", "train a network; writes model.ckpt and curve.csv");
  add_net_options(tr, train_flags, false);
  tr->add_option("--out", out_dir, "output directory")->required();

  NetFlags dilute_flags;
  DiluteFlags dilute;
  auto* di = app.add_subcommand("dilute", "test error under random connection removal");
  add_net_options(di, dilute_flags, true);
  di->add_option("--grid", dilute.grid, "removal probabilities lo:hi:step")->capture_default_str();
  di->add_option("--layer", dilute.layer, "1-based weight layer swept")->capture_default_str();
  di->add_option("--base", dilute.base, "removal probabilities of all layers (comma list); default 0");
  di->add_option("--replicates", dilute.replicates, "dilution masks per grid point")->capture_default_str();
  di->add_option("--out", out_dir, "output directory")->required();

  PathFlags paths;
  auto* ps = app.add_subcommand("path-stats", "weight products along random input-output paths");
  ps->add_option("--checkpoint", paths.checkpoint, "model checkpoint")->required();
  ps->add_option("--paths", paths.paths, "sampled paths")->capture_default_str();
  ps->add_option("--bins", paths.bins, "histogram bins")->capture_default_str();
  ps->add_option("--seed", paths.seed, "root seed")->capture_default_str();
  ps->add_option("--out", out_dir, "output directory")->required();

  NetFlags infer_flags;
  auto* in = app.add_subcommand("infer", "predict a test set (Gaussian sampling by default)");
  add_net_options(in, infer_flags, true);
  in->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.subcommand = sub->get_name();
  run.out_dir = out_dir;
  run.config = option_snapshot(*sub);

  if (sub == rs) {
    run.seed = sweep.seed;
    return execute(run, [&](Run& r) { rap_sweep(sweep, r); });
  }
  if (sub == ro) {
    run.seed = oracle.seed;
    return execute(run, [&](Run& r) { rap_oracle(oracle, r); });
  }
  if (sub == tr) return execute(run, [&](Run& r) { cmd_train(train_flags, r); });
  if (sub == di) return execute(run, [&](Run& r) { cmd_dilute(dilute_flags, dilute, r); });
  if (sub == ps) return execute(run, [&](Run& r) { cmd_path_stats(paths, r); });
  return execute(run, [&](Run& r) { cmd_infer(infer_flags, r); });
}
