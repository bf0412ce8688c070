// Flat key=value experiment configuration for the network experiments.
//
// One "key = value" per line; '#' starts a comment; blank lines are ignored.
// Keys (required ones marked *):
//   arch*            layer widths, e.g. 784-100-200-10
//   epochs*          number of training epochs
//   lr_schedule*     rate:epochs spans, e.g. 0.1:600,0.005:200,0.001:200
//   seed*            root seed
//   train_size*      B1, training examples drawn from the data
//   test_size*       B2, test examples (disjoint from the training ones
//                    when drawn from the same file pair)
//   minibatch        default 10
//   images, labels   IDX pair the examples are drawn from
//   test_images, test_labels
//                    optional separate IDX pair for the test set
//   stratified       0/1; draw equal counts per class for both subsets
//   synthetic        0/1; use generated prototype data instead of files
//   synthetic_noise  default 0.5
//   synthetic_classes default 10
//   dropconnect      keep probability per weight layer, e.g. 1,1,0.5
//   feedback_layers  1-based weight layers trained with random feedback, e.g. 3
//   feedback_bound   u, default 0.5
//   inference        plain | mean_field | gaussian (default mean_field)
//   inference_samples default 100
#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rapnet/common.hpp"
#include "rapnet/data_io.hpp"
#include "rapnet/neural_net.hpp"
#include "rapnet/table.hpp"

namespace rapnet {

struct ExperimentConfig {
  NetArchitecture arch;
  std::size_t epochs = 0;
  std::vector<RateSpan> lr_schedule;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t minibatch = 10;
  std::string images, labels, test_images, test_labels;
  bool stratified = false;
  bool synthetic = false;
  double synthetic_noise = 0.5;
  int synthetic_classes = 10;
  std::vector<double> dropconnect;         // one keep probability per weight layer
  std::vector<std::size_t> feedback_layers;  // 1-based
  double feedback_bound = 0.5;
  InferenceMode inference = InferenceMode::kMeanField;
  std::size_t inference_samples = 100;

  bool operator==(const ExperimentConfig&) const = default;

  TrainConfig train_config() const { return {epochs, lr_schedule, minibatch, seed}; }

  DropconnectConfig dropconnect_config() const {
    DropconnectConfig dc = DropconnectConfig::none(arch.num_weight_layers());
    for (std::size_t l = 0; l < dropconnect.size(); ++l)
      if (dropconnect[l] < 1.0) dc.layers[l] = {true, dropconnect[l]};
    return dc;
  }

  FeedbackConfig feedback_config() const {
    std::vector<bool> flags(arch.num_weight_layers(), false);
    for (std::size_t l : feedback_layers) flags[l - 1] = true;
    return make_feedback(arch, flags, feedback_bound, derive_seed(seed, "feedback-matrices"));
  }

  InferenceSpec inference_spec() const {
    return {inference, dropconnect_config(), inference_samples, derive_seed(seed, "inference")};
  }
};

inline std::string to_string(InferenceMode m) {
  switch (m) {
    case InferenceMode::kPlain: return "plain";
    case InferenceMode::kGaussian: return "gaussian";
    case InferenceMode::kMeanField:
    default: return "mean_field";
  }
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw ConfigError("config: '" + key + "' is out of range");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(x))
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config: '" + key + "' expects 0 or 1, got '" + v + "'");
}

}  // namespace detail

using ConfigMap = std::map<std::string, std::string>;

/// Raw key=value pairs. Later occurrences of a key replace earlier ones.
inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    out[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return out;
}

/// "0.1:600,0.005:200" -> {{600, 0.1}, {200, 0.005}}
inline std::vector<RateSpan> parse_schedule(const std::string& text) {
  std::vector<RateSpan> out;
  for (const auto& item : detail::split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("config: lr_schedule entries are rate:epochs, got '" + item + "'");
    RateSpan s;
    s.rate = detail::parse_real("lr_schedule", detail::trim(item.substr(0, colon)));
    s.epochs = detail::parse_uint("lr_schedule", detail::trim(item.substr(colon + 1)));
    out.push_back(s);
  }
  return out;
}

inline std::string format_schedule(const std::vector<RateSpan>& s) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k)
    out += (k ? "," : "") + format_real(s[k].rate) + ":" + std::to_string(s[k].epochs);
  return out;
}

inline ExperimentConfig config_from_map(const ConfigMap& raw) {
  static const char* const kKnown[] = {
      "arch", "epochs", "lr_schedule", "seed", "train_size", "test_size", "minibatch",
      "images", "labels", "test_images", "test_labels", "stratified", "synthetic", "synthetic_noise",
      "synthetic_classes", "dropconnect", "feedback_layers", "feedback_bound", "inference",
      "inference_samples"};
  for (const auto& [key, value] : raw) {
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    if (!known) throw ConfigError("config: unknown key '" + key + "'");
  }
  auto required = [&](const char* key) -> const std::string& {
    const auto it = raw.find(key);
    if (it == raw.end()) throw ConfigError(std::string("config: missing required key '") + key + "'");
    return it->second;
  };
  auto optional = [&](const char* key) -> const std::string* {
    const auto it = raw.find(key);
    return it == raw.end() ? nullptr : &it->second;
  };

  ExperimentConfig c;
  try {
    c.arch = NetArchitecture::parse(required("arch"));
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config: arch: ") + e.what());
  }
  const std::size_t layers = c.arch.num_weight_layers();
  c.epochs = detail::parse_uint("epochs", required("epochs"));
  c.lr_schedule = parse_schedule(required("lr_schedule"));
  c.seed = detail::parse_uint("seed", required("seed"));
  c.train_size = detail::parse_uint("train_size", required("train_size"));
  c.test_size = detail::parse_uint("test_size", required("test_size"));
  if (auto v = optional("minibatch")) c.minibatch = detail::parse_uint("minibatch", *v);
  if (auto v = optional("images")) c.images = *v;
  if (auto v = optional("labels")) c.labels = *v;
  if (auto v = optional("test_images")) c.test_images = *v;
  if (auto v = optional("test_labels")) c.test_labels = *v;
  if (auto v = optional("stratified")) c.stratified = detail::parse_bool("stratified", *v);
  if (auto v = optional("synthetic")) c.synthetic = detail::parse_bool("synthetic", *v);
  if (auto v = optional("synthetic_noise")) c.synthetic_noise = detail::parse_real("synthetic_noise", *v);
  if (auto v = optional("synthetic_classes"))
    c.synthetic_classes = static_cast<int>(detail::parse_uint("synthetic_classes", *v));
  c.dropconnect.assign(layers, 1.0);
  if (auto v = optional("dropconnect")) {
    const auto items = detail::split(*v, ',');
    if (items.size() != layers)
      throw ConfigError("config: dropconnect needs " + std::to_string(layers) + " entries");
    for (std::size_t l = 0; l < layers; ++l) c.dropconnect[l] = detail::parse_real("dropconnect", items[l]);
  }
  if (auto v = optional("feedback_layers"))
    for (const auto& item : detail::split(*v, ','))
      c.feedback_layers.push_back(detail::parse_uint("feedback_layers", item));
  if (auto v = optional("feedback_bound")) c.feedback_bound = detail::parse_real("feedback_bound", *v);
  if (auto v = optional("inference")) {
    if (*v == "plain") c.inference = InferenceMode::kPlain;
    else if (*v == "mean_field") c.inference = InferenceMode::kMeanField;
    else if (*v == "gaussian") c.inference = InferenceMode::kGaussian;
    else throw ConfigError("config: inference must be plain, mean_field or gaussian");
  }
  if (auto v = optional("inference_samples"))
    c.inference_samples = detail::parse_uint("inference_samples", *v);

  // Range checks.
  if (c.epochs == 0) throw ConfigError("config: epochs must be >= 1");
  std::size_t covered = 0;
  for (const auto& s : c.lr_schedule) {
    if (s.rate < 0.0) throw ConfigError("config: learning rates must be >= 0");
    covered += s.epochs;
  }
  if (covered != c.epochs)
    throw ConfigError("config: lr_schedule covers " + std::to_string(covered) + " epochs, epochs = " +
                      std::to_string(c.epochs));
  if (c.train_size == 0) throw ConfigError("config: train_size must be >= 1");
  if (c.minibatch == 0) throw ConfigError("config: minibatch must be >= 1");
  for (double p : c.dropconnect)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("config: dropconnect probabilities must lie in [0,1]");
  for (std::size_t l : c.feedback_layers)
    if (l < 1 || l > layers)
      throw ConfigError("config: feedback_layers entries must lie in 1.." + std::to_string(layers));
  if (!(c.feedback_bound > 0.0)) throw ConfigError("config: feedback_bound must be > 0");
  if (c.synthetic_noise < 0.0) throw ConfigError("config: synthetic_noise must be >= 0");
  if (c.synthetic_classes < 1) throw ConfigError("config: synthetic_classes must be >= 1");
  if (c.inference_samples == 0) throw ConfigError("config: inference_samples must be >= 1");
  if (!c.synthetic && (c.images.empty() || c.labels.empty()))
    throw ConfigError("config: set images and labels, or synthetic = 1");
  if (c.test_images.empty() != c.test_labels.empty())
    throw ConfigError("config: test_images and test_labels go together");
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  return config_from_map(parse_config_text(text));
}

inline ExperimentConfig load_config(const std::string& path) {
  try {
    return parse_config(read_text_file(path));
  } catch (const ParseError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ConfigMap config_to_map(const ExperimentConfig& c) {
  ConfigMap m;
  m["arch"] = c.arch.to_string();
  m["epochs"] = std::to_string(c.epochs);
  m["lr_schedule"] = format_schedule(c.lr_schedule);
  m["seed"] = std::to_string(c.seed);
  m["train_size"] = std::to_string(c.train_size);
  m["test_size"] = std::to_string(c.test_size);
  m["minibatch"] = std::to_string(c.minibatch);
  if (!c.images.empty()) m["images"] = c.images;
  if (!c.labels.empty()) m["labels"] = c.labels;
  if (!c.test_images.empty()) m["test_images"] = c.test_images;
  if (!c.test_labels.empty()) m["test_labels"] = c.test_labels;
  m["stratified"] = c.stratified ? "1" : "0";
  m["synthetic"] = c.synthetic ? "1" : "0";
  m["synthetic_noise"] = format_real(c.synthetic_noise);
  m["synthetic_classes"] = std::to_string(c.synthetic_classes);
  std::string dc, fb;
  for (std::size_t l = 0; l < c.dropconnect.size(); ++l) dc += (l ? "," : "") + format_real(c.dropconnect[l]);
  for (std::size_t k = 0; k < c.feedback_layers.size(); ++k)
    fb += (k ? "," : "") + std::to_string(c.feedback_layers[k]);
  m["dropconnect"] = dc;
  m["feedback_layers"] = fb;
  m["feedback_bound"] = format_real(c.feedback_bound);
  m["inference"] = to_string(c.inference);
  m["inference_samples"] = std::to_string(c.inference_samples);
  return m;
}

inline std::string config_to_text(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_to_map(c)) out += k + " = " + v + "\n";
  return out;
}

inline void write_config(const ExperimentConfig& c, const std::string& path) {
  write_text_file(path, config_to_text(c));
}

/// Train and test sets for a configuration. A single IDX pair (or the
/// synthetic generator) is split into disjoint subsets; a separate test pair
/// is sampled independently.
inline std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& c) {
  const std::uint64_t split_seed = derive_seed(c.seed, "data-split");
  auto split = [&](const Dataset& all) {
    return c.stratified ? stratified_disjoint_subsets(all, c.train_size, c.test_size, split_seed)
                        : disjoint_subsets(all, c.train_size, c.test_size, split_seed);
  };
  if (c.synthetic) {
    const Dataset all = synthetic_dataset(c.synthetic_classes, c.arch.input_width(),
                                          c.train_size + c.test_size, c.synthetic_noise,
                                          derive_seed(c.seed, "synthetic"));
    return split(all);
  }
  const Dataset all = load_idx_pair(c.images, c.labels);
  if (c.test_images.empty()) return split(all);
  const Dataset test_all = load_idx_pair(c.test_images, c.test_labels);
  return {subset(all, c.train_size, split_seed),
          subset(test_all, c.test_size, derive_seed(split_seed, "test"))};
}

}  // namespace rapnet
