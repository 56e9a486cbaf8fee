#pragma once

// Experiment configuration files: JSON documents layered over a named preset.
// Every key a config may set appears in the preset defaults, so anything else
// is rejected with its key path.

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dualcap/dualcap.hpp"

namespace dualcap::cli {

using json = nlohmann::ordered_json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Preset { awgn_avg, awgn_amp, oi, nlpn, divergence_demo };

inline std::string preset_name(Preset p) {
  switch (p) {
    case Preset::awgn_avg: return "awgn_avg";
    case Preset::awgn_amp: return "awgn_amp";
    case Preset::oi: return "oi";
    case Preset::nlpn: return "nlpn";
    case Preset::divergence_demo: return "divergence_demo";
  }
  return "?";
}

/// "awgn_avg" or "awgn_avg-desk".
inline std::pair<Preset, bool> parse_preset(const std::string& name) {
  std::string base = name;
  bool desk = false;
  constexpr std::string_view suffix = "-desk";
  if (base.size() > suffix.size() && base.ends_with(suffix)) {
    base.resize(base.size() - suffix.size());
    desk = true;
  }
  for (Preset p : {Preset::awgn_avg, Preset::awgn_amp, Preset::oi, Preset::nlpn, Preset::divergence_demo})
    if (preset_name(p) == base) return {p, desk};
  throw ConfigError("preset: unknown preset '" + name + "'");
}

/// The name of the swept channel parameter for a preset.
inline std::string sweep_variable(Preset p) {
  switch (p) {
    case Preset::nlpn: return "launch_power_dbm";
    case Preset::divergence_demo: return "";
    default: return "snr_db";
  }
}

namespace detail {

inline json grid_json(double lo, double hi, int points) { return {{"lo", lo}, {"hi", hi}, {"points", points}}; }

inline json channel_defaults(Preset p) {
  switch (p) {
    case Preset::awgn_avg: return {{"snr_db", 0.0}, {"power", 1.0}};
    case Preset::awgn_amp: return {{"snr_db", 0.0}, {"amplitude", 1.0}};
    // snr_db is A / sigma in dB; the average cost is alpha A.
    case Preset::oi: return {{"snr_db", 6.0}, {"amplitude", 2.5}, {"alpha", 0.4}};
    case Preset::nlpn:
      return {{"launch_power_dbm", -10.0},
              {"noise_dbm", -21.3},
              {"steps", 50},
              {"nonlinearity", 1.27},
              {"distance_km", 5000.0}};
    case Preset::divergence_demo:
      return {{"noise_variance", 1.0}, {"reference_mean", 1.0}, {"reference_variance", 2.0}};
  }
  return json::object();
}

inline json grid_defaults(Preset p) {
  switch (p) {
    case Preset::awgn_avg: return grid_json(-2.5, 2.5, 15);
    case Preset::awgn_amp: return grid_json(-1.0, 1.0, 15);
    case Preset::oi: return grid_json(0.0, 2.5, 15);
    case Preset::nlpn: return grid_json(-1.75, 1.75, 9);
    case Preset::divergence_demo: return grid_json(-1.0, 1.0, 11);
  }
  return json::object();
}

}  // namespace detail

/// Full default document for a preset, paper scale unless `desk`.
inline json preset_defaults(Preset p, bool desk) {
  const bool nlpn = p == Preset::nlpn;
  const int width = nlpn ? 150 : 100;
  json j;
  j["preset"] = preset_name(p) + (desk ? "-desk" : "");
  j["seed"] = 0;
  j["channel"] = detail::channel_defaults(p);
  j["training"] = {{"iterations", nlpn ? 2500 : 500},
                   {"batch_size", 20000},
                   {"eval_batch_size", 0},
                   {"learning_rate", 1e-3},
                   {"pretrain_iterations", 200},
                   {"precision", "f64"}};
  j["networks"] = {{"latent_dim", 50},
                   {"ndt_hidden", {width, width}},
                   {"statnet_hidden", {width, width}},
                   {"ndt_mode", "A"}};
  j["grid"] = {{"train", detail::grid_defaults(p)}, {"eval", nullptr}};
  j["search"] = {{"gamma", nullptr}, {"bracket", nullptr}, {"tol", 0.02}, {"max_evals", 40}};
  j["sweep"] = {{"values", json::array()}, {"reference_csv", nullptr}};
  j["ba"] = {{"grid_points", 15}, {"bins", 512}, {"tol", 1e-9}};
  if (p == Preset::divergence_demo) j["held_out"] = {-1.2, 1.2};
  if (desk) {
    j["training"]["batch_size"] = nlpn ? 1000 : 2000;
    j["training"]["iterations"] = nlpn ? 250 : 500;
    j["training"]["eval_batch_size"] = 20000;
    j["training"]["precision"] = "f32";
  }
  if (p == Preset::divergence_demo) j["training"]["pretrain_iterations"] = 0;
  return j;
}

namespace detail {

inline void check_keys(const json& user, const json& defaults, const std::string& path) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError(key + ": unknown key");
    const json& d = defaults.at(it.key());
    if (d.is_object()) {
      if (!it.value().is_object()) throw ConfigError(key + ": expected a section");
      check_keys(it.value(), d, key);
    }
  }
}

inline void merge_into(json& target, const json& overrides) {
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (it.value().is_object() && target.contains(it.key()) && target[it.key()].is_object())
      merge_into(target[it.key()], it.value());
    else
      target[it.key()] = it.value();
  }
}

inline const json& at_path(const json& doc, const std::string& path) {
  const json* node = &doc;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    node = &node->at(key);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return *node;
}

template <typename T>
T get(const json& doc, const std::string& path) {
  const json& v = at_path(doc, path);
  if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
  }
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline std::vector<double> get_numbers(const json& doc, const std::string& path) {
  const json& v = at_path(doc, path);
  if (!v.is_array()) throw ConfigError(path + ": expected a list of numbers");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) throw ConfigError(path + ": expected a list of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path + ": " + what);
}

}  // namespace detail

struct SearchOptions {
  std::optional<double> gamma;  // fixed multiplier; no search
  std::optional<std::pair<double, double>> bracket;
  double tol = 0.02;
  int max_evals = 40;
};

struct BaOptions {
  int grid_points = 15;
  int bins = 512;
  double tol = 1e-9;
};

struct DivergenceDemo {
  double reference_mean = 1.0;
  double reference_variance = 2.0;
  std::vector<double> held_out;
};

/// A resolved configuration: the merged JSON document and everything built from it.
struct RunConfig {
  json document;
  Preset preset = Preset::awgn_avg;
  bool desk = false;
  ExperimentConfig experiment;
  SearchOptions search;
  BaOptions ba;
  DivergenceDemo divergence;
  std::vector<double> sweep_values;
  std::optional<std::string> reference_csv;

  [[nodiscard]] std::uint64_t seed() const { return experiment.seed; }
};

namespace detail {

inline Matrix grid_from(const json& doc, const std::string& path, int dim) {
  const double lo = get<double>(doc, path + ".lo");
  const double hi = get<double>(doc, path + ".hi");
  const int n = get<int>(doc, path + ".points");
  check(n >= 1, path + ".points", "must be at least 1");
  check(lo <= hi, path, "lo must not exceed hi");
  return dim == 2 ? uniform_grid_2d(lo, hi, n) : uniform_grid(lo, hi, n);
}

inline std::vector<int> hidden_from(const json& doc, const std::string& path) {
  const json& v = at_path(doc, path);
  check(v.is_array() && !v.empty(), path, "expected a nonempty list of layer widths");
  std::vector<int> out;
  for (const json& e : v) {
    check(e.is_number_integer() && e.get<int>() >= 1, path, "layer widths must be positive integers");
    out.push_back(e.get<int>());
  }
  return out;
}

inline ChannelSpec channel_from(Preset p, const json& doc) {
  switch (p) {
    case Preset::awgn_avg: {
      const double power = get<double>(doc, "channel.power");
      check(power > 0.0, "channel.power", "must be positive");
      return ChannelSpec::awgn_average_power(power / db_to_linear(get<double>(doc, "channel.snr_db")), power);
    }
    case Preset::awgn_amp: {
      const double a = get<double>(doc, "channel.amplitude");
      check(a > 0.0, "channel.amplitude", "must be positive");
      return ChannelSpec::awgn_amplitude(a * a / db_to_linear(get<double>(doc, "channel.snr_db")), a);
    }
    case Preset::oi: {
      const double a = get<double>(doc, "channel.amplitude");
      const double alpha = get<double>(doc, "channel.alpha");
      check(a > 0.0, "channel.amplitude", "must be positive");
      check(alpha > 0.0 && alpha <= 1.0, "channel.alpha", "must lie in (0, 1]");
      const double sigma = a / std::pow(10.0, get<double>(doc, "channel.snr_db") / 20.0);
      return ChannelSpec::optical_intensity(sigma * sigma, a, alpha * a);
    }
    case Preset::nlpn: {
      NlpnParams np;
      np.steps = get<int>(doc, "channel.steps");
      check(np.steps >= 1, "channel.steps", "must be at least 1");
      np.nonlinearity = get<double>(doc, "channel.nonlinearity");
      np.distance_km = get<double>(doc, "channel.distance_km");
      check(np.distance_km > 0.0, "channel.distance_km", "must be positive");
      np.launch_power_w = dbm_to_watts(get<double>(doc, "channel.launch_power_dbm"));
      return ChannelSpec::nlpn_channel(dbm_to_watts(get<double>(doc, "channel.noise_dbm")), np);
    }
    case Preset::divergence_demo: {
      const double v = get<double>(doc, "channel.noise_variance");
      check(v > 0.0, "channel.noise_variance", "must be positive");
      return ChannelSpec::awgn_average_power(v, 1.0);
    }
  }
  throw ConfigError("preset: unsupported");
}

}  // namespace detail

/// Builds and validates everything from a merged document.
inline RunConfig resolve(json doc) {
  using detail::check;
  using detail::get;
  RunConfig rc;
  const auto [preset, desk] = parse_preset(get<std::string>(doc, "preset"));
  rc.preset = preset;
  rc.desk = desk;

  ExperimentConfig& c = rc.experiment;
  {
    const json& s = detail::at_path(doc, "seed");
    check(s.is_number_unsigned() || (s.is_number_integer() && s.get<std::int64_t>() >= 0), "seed",
          "must be a nonnegative integer");
    c.seed = s.get<std::uint64_t>();
  }
  try {
    c.channel = detail::channel_from(preset, doc);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("channel: ") + e.what());
  }

  c.iterations = get<std::int64_t>(doc, "training.iterations");
  check(c.iterations >= 0, "training.iterations", "must be nonnegative");
  c.batch_size = get<Eigen::Index>(doc, "training.batch_size");
  check(c.batch_size >= 2, "training.batch_size", "must be at least 2");
  c.eval_batch_size = get<Eigen::Index>(doc, "training.eval_batch_size");
  check(c.eval_batch_size == 0 || c.eval_batch_size >= 2, "training.eval_batch_size", "must be 0 or at least 2");
  c.learning_rate = get<double>(doc, "training.learning_rate");
  check(c.learning_rate > 0.0, "training.learning_rate", "must be positive");
  c.pretrain_iterations = get<std::int64_t>(doc, "training.pretrain_iterations");
  check(c.pretrain_iterations >= 0, "training.pretrain_iterations", "must be nonnegative");
  const std::string precision = get<std::string>(doc, "training.precision");
  check(precision == "f64" || precision == "f32", "training.precision", "must be \"f64\" or \"f32\"");
  c.precision = precision == "f32" ? Precision::f32 : Precision::f64;

  c.latent_dim = get<int>(doc, "networks.latent_dim");
  check(c.latent_dim >= 1, "networks.latent_dim", "must be positive");
  c.ndt_hidden = detail::hidden_from(doc, "networks.ndt_hidden");
  c.statnet_hidden = detail::hidden_from(doc, "networks.statnet_hidden");
  const std::string mode = get<std::string>(doc, "networks.ndt_mode");
  check(mode == "A" || mode == "B", "networks.ndt_mode", "must be \"A\" (through the channel) or \"B\" (direct)");
  c.ndt_mode = mode == "A" ? NdtMode::through_channel : NdtMode::direct;

  const int dim = c.channel.dim();
  c.train_grid = detail::grid_from(doc, "grid.train", dim);
  c.eval_grid = doc["grid"]["eval"].is_null() ? c.train_grid : detail::grid_from(doc, "grid.eval", dim);
  for (const char* path : {"grid.train", "grid.eval"}) {
    const Matrix& g = std::string(path) == "grid.train" ? c.train_grid : c.eval_grid;
    try {
      check_admissible(c.channel, g);
    } catch (const std::exception& e) {
      throw ConfigError(std::string(path) + ": " + e.what());
    }
  }

  const json& gamma = doc["search"]["gamma"];
  if (!gamma.is_null()) {
    check(gamma.is_number() && gamma.get<double>() >= 0.0, "search.gamma", "must be a nonnegative number or null");
    check(c.channel.has_cost() || gamma.get<double>() == 0.0, "search.gamma",
          "must be 0 for a channel without a cost constraint");
    rc.search.gamma = gamma.get<double>();
    c.gamma = *rc.search.gamma;
  }
  const json& bracket = doc["search"]["bracket"];
  if (!bracket.is_null()) {
    const auto b = detail::get_numbers(doc, "search.bracket");
    check(b.size() == 2 && b[0] >= 0.0 && b[0] < b[1], "search.bracket", "expected [lo, hi] with 0 <= lo < hi");
    rc.search.bracket = std::pair{b[0], b[1]};
  }
  rc.search.tol = get<double>(doc, "search.tol");
  check(rc.search.tol > 0.0, "search.tol", "must be positive");
  rc.search.max_evals = get<int>(doc, "search.max_evals");
  check(rc.search.max_evals >= 3, "search.max_evals", "must be at least 3");

  rc.sweep_values = detail::get_numbers(doc, "sweep.values");
  for (std::size_t i = 1; i < rc.sweep_values.size(); ++i)
    check(rc.sweep_values[i] > rc.sweep_values[i - 1], "sweep.values", "must be strictly increasing");
  const json& ref = doc["sweep"]["reference_csv"];
  if (!ref.is_null()) rc.reference_csv = get<std::string>(doc, "sweep.reference_csv");

  rc.ba.grid_points = get<int>(doc, "ba.grid_points");
  check(rc.ba.grid_points >= 2, "ba.grid_points", "must be at least 2");
  rc.ba.bins = get<int>(doc, "ba.bins");
  check(rc.ba.bins >= 8, "ba.bins", "must be at least 8");
  rc.ba.tol = get<double>(doc, "ba.tol");
  check(rc.ba.tol > 0.0, "ba.tol", "must be positive");

  if (preset == Preset::divergence_demo) {
    rc.divergence.reference_mean = get<double>(doc, "channel.reference_mean");
    rc.divergence.reference_variance = get<double>(doc, "channel.reference_variance");
    check(rc.divergence.reference_variance > 0.0, "channel.reference_variance", "must be positive");
    rc.divergence.held_out = detail::get_numbers(doc, "held_out");
  }

  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  rc.document = std::move(doc);
  return rc;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  bool desk_scale = false;
};

/// Layers `user` over the defaults of the preset it names.
inline RunConfig load_config(const json& user, const Overrides& ov = {}) {
  if (!user.is_object()) throw ConfigError("config: expected a JSON object at the top level");
  if (!user.contains("preset")) throw ConfigError("preset: missing");
  if (!user["preset"].is_string()) throw ConfigError("preset: expected a string");
  auto [preset, desk] = parse_preset(user["preset"].get<std::string>());
  desk = desk || ov.desk_scale;
  json doc = preset_defaults(preset, desk);
  detail::check_keys(user, doc, "");
  json overrides = user;
  overrides.erase("preset");
  detail::merge_into(doc, overrides);
  if (ov.seed) doc["seed"] = *ov.seed;
  return resolve(std::move(doc));
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline RunConfig load_config_file(const std::string& path, const Overrides& ov = {}) {
  return load_config(read_json_file(path), ov);
}

/// The config for one sweep point: the swept channel key set to `value`.
inline RunConfig at_sweep_point(const RunConfig& rc, double value) {
  const std::string var = sweep_variable(rc.preset);
  if (var.empty()) throw ConfigError("sweep: preset " + preset_name(rc.preset) + " has no sweep variable");
  json doc = rc.document;
  doc["channel"][var] = value;
  return resolve(std::move(doc));
}

}  // namespace dualcap::cli
