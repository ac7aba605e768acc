#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "harness/error.hpp"
#include "harness/kernel.hpp"
#include "harness/noise.hpp"
#include "harness/process.hpp"
#include "harness/stats.hpp"

namespace harness {

/// Everything a run needs, as written in the INI file.  Field values keep
/// their textual form where the text is the canonical identity (kernel,
/// noise), so that serialization round-trips exactly.
struct RunConfig {
  // [experiment]
  int dim = 1;
  std::string kernel = "nn";
  std::string noise = "gaussian(1)";
  std::vector<ProcessKind> kinds{ProcessKind::clip};
  std::string geometry = "cone";
  int torus_side = 0;
  int n_max = 64;
  std::vector<int> times;  // empty: dyadic
  std::int64_t replicas = 100;
  std::uint64_t seed = 0;
  double start_height = 0.0;
  std::string observable = "origin";
  // [tails]
  std::vector<double> tail_K;
  std::string tail_scale = "auto";
  double tail_parameter = 0.0;
  // [fit]
  std::string fit_transform = "loglog";
  double fit_parameter = 0.0;
  int fit_n_min = 64;
  // [bounds]
  std::string curve = "h";
  double t_max = 64.0;
  double alpha = 2.0;
  double gamma = 2.0;
  // [output]
  std::string output_dir;
  std::string format = "csv";
  int workers = 1;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    T v{};
    if constexpr (std::is_same_v<T, double>)
      v = std::stod(text, &used);
    else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      v = std::stoull(text, &used);
    } else
      v = static_cast<T>(std::stoll(text, &used));
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "cannot parse '" + text + "' as a number");
  }
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, double>)
      s += format_double(values[i]);
    else if constexpr (std::is_same_v<T, ProcessKind>)
      s += to_string(values[i]);
    else
      s += std::to_string(values[i]);
  }
  return s;
}

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"experiment",
       {"dim", "kernel", "noise", "kinds", "geometry", "torus_side", "n_max", "times", "replicas", "seed",
        "start_height", "observable"}},
      {"tails", {"K", "scale", "parameter"}},
      {"fit", {"transform", "parameter", "n_min"}},
      {"bounds", {"curve", "t_max", "alpha", "gamma"}},
      {"output", {"dir", "format", "workers"}},
  };
  return keys;
}

}  // namespace detail

/// Assigns one `section.key` from text.  Used for both files and flags.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_number;
  if (key == "experiment.dim") c.dim = parse_number<int>(key, value);
  else if (key == "experiment.kernel") c.kernel = value;
  else if (key == "experiment.noise") c.noise = value;
  else if (key == "experiment.kinds") {
    c.kinds.clear();
    try {
      for (const auto& k : detail::split_list(value)) c.kinds.push_back(parse_kind(k));
    } catch (const Error& e) {
      throw ConfigError(key, e.what());
    }
  } else if (key == "experiment.geometry") c.geometry = value;
  else if (key == "experiment.torus_side") c.torus_side = parse_number<int>(key, value);
  else if (key == "experiment.n_max") c.n_max = parse_number<int>(key, value);
  else if (key == "experiment.times") {
    c.times.clear();
    if (value != "dyadic")
      for (const auto& t : detail::split_list(value)) c.times.push_back(parse_number<int>(key, t));
  } else if (key == "experiment.replicas") c.replicas = parse_number<std::int64_t>(key, value);
  else if (key == "experiment.seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "experiment.start_height") c.start_height = parse_number<double>(key, value);
  else if (key == "experiment.observable") c.observable = value;
  else if (key == "tails.K") {
    c.tail_K.clear();
    for (const auto& k : detail::split_list(value)) c.tail_K.push_back(parse_number<double>(key, k));
  } else if (key == "tails.scale") c.tail_scale = value;
  else if (key == "tails.parameter") c.tail_parameter = parse_number<double>(key, value);
  else if (key == "fit.transform") c.fit_transform = value;
  else if (key == "fit.parameter") c.fit_parameter = parse_number<double>(key, value);
  else if (key == "fit.n_min") c.fit_n_min = parse_number<int>(key, value);
  else if (key == "bounds.curve") c.curve = value;
  else if (key == "bounds.t_max") c.t_max = parse_number<double>(key, value);
  else if (key == "bounds.alpha") c.alpha = parse_number<double>(key, value);
  else if (key == "bounds.gamma") c.gamma = parse_number<double>(key, value);
  else if (key == "output.dir") c.output_dir = value;
  else if (key == "output.format") c.format = value;
  else if (key == "output.workers") c.workers = parse_number<int>(key, value);
  else throw ConfigError(key, "unknown key");
}

inline RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()), e.message());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    const auto known = detail::known_keys().find(section);
    if (known == detail::known_keys().end()) throw ConfigError(section, "unknown section");
    if (body.empty() && !body.data().empty()) throw ConfigError(section, "key outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!known->second.count(key)) throw ConfigError(full, "unknown key");
      set_config_value(c, full, value.data());
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// Canonical INI text; parse_config(to_ini(c)) == c.
inline std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  o << "[experiment]\n"
    << "dim=" << c.dim << "\nkernel=" << c.kernel << "\nnoise=" << c.noise << "\nkinds=" << detail::join(c.kinds)
    << "\ngeometry=" << c.geometry << "\ntorus_side=" << c.torus_side << "\nn_max=" << c.n_max
    << "\ntimes=" << (c.times.empty() ? std::string("dyadic") : detail::join(c.times)) << "\nreplicas=" << c.replicas
    << "\nseed=" << c.seed << "\nstart_height=" << format_double(c.start_height) << "\nobservable=" << c.observable
    << "\n\n[tails]\nK=" << detail::join(c.tail_K) << "\nscale=" << c.tail_scale
    << "\nparameter=" << format_double(c.tail_parameter) << "\n\n[fit]\ntransform=" << c.fit_transform
    << "\nparameter=" << format_double(c.fit_parameter) << "\nn_min=" << c.fit_n_min << "\n\n[bounds]\ncurve=" << c.curve
    << "\nt_max=" << format_double(c.t_max) << "\nalpha=" << format_double(c.alpha)
    << "\ngamma=" << format_double(c.gamma) << "\n\n[output]\ndir=" << c.output_dir << "\nformat=" << c.format
    << "\nworkers=" << c.workers << "\n";
  return o.str();
}

/// FNV-1a over the canonical text, as 16 hex digits.  The output directory
/// and worker count do not change results, so they are left out.
inline std::string config_hash(RunConfig c) {
  c.output_dir.clear();
  c.workers = 1;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_ini(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Kernel config_kernel(const RunConfig& c) {
  try {
    return kernel_from_spec(c.dim, c.kernel);
  } catch (const Error& e) {
    throw ConfigError("experiment.kernel", e.what());
  }
}

inline NoiseModel config_noise(const RunConfig& c) {
  try {
    return parse_noise(c.noise);
  } catch (const Error& e) {
    throw ConfigError("experiment.noise", e.what());
  }
}

/// Builds and validates the experiment; every failure names its key.
inline ExperimentPlan build_plan(const RunConfig& c) {
  ExperimentPlan p;
  if (c.dim < 1 || c.dim > 4) throw ConfigError("experiment.dim", "must be in 1..4");
  p.kernel = config_kernel(c);
  p.noise = config_noise(c);
  if (c.kinds.empty()) throw ConfigError("experiment.kinds", "at least one kind is required");
  p.kinds = c.kinds;
  if (c.n_max < 1) throw ConfigError("experiment.n_max", "must be >= 1");
  p.n_max = c.n_max;
  try {
    if (c.geometry == "cone")
      p.geometry = Geometry::cone(c.dim, p.kernel.range(), c.n_max);
    else if (c.geometry == "torus")
      p.geometry = Geometry::torus(c.dim, p.kernel.range(), c.torus_side);
    else
      throw ConfigError("experiment.geometry", "must be cone or torus");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(c.geometry == "torus" ? "experiment.torus_side" : "experiment.n_max", e.what());
  }
  p.times = c.times;
  if (c.replicas < 2) throw ConfigError("experiment.replicas", "must be >= 2");
  p.replicas = c.replicas;
  p.seed = c.seed;
  if (!(c.start_height >= 0.0)) throw ConfigError("experiment.start_height", "must be >= 0");
  p.start_height = c.start_height;
  if (c.observable == "origin")
    p.observable = Observable::origin;
  else if (c.observable == "spatial_average")
    p.observable = Observable::spatial_average;
  else
    throw ConfigError("experiment.observable", "must be origin or spatial_average");
  p.tail_K = c.tail_K;
  if (c.tail_scale == "auto") p.tail_scale = TailScale::automatic;
  else if (c.tail_scale == "sqrt_s_log_n") p.tail_scale = TailScale::sqrt_s_log_n;
  else if (c.tail_scale == "log_power") p.tail_scale = TailScale::log_power;
  else if (c.tail_scale == "ell_L") p.tail_scale = TailScale::ell_L;
  else if (c.tail_scale == "absolute") p.tail_scale = TailScale::absolute;
  else throw ConfigError("tails.scale", "unknown scale '" + c.tail_scale + "'");
  p.tail_parameter = c.tail_parameter;
  if (c.workers < 1) throw ConfigError("output.workers", "must be >= 1");
  p.workers = c.workers;
  try {
    p.validate();
  } catch (const Error& e) {
    std::string key = "experiment";
    switch (e.code()) {
      case ErrorCode::InvalidGamma: key = "tails.parameter"; break;
      default: {
        const std::string what = e.what();
        if (what.find("time") != std::string::npos) key = "experiment.times";
        else if (what.find("tail K") != std::string::npos) key = "tails.K";
        else if (what.find("horizon") != std::string::npos) key = "experiment.n_max";
        else if (what.find("spatial") != std::string::npos) key = "experiment.observable";
      }
    }
    throw ConfigError(key, e.what());
  }
  return p;
}

}  // namespace harness
