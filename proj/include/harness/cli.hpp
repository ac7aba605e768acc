#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "harness/bounds.hpp"
#include "harness/config.hpp"
#include "harness/error.hpp"
#include "harness/oracle.hpp"
#include "harness/stats.hpp"

namespace harness {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int runtime = 1;
inline constexpr int config = 2;
inline constexpr int assertion = 3;
}  // namespace exit_code

namespace detail {

struct FlagBinding {
  const char* flag;
  const char* key;
  const char* help;
};

inline const std::vector<FlagBinding>& flag_bindings() {
  static const std::vector<FlagBinding> b{
      {"--d", "experiment.dim", "lattice dimension"},
      {"--kernel", "experiment.kernel", "'nn' or JSON list of [offset, weight]"},
      {"--noise", "experiment.noise", "noise law, e.g. gaussian(1)"},
      {"--kind", "experiment.kinds", "comma list of free, clip, freeze, drift"},
      {"--geometry", "experiment.geometry", "cone or torus"},
      {"--torus-side", "experiment.torus_side", "torus side length"},
      {"--n", "experiment.n_max", "largest time"},
      {"--times", "experiment.times", "comma list of measurement times, or dyadic"},
      {"--replicas", "experiment.replicas", "number of replicas"},
      {"--seed", "experiment.seed", "base seed"},
      {"--start-height", "experiment.start_height", "initial flat height"},
      {"--observable", "experiment.observable", "origin or spatial_average"},
      {"--K", "tails.K", "comma list of threshold multipliers"},
      {"--tail-scale", "tails.scale", "auto, sqrt_s_log_n, log_power, ell_L, absolute"},
      {"--tail-parameter", "tails.parameter", "exponent or gamma for the tail scale"},
      {"--transform", "fit.transform", "loglog, log_n, sqrt_log_n, log_power, ell_L"},
      {"--fit-parameter", "fit.parameter", "exponent or gamma for the fit transform"},
      {"--n-min", "fit.n_min", "smallest time used in fits"},
      {"--curve", "bounds.curve", "h, nu, envelope, poly, ell_L"},
      {"--t-max", "bounds.t_max", "ODE horizon"},
      {"--alpha", "bounds.alpha", "tail index for envelopes"},
      {"--gamma", "bounds.gamma", "gamma for ell_L"},
      {"--out", "output.dir", "output directory (default: stdout)"},
      {"--format", "output.format", "csv or json where both apply"},
      {"--workers", "output.workers", "worker threads"},
  };
  return b;
}

class Emitter {
 public:
  Emitter(std::string dir, std::ostream& out) : dir_(std::move(dir)), out_(out) {}

  void emit(const std::string& name, const std::string& content) {
    if (dir_.empty()) {
      out_ << content;
      return;
    }
    std::filesystem::create_directories(dir_);
    const auto path = std::filesystem::path(dir_) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
    f << content;
    out_ << path.string() << '\n';
  }

 private:
  std::string dir_;
  std::ostream& out_;
};

inline nlohmann::json fit_json(const FitReport& f) {
  return {{"transform", std::string(to_string(f.transform))},
          {"parameter", f.parameter},
          {"slope", f.slope},
          {"intercept", f.intercept},
          {"slope_se", f.slope_se},
          {"r_squared", f.r_squared},
          {"points", f.points},
          {"n_min", f.n_min}};
}

inline nlohmann::json tally_json(const DominationTally& t) {
  return {{"wall_over_free", {{"checks", t.checks_wall_over_free}, {"violations", t.violations_wall_over_free}}},
          {"freeze_over_wall", {{"checks", t.checks_freeze_over_wall}, {"violations", t.violations_freeze_over_wall}}},
          {"drift_over_wall", {{"checks", t.checks_drift_over_wall}, {"violations", t.violations_drift_over_wall}}}};
}

/// Fits mu_n per kind from the series; skipped when too few points.
inline nlohmann::json fits_json(const RunConfig& c, const std::vector<std::pair<ProcessKind, std::vector<std::pair<int, double>>>>& series) {
  nlohmann::json fits = nlohmann::json::object();
  const auto transform = parse_transform(c.fit_transform);
  for (const auto& [kind, pts] : series) {
    std::vector<double> ns, mus;
    for (const auto& [n, mu] : pts)
      if (n >= c.fit_n_min) {
        ns.push_back(n);
        mus.push_back(mu);
      }
    try {
      auto f = fit_exponent(ns, mus, transform, c.fit_parameter);
      f.n_min = c.fit_n_min;
      fits[std::string(to_string(kind))] = fit_json(f);
    } catch (const Error& e) {
      fits[std::string(to_string(kind))] = {{"error", e.what()}};
    }
  }
  return fits;
}

inline std::vector<std::pair<ProcessKind, std::vector<std::pair<int, double>>>> series_points(const SeriesEstimate& est) {
  std::vector<std::pair<ProcessKind, std::vector<std::pair<int, double>>>> out;
  for (const auto& ks : est.series) {
    out.emplace_back(ks.kind, std::vector<std::pair<int, double>>{});
    for (const auto& p : ks.points) out.back().second.emplace_back(p.n, p.mean());
  }
  return out;
}

/// Reads kind, n, mean columns of a series CSV (first tail row per point).
inline std::vector<std::pair<ProcessKind, std::vector<std::pair<int, double>>>> read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("input", "cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("config_hash,kind,n,mean", 0) != 0) throw ConfigError("input", "not a series CSV");
  std::vector<std::pair<ProcessKind, std::vector<std::pair<int, double>>>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    if (fields.size() < 4) throw ConfigError("input", "short row '" + line + "'");
    const auto kind = parse_kind(fields[1]);
    const int n = parse_number<int>("input", fields[2]);
    const double mu = parse_number<double>("input", fields[3]);
    if (out.empty() || out.back().first != kind) out.emplace_back(kind, std::vector<std::pair<int, double>>{});
    auto& pts = out.back().second;
    if (pts.empty() || pts.back().first != n) pts.emplace_back(n, mu);
  }
  return out;
}

inline std::string bounds_csv(const RunConfig& c, const std::string& hash) {
  std::ostringstream o;
  o << "n,value,kind,provenance,config_hash\n";
  auto write = [&](const BoundCurve& curve) {
    for (const auto& p : curve.points)
      o << format_double(p.x) << ',' << format_double(p.value) << ',' << to_string(curve.kind) << ','
        << curve.provenance << ',' << hash << '\n';
  };
  std::vector<double> grid;
  for (int n : c.times.empty() ? dyadic_times(c.n_max) : c.times) grid.push_back(n);
  if (c.curve == "h") {
    write(h_iteration(mean_excess_of(config_noise(c)), c.n_max));
  } else if (c.curve == "nu") {
    if (!(c.t_max >= 0.0)) throw ConfigError("bounds.t_max", "must be >= 0");
    write(nu_ode(mean_excess_of(config_noise(c)), c.t_max));
  } else if (c.curve == "envelope") {
    const auto [lo, hi] = growth_envelope(c.dim, c.alpha, grid);
    write(lo);
    write(hi);
  } else if (c.curve == "poly") {
    write(polynomial_tail_envelope(c.alpha, grid));
  } else if (c.curve == "ell_L") {
    if (!(c.gamma > 1.0)) throw ConfigError("bounds.gamma", "must exceed 1");
    o.str("");
    o << "n,ell,L,config_hash\n";
    for (double n : grid) {
      if (n < 3) continue;
      const auto r = ell_L(c.gamma, n);
      o << format_double(n) << ',' << format_double(r.ell) << ',' << format_double(r.L) << ',' << hash << '\n';
    }
  } else {
    throw ConfigError("bounds.curve", "unknown curve '" + c.curve + "'");
  }
  return o.str();
}

inline std::string tails_csv(const SeriesEstimate& est, const std::string& hash) {
  std::ostringstream o;
  o << "config_hash,kind,n,K,threshold,count,replicas,p_hat,ci_low,ci_high\n";
  for (const auto& r : tail_estimate(est))
    o << hash << ',' << to_string(r.kind) << ',' << r.n << ',' << format_double(r.K) << ',' << format_double(r.threshold)
      << ',' << r.count << ',' << r.replicas << ',' << format_double(r.p_hat) << ',' << format_double(r.ci_low) << ','
      << format_double(r.ci_high) << '\n';
  return o.str();
}

}  // namespace detail

/// Runs one subcommand.  Returns 0 on success, 1 on runtime failure, 2 on a
/// configuration error and 3 when a hard assertion (pathwise domination or
/// the certified lower bound) fails.
inline int dispatch(const std::vector<std::string>& args, const std::map<std::string, std::string>& env,
                    std::ostream& out, std::ostream& err) {
  CLI::App app{"Monte Carlo and exact harness for discrete random surfaces above a wall", "harness"};
  app.require_subcommand(1);
  std::string config_path, input_path;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, std::string> flag_of_key;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI configuration file");
    for (const auto& b : detail::flag_bindings()) {
      sub->add_option_function<std::string>(
          b.flag, [&flag_values, key = std::string(b.key)](const std::string& v) { flag_values[key] = v; }, b.help);
      flag_of_key[b.key] = b.flag;
    }
  };
  for (const char* name : {"validate", "sweep", "exact", "bounds", "tails", "fit"}) {
    auto* sub = app.add_subcommand(name);
    add_common(sub);
    if (std::string(name) == "fit") sub->add_option("--input", input_path, "series CSV to fit instead of running");
  }

  std::vector<const char*> argv{"harness"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    err << "ConfigError: " << e.what() << '\n';
    return exit_code::config;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (const auto it = env.find("HARNESS_SEED"); it != env.end() && !it->second.empty()) {
      try {
        set_config_value(c, "experiment.seed", it->second);
      } catch (const ConfigError& e) {
        throw ConfigError("HARNESS_SEED", e.what());
      }
    }
    for (const auto& [key, value] : flag_values) {
      try {
        set_config_value(c, key, value);
      } catch (const ConfigError& e) {
        throw ConfigError(flag_of_key[key] + " (" + key + ")", e.what());
      }
    }
    const std::string hash = config_hash(c);
    detail::Emitter emitter(c.output_dir, out);

    if (command == "validate") {
      build_plan(c);
      if (c.curve != "h" && c.curve != "nu" && c.curve != "envelope" && c.curve != "poly" && c.curve != "ell_L")
        throw ConfigError("bounds.curve", "unknown curve '" + c.curve + "'");
      parse_transform(c.fit_transform);
      out << "valid config_hash=" << hash << '\n';
      return exit_code::ok;
    }

    if (command == "exact") {
      const auto kernel = config_kernel(c);
      const auto noise = config_noise(c);
      if (c.kinds.size() != 1) throw ConfigError("experiment.kinds", "exact takes exactly one kind");
      auto j = enumerate_exact(kernel, noise, c.kinds.front(), c.n_max, c.start_height).to_json();
      j["config_hash"] = hash;
      j["kind"] = std::string(to_string(c.kinds.front()));
      j["noise"] = noise.to_string();
      emitter.emit("exact.json", j.dump(2) + "\n");
      return exit_code::ok;
    }

    if (command == "bounds") {
      emitter.emit("bounds.csv", detail::bounds_csv(c, hash));
      return exit_code::ok;
    }

    if (command == "fit" && !input_path.empty()) {
      nlohmann::json j{{"config_hash", hash}, {"input", input_path}};
      j["fits"] = detail::fits_json(c, detail::read_series_csv(input_path));
      emitter.emit("fit.json", j.dump(2) + "\n");
      return exit_code::ok;
    }

    // sweep, tails and fit all run the ensemble.
    const ExperimentPlan plan = build_plan(c);
    if (command == "tails" && plan.tail_K.empty()) throw ConfigError("tails.K", "tails needs at least one K");
    const SeriesEstimate est = run_mc(plan);

    if (command == "tails") {
      emitter.emit("tails.csv", detail::tails_csv(est, hash));
      return exit_code::ok;
    }
    if (command == "fit") {
      nlohmann::json j{{"config_hash", hash}};
      j["fits"] = detail::fits_json(c, detail::series_points(est));
      emitter.emit("fit.json", j.dump(2) + "\n");
      return exit_code::ok;
    }

    // sweep: series CSV plus a JSON summary carrying the hard assertions.
    bool hard_failure = est.tally.violations() > 0;
    nlohmann::json summary{{"config_hash", hash}, {"replicas", est.replicas}, {"dominations", detail::tally_json(est.tally)}};
    const bool zero_start = plan.start_height == 0.0;
    std::optional<BoundCurve> m;
    nlohmann::json certified = nlohmann::json::object(), trends = nlohmann::json::object();
    for (const auto& ks : est.series) {
      const std::string name(to_string(ks.kind));
      if (ks.kind != ProcessKind::free && zero_start) {
        if (!m) m = h_iteration(mean_excess_of(plan.noise), plan.n_max);
        nlohmann::json v = nlohmann::json::array();
        for (const auto& x : certified_bound_check(ks, *m))
          v.push_back({{"n", x.n}, {"mean", x.mean}, {"sem", x.sem}, {"bound", x.bound}});
        hard_failure = hard_failure || !v.empty();
        certified[name] = v;
      }
      if (ks.kind != ProcessKind::free) {
        const auto t = trend_checks(ks);
        trends[name] = {{"nondecreasing", t.nondecreasing},
                        {"decrease_flags", t.decrease_flags},
                        {"sublinear", t.sublinear},
                        {"ratio_flags", t.ratio_flags}};
      }
    }
    summary["certified_violations"] = certified;
    summary["trends"] = trends;
    summary["fits"] = detail::fits_json(c, detail::series_points(est));
    summary["hard_assertions_pass"] = !hard_failure;

    std::ostringstream csv;
    write_series_csv(csv, hash, est);
    if (c.format == "json" && c.output_dir.empty()) {
      emitter.emit("summary.json", summary.dump(2) + "\n");
    } else {
      emitter.emit("series.csv", csv.str());
      if (!c.output_dir.empty() || c.format == "both") emitter.emit("summary.json", summary.dump(2) + "\n");
    }
    if (hard_failure) {
      err << "hard assertion failed: see summary (dominations or certified bound)\n";
      return exit_code::assertion;
    }
    return exit_code::ok;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return exit_code::config;
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return exit_code::runtime;
  }
}

}  // namespace harness
