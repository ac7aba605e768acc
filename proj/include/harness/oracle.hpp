#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "harness/error.hpp"
#include "harness/kernel.hpp"
#include "harness/noise.hpp"
#include "harness/process.hpp"

namespace harness {

using Rational = boost::multiprecision::cpp_rational;

/// Every finite double is a dyadic rational, so this conversion is exact.
inline Rational to_rational(double x) {
  if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "non-finite value cannot be made rational");
  int exponent = 0;
  const double mantissa = std::frexp(x, &exponent);
  const auto scaled = static_cast<std::int64_t>(std::ldexp(mantissa, 53));
  Rational r(scaled);
  const int shift = exponent - 53;
  if (shift >= 0)
    r *= Rational(boost::multiprecision::cpp_int(1) << shift);
  else
    r /= Rational(boost::multiprecision::cpp_int(1) << -shift);
  return r;
}

inline std::string rational_string(const Rational& r) {
  return boost::multiprecision::numerator(r).str() + (boost::multiprecision::denominator(r) == 1
                                                          ? std::string()
                                                          : "/" + boost::multiprecision::denominator(r).str());
}

struct ExactResult {
  int n = 0;
  Rational mean;
  Rational second_moment;
  /// (value, probability) sorted by value; probabilities sum to exactly 1.
  std::vector<std::pair<Rational, Rational>> distribution;
  std::size_t variables = 0;
  std::uint64_t assignments = 0;

  nlohmann::json to_json() const {
    nlohmann::json dist = nlohmann::json::array();
    for (const auto& [v, p] : distribution)
      dist.push_back({{"value", rational_string(v)},
                      {"value_approx", v.convert_to<double>()},
                      {"probability", rational_string(p)},
                      {"probability_approx", p.convert_to<double>()}});
    return {{"n", n},
            {"mean", rational_string(mean)},
            {"mean_approx", mean.convert_to<double>()},
            {"second_moment", rational_string(second_moment)},
            {"second_moment_approx", second_moment.convert_to<double>()},
            {"variables", variables},
            {"assignments", assignments},
            {"distribution", dist}};
  }
};

struct EnumerationBudget {
  std::size_t max_support = 4;
  std::size_t max_variables = 20;
  std::uint64_t max_assignments = std::uint64_t{1} << 24;
};

namespace detail {

/// Exact-arithmetic evaluation of the process recursion over the dependence
/// cone of the origin, by depth-first enumeration of the noise variables in
/// time order.  Each DFS level fixes one site's noise and immediately
/// evaluates that site's height, since its inputs all live in earlier layers.
class ConeEnumerator {
 public:
  ConeEnumerator(const Kernel& kernel, std::vector<std::pair<Rational, Rational>> support, ProcessKind kind, int n,
                 const Rational& start)
      : support_(std::move(support)), kind_(kind) {
    const int d = kernel.dim();
    // layers[l] = sites whose time-l height can influence the origin at time n.
    std::vector<std::set<Offset>> layers(static_cast<std::size_t>(n) + 1);
    layers[static_cast<std::size_t>(n)].insert(Offset(d, 0));
    for (int l = n; l >= 1; --l) {
      auto& prev = layers[static_cast<std::size_t>(l - 1)];
      for (const auto& j : layers[static_cast<std::size_t>(l)]) {
        for (const auto& e : kernel.entries()) {
          Offset k = j;
          for (int c = 0; c < d; ++c) k[c] += e.offset[c];
          prev.insert(k);
        }
        if (kind == ProcessKind::freeze) prev.insert(j);
      }
    }
    std::vector<std::map<Offset, std::size_t>> ids(layers.size());
    for (const auto& j : layers[0]) {
      ids[0][j] = heights_.size();
      heights_.push_back(start);
    }
    for (std::size_t l = 1; l < layers.size(); ++l) {
      for (const auto& j : layers[l]) {
        Node node;
        node.id = heights_.size();
        for (const auto& e : kernel.entries()) {
          Offset k = j;
          for (int c = 0; c < d; ++c) k[c] += e.offset[c];
          node.inputs.emplace_back(ids[l - 1].at(k), to_rational(e.weight));
        }
        if (kind == ProcessKind::freeze) node.self = ids[l - 1].at(j);
        ids[l][j] = node.id;
        heights_.emplace_back();
        nodes_.push_back(std::move(node));
      }
    }
    origin_ = ids.back().at(Offset(d, 0));
  }

  std::size_t variables() const noexcept { return nodes_.size(); }

  std::map<Rational, Rational> run() {
    law_.clear();
    assignments_ = 0;
    visit(0, Rational(1));
    return law_;
  }

  std::uint64_t assignments() const noexcept { return assignments_; }

 private:
  struct Node {
    std::size_t id = 0;
    std::vector<std::pair<std::size_t, Rational>> inputs;
    std::size_t self = 0;
  };

  void visit(std::size_t depth, const Rational& prob) {
    if (depth == nodes_.size()) {
      law_[heights_[origin_]] += prob;
      ++assignments_;
      return;
    }
    const Node& node = nodes_[depth];
    Rational mean(0);
    for (const auto& [src, w] : node.inputs) mean += w * heights_[src];
    for (const auto& [value, p] : support_) {
      Rational x = mean + value;
      switch (kind_) {
        case ProcessKind::free: break;
        case ProcessKind::clip:
          if (x <= 0) x = 0;
          break;
        case ProcessKind::freeze:
          if (x <= 0) x = heights_[node.self];
          break;
        case ProcessKind::drift:
          if (x <= 0) x = mean;
          break;
      }
      heights_[node.id] = x;
      visit(depth + 1, prob * p);
    }
  }

  std::vector<std::pair<Rational, Rational>> support_;
  ProcessKind kind_;
  std::vector<Node> nodes_;
  std::vector<Rational> heights_;
  std::size_t origin_ = 0;
  std::map<Rational, Rational> law_;
  std::uint64_t assignments_ = 0;
};

}  // namespace detail

/// Exact law of the origin height at time n for finitely supported noise.
inline ExactResult enumerate_exact(const Kernel& kernel, const std::vector<std::pair<double, double>>& noise_support,
                                   ProcessKind kind, int n, double start_height = 0.0,
                                   const EnumerationBudget& budget = {}) {
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "negative time");
  if (!(start_height >= 0.0)) throw Error(ErrorCode::NegativeStart, "start height must be >= 0");
  if (noise_support.empty() || noise_support.size() > budget.max_support)
    throw Error(ErrorCode::TooLarge, "noise support size " + std::to_string(noise_support.size()) + " outside 1.." +
                                         std::to_string(budget.max_support));
  std::vector<std::pair<Rational, Rational>> support;
  Rational total(0);
  for (const auto& [v, p] : noise_support) {
    if (!(p > 0.0)) throw Error(ErrorCode::InvalidParams, "noise atom with non-positive probability");
    support.emplace_back(to_rational(v), to_rational(p));
    total += support.back().second;
  }
  if (total != 1) throw Error(ErrorCode::InvalidParams, "noise atom probabilities do not sum to 1");

  detail::ConeEnumerator en(kernel, std::move(support), kind, n, to_rational(start_height));
  const std::size_t vars = en.variables();
  const double count = std::pow(static_cast<double>(noise_support.size()), static_cast<double>(vars));
  if (vars > budget.max_variables || count > static_cast<double>(budget.max_assignments))
    throw Error(ErrorCode::TooLarge, std::to_string(vars) + " noise variables exceed the enumeration budget");

  ExactResult result;
  result.n = n;
  result.variables = vars;
  for (const auto& [value, p] : en.run()) {
    result.distribution.emplace_back(value, p);
    result.mean += value * p;
    result.second_moment += value * value * p;
  }
  result.assignments = en.assignments();
  return result;
}

inline ExactResult enumerate_exact(const Kernel& kernel, const NoiseModel& noise, ProcessKind kind, int n,
                                   double start_height = 0.0, const EnumerationBudget& budget = {}) {
  const auto atoms = noise.finite_support();
  if (!atoms) throw Error(ErrorCode::InvalidParams, "exact enumeration needs finitely supported noise, got " + noise.to_string());
  return enumerate_exact(kernel, *atoms, kind, n, start_height, budget);
}

}  // namespace harness
